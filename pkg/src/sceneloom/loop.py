"""The closed loop: render -> prompt -> complete -> parse/validate ->
execute -> system messages -> repeat until Finish or the step budget.

Each session owns a directory: session.json (config + status), scene.json
plus meshes, steps/step_<t>.png, assets/ (provider outputs, kept for exact
replay) and trajectory.jsonl (one hash-chained record per step). With a
replay/scripted gateway and the procedural provider the whole run is
bit-deterministic.
"""
from __future__ import annotations

import hashlib
import json
import re
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .actions import execute_batch, parse_response, validate_batch
from .camera import DEFAULT_FOV, CameraState, view_scene
from .collision import detect_collisions
from .errors import GatewayError, ParseError, SessionAborted
from .gateway import ChatMessage, ImagePart, TextPart, gateway_from_config, text_message
from .assets import provider_from_config
from .prompts import SYSTEM_PROMPT, build_user_prompt
from .render import Image, RenderOptions, render
from .scene import Scene, TextureImage, load_scene, save_scene

RUNNING = "running"
PAUSED = "paused"
FINISHED = "finished"
EXHAUSTED = "exhausted"
ABORTED = "aborted"

GENESIS_HASH = "0" * 64


@dataclass
class SystemMessage:
    origin: str  # collision | batch_rejected | provider_failure | user_edit | parse_failure | warning
    text: str
    created_at_step: int

    def to_dict(self) -> dict:
        return {"origin": self.origin, "text": self.text, "created_at_step": self.created_at_step}

    @staticmethod
    def from_dict(d: dict) -> "SystemMessage":
        return SystemMessage(d["origin"], d["text"], d["created_at_step"])


@dataclass
class SessionConfig:
    max_steps: int = 20
    margin: float = 1e-4
    visual_prompting: bool = True
    collision_check: bool = True
    width: int = 1024
    height: int = 768
    fov: float = DEFAULT_FOV
    gateway: dict = field(default_factory=lambda: {"kind": "scripted", "policy": "grid-layout"})
    assets: dict = field(default_factory=lambda: {"kind": "procedural"})

    def to_dict(self) -> dict:
        return {
            "max_steps": self.max_steps,
            "margin": self.margin,
            "visual_prompting": self.visual_prompting,
            "collision_check": self.collision_check,
            "width": self.width,
            "height": self.height,
            "fov": self.fov,
            "gateway": dict(self.gateway),
            "assets": dict(self.assets),
        }

    @staticmethod
    def from_dict(d: dict) -> "SessionConfig":
        base = SessionConfig()
        for key, value in d.items():
            if not hasattr(base, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(base, key, value)
        if base.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        return base


def format_action(wire: dict) -> str:
    args = ", ".join(json.dumps(a) for a in wire["args"])
    return f"{wire['type']}({args})"


def summarize_actions(history: list[dict]) -> str:
    """One deterministic line per past step for the prompt."""
    if not history:
        return "none yet"
    lines = []
    for rec in history:
        t = rec["t"]
        if rec.get("parse_error"):
            kind = rec["parse_error"]["kind"]
            lines.append(f"Step {t}: (unparseable response) [rejected: {kind}]")
            continue
        acts = ", ".join(format_action(w) for w in rec["actions"])
        verdict = rec["verdict"]
        if verdict and not verdict["accepted"]:
            lines.append(f"Step {t}: {acts} [rejected: {verdict['rejection_reason']}]")
        else:
            lines.append(f"Step {t}: {acts}")
    return "\n".join(lines)


def format_system_messages(pending: list[SystemMessage]) -> str:
    if not pending:
        return "none"
    return "\n".join(f"- [{m.origin}] {m.text}" for m in pending)


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_\-]", "_", name) or "object"


class Session:
    """One end-to-end generation run over an owned scene and camera."""

    def __init__(self, session_id: str, instruction: str, config: SessionConfig,
                 directory: Path):
        if not instruction:
            raise ValueError("instruction must be non-empty")
        self.id = session_id
        self.instruction = instruction
        self.config = config
        self.directory = Path(directory)
        self.scene = Scene()
        self.camera: CameraState = view_scene(
            self.scene, "Iso", 1.0, config.fov, config.width / config.height
        )
        self.t = 0
        self.max_steps = config.max_steps
        self.base_max_steps = config.max_steps
        self.status = RUNNING
        self.pending: list[SystemMessage] = []
        self.history: list[dict] = []
        self.last_error: str | None = None
        self.created_at: str = ""
        self._listeners: list = []
        self._gateway = gateway_from_config(config.gateway)
        self._assets = provider_from_config(config.assets)

    # --- construction -------------------------------------------------------

    @staticmethod
    def create(instruction: str, config: SessionConfig | None = None,
               directory=None, session_id: str | None = None) -> "Session":
        import datetime

        config = config or SessionConfig()
        session_id = session_id or uuid.uuid4().hex[:12]
        directory = Path(directory) if directory else Path("sessions") / session_id
        session = Session(session_id, instruction, config, directory)
        session.created_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
        session.directory.mkdir(parents=True, exist_ok=True)
        (session.directory / "steps").mkdir(exist_ok=True)
        (session.directory / "assets").mkdir(exist_ok=True)
        session.save()
        return session

    @staticmethod
    def load(directory) -> "Session":
        directory = Path(directory)
        doc = json.loads((directory / "session.json").read_text())
        config = SessionConfig.from_dict(doc["config"])
        session = Session(doc["id"], doc["instruction"], config, directory)
        session.t = doc["t"]
        session.max_steps = doc["max_steps"]
        session.base_max_steps = doc["base_max_steps"]
        session.status = doc["status"]
        session.created_at = doc.get("created_at", "")
        session.pending = [SystemMessage.from_dict(m) for m in doc.get("pending", [])]
        session.camera = CameraState.from_dict(doc["camera"])
        scene_file = directory / "scene.json"
        if scene_file.exists():
            session.scene = load_scene(scene_file)
        trajectory = directory / "trajectory.jsonl"
        if trajectory.exists():
            for line in trajectory.read_text().splitlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    session.history.append(json.loads(line))
                except json.JSONDecodeError:
                    break  # torn final line from a crash
        # replay/scripted gateways advance one response per step taken
        session._gateway = gateway_from_config(config.gateway, start_index=session.t)
        return session

    # --- events ---------------------------------------------------------------

    def add_listener(self, fn) -> None:
        self._listeners.append(fn)

    def _emit(self, kind: str, payload: dict) -> None:
        for fn in self._listeners:
            fn(kind, payload)

    # --- persistence ------------------------------------------------------------

    def save(self) -> None:
        doc = {
            "id": self.id,
            "instruction": self.instruction,
            "status": self.status,
            "t": self.t,
            "max_steps": self.max_steps,
            "base_max_steps": self.base_max_steps,
            "created_at": self.created_at,
            "config": self.config.to_dict(),
            "camera": self.camera.to_dict(),
            "pending": [m.to_dict() for m in self.pending],
        }
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / "session.json").write_text(json.dumps(doc, indent=2))
        save_scene(self.scene, self.directory)

    def _set_status(self, status: str) -> None:
        if status != self.status:
            self.status = status
            self._emit("status_changed", {"status": status, "step": self.t})

    # --- prompt assembly ----------------------------------------------------------

    def assemble_prompt(self, png: bytes) -> tuple[list[ChatMessage], str]:
        """Messages for the gateway; the user prompt is a pure function of
        (instruction, action history, scene summary, pending messages)."""
        prompt = build_user_prompt(
            self.instruction,
            summarize_actions(self.history),
            self.scene.summary_json(),
            format_system_messages(self.pending),
        )
        messages = [
            text_message("system", SYSTEM_PROMPT),
            ChatMessage("user", (ImagePart(png), TextPart(prompt))),
        ]
        return messages, prompt

    def _enqueue(self, origin: str, text: str, step: int,
                 emitted: list[SystemMessage]) -> None:
        msg = SystemMessage(origin, text, step)
        self.pending.append(msg)
        emitted.append(msg)
        self._emit("system_message", {"origin": origin, "text": text, "step": step})

    # --- the loop -------------------------------------------------------------

    def step(self) -> None:
        """Advance one step; on gateway failure the session pauses with no
        state change."""
        if self.status != RUNNING:
            raise RuntimeError(f"cannot step a session in status {self.status!r}")
        t = self.t + 1
        self._emit("step_started", {"step": t})

        opts = RenderOptions(
            width=self.config.width,
            height=self.config.height,
            visual_prompting=self.config.visual_prompting,
        )
        png = render(self.scene, self.camera, opts).to_png_bytes()
        image_ref = f"steps/step_{t}.png"
        (self.directory / "steps").mkdir(parents=True, exist_ok=True)
        (self.directory / image_ref).write_bytes(png)
        self._emit("image_ready", {"step": t, "image": image_ref})

        messages, prompt = self.assemble_prompt(png)
        try:
            response = self._gateway.complete(messages)
        except GatewayError as exc:
            self.last_error = str(exc)
            self._set_status(PAUSED)
            self.save()
            return
        self._emit("response_received", {"step": t, "response": response})
        self.pending = []  # delivered in the prompt that just succeeded

        emitted: list[SystemMessage] = []
        record: dict = {
            "t": t,
            "image": image_ref,
            "prompt": prompt,
            "response": response,
            "parse_error": None,
            "reason": None,
            "actions": None,
            "verdict": None,
            "executed": [],
        }
        finished = False
        try:
            batch = parse_response(response)
        except ParseError as exc:
            record["parse_error"] = {"kind": exc.kind, "message": str(exc)}
            self._enqueue("parse_failure", f"action parse failure ({exc.kind}): {exc}", t, emitted)
        else:
            from .actions import action_to_wire

            record["reason"] = batch.reason
            record["actions"] = [action_to_wire(a) for a in batch.actions]
            verdict = validate_batch(batch, self.scene)
            record["verdict"] = {
                "accepted": verdict.accepted,
                "rejection_reason": verdict.rejection_reason,
                "warnings": list(verdict.warnings),
            }
            if not verdict.accepted:
                self._enqueue(
                    "batch_rejected",
                    f"action batch rejected: {verdict.rejection_reason}", t, emitted,
                )
                self._emit("batch_rejected", {"step": t, "reason": verdict.rejection_reason})
            else:
                result = execute_batch(
                    self.scene, self.camera, batch, self._assets,
                    fov=self.config.fov, aspect=self.config.width / self.config.height,
                )
                self.camera = result.camera
                record["executed"] = self._persist_executed(result.executed, t)
                for origin, text in result.messages:
                    self._enqueue(origin, text, t, emitted)
                for warning in verdict.warnings:
                    self._enqueue("warning", warning, t, emitted)
                if self.config.collision_check:
                    pairs = detect_collisions(self.scene, self.config.margin)
                    if pairs:
                        listing = "; ".join(f"{a} <-> {b}" for a, b in pairs)
                        self._enqueue(
                            "collision", f"collision detected between: {listing}", t, emitted
                        )
                self._emit(
                    "batch_executed",
                    {"step": t, "actions": record["actions"],
                     "warnings": list(verdict.warnings)},
                )
                finished = result.finished

        record["messages"] = [m.to_dict() for m in emitted]
        record["camera"] = self.camera.to_dict()
        record["scene_hash"] = self.scene.content_hash()
        record["prev_hash"] = self.history[-1]["hash"] if self.history else GENESIS_HASH
        record["hash"] = chain_hash(record)
        self.history.append(record)
        with open(self.directory / "trajectory.jsonl", "a") as fh:
            fh.write(json.dumps(record) + "\n")

        self.t = t
        if finished:
            self._set_status(FINISHED)
        elif t >= self.max_steps:
            self._set_status(EXHAUSTED)
        self.save()

    def _persist_executed(self, executed, t: int) -> list[dict]:
        out = []
        assets_dir = self.directory / "assets"
        assets_dir.mkdir(parents=True, exist_ok=True)
        for ex in executed:
            from .actions import action_to_wire

            entry: dict = {"action": action_to_wire(ex.action), "ok": ex.ok}
            if ex.detail:
                entry["detail"] = ex.detail
            if ex.created_mesh is not None:
                from .mesh import save_obj

                ref = f"assets/step_{t}_{_sanitize(getattr(ex.action, 'name', 'asset'))}.obj"
                save_obj(ex.created_mesh, self.directory / ref)
                entry["asset_ref"] = ref
            if ex.created_texture is not None:
                from .render import encode_png

                ref = f"assets/step_{t}_floor.png"
                (self.directory / ref).write_bytes(encode_png(ex.created_texture.pixels))
                entry["texture_ref"] = ref
                entry["texture_tile_m"] = ex.created_texture.tile_m
            out.append(entry)
        return out

    def run(self) -> "Session":
        """Iterate until finished/exhausted/paused/aborted."""
        while self.status == RUNNING:
            self.step()
        return self

    def resume(self) -> None:
        if self.status == PAUSED:
            self._set_status(RUNNING)
            self.save()

    def abort(self) -> None:
        if self.status != ABORTED:
            self._set_status(ABORTED)
            self.save()

    def inject_user_message(self, text: str) -> int:
        """Queue a user edit for the next assembled prompt. Finished and
        exhausted sessions re-open with +floor(T_M/2) extra budget. Returns
        the step at which delivery will happen."""
        if self.status == ABORTED:
            raise SessionAborted(f"session {self.id} is aborted")
        if self.status in (FINISHED, EXHAUSTED):
            self.max_steps += self.base_max_steps // 2
            self._set_status(RUNNING)
        msg = SystemMessage("user_edit", text, self.t)
        self.pending.append(msg)
        self._emit("system_message", {"origin": "user_edit", "text": text, "step": self.t})
        self.save()
        return self.t + 1


def chain_hash(record: dict) -> str:
    base = {k: v for k, v in record.items() if k != "hash"}
    payload = record.get("prev_hash", GENESIS_HASH) + json.dumps(base, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def verify_chain(records: list[dict]) -> bool:
    prev = GENESIS_HASH
    for rec in records:
        if rec.get("prev_hash") != prev or chain_hash(rec) != rec.get("hash"):
            return False
        prev = rec["hash"]
    return True


# --- trajectory replay --------------------------------------------------------


@dataclass
class ReplayReport:
    steps: int
    final_hash: str
    expected_hash: str
    mismatched_steps: list[int]

    @property
    def ok(self) -> bool:
        return self.final_hash == self.expected_hash and not self.mismatched_steps


def replay_trajectory(trajectory_path, strict_chain: bool = True) -> tuple[Scene, ReplayReport]:
    """Re-execute the recorded object/floor actions against a fresh scene
    and compare hashes. Camera actions cannot affect the scene hash and are
    skipped. Create/GenerateFloorTexture re-use the recorded provider
    outputs under assets/ so replay is exact for any provider."""
    from .mesh import load_obj
    from .render import decode_png

    path = Path(trajectory_path)
    base = path.parent
    records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if strict_chain and not verify_chain(records):
        raise ValueError("trajectory hash chain does not verify")

    from .assets import ProceduralAssetProvider

    fallback = ProceduralAssetProvider()
    scene = Scene()
    mismatched = []
    for rec in records:
        for entry in rec.get("executed", []):
            if not entry["ok"]:
                continue
            wire = entry["action"]
            kind, args = wire["type"], wire["args"]
            if kind == "Create":
                ref = entry.get("asset_ref")
                if ref and (base / ref).exists():
                    mesh = load_obj(base / ref)
                else:
                    from .assets import AssetRequest

                    mesh = fallback.generate_asset(AssetRequest(args[0], args[1]))
                scene.add_object(args[0], mesh)
            elif kind == "Duplicate":
                scene.duplicate(args[0], args[1])
            elif kind == "Delete":
                scene.delete(args[0])
            elif kind == "Translate":
                scene.translate(args[0], args[1], args[2])
            elif kind == "Place":
                scene.place(args[0], args[1])
            elif kind == "Rotate":
                scene.rotate(args[0], args[1], args[2])
            elif kind == "Scale":
                scene.set_scale(args[0], args[1])
            elif kind == "GenerateFloorTexture":
                ref = entry.get("texture_ref")
                if ref and (base / ref).exists():
                    pixels = decode_png((base / ref).read_bytes())
                    scene.floor_texture = TextureImage(pixels, entry.get("texture_tile_m", 2.0))
                else:
                    scene.floor_texture = fallback.generate_floor_texture(args[0])
        if scene.content_hash() != rec["scene_hash"]:
            mismatched.append(rec["t"])
    final = scene.content_hash()
    expected = records[-1]["scene_hash"] if records else final
    return scene, ReplayReport(len(records), final, expected, mismatched)
