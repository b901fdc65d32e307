"""Action batch protocol: parse model responses, validate, execute.

Responses follow the Reason/Action format: free-text reasoning after
"Reason:", then a fenced JSON list of {"type": ..., "args": [...]} objects
after "Action:". Validation is all-or-nothing (a rejected batch leaves
scene and camera untouched); execution applies actions in order, and
provider failures at runtime skip just that action.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from . import camera as cam_mod
from .assets import AssetRequest
from .errors import ParseError, ProviderError, SceneError
from .scene import AXES, Scene

VIEWS = ("Top", "Front", "Side", "Iso")


@dataclass(frozen=True)
class Create:
    name: str
    description: str


@dataclass(frozen=True)
class Duplicate:
    name: str
    count: int


@dataclass(frozen=True)
class Delete:
    name: str


@dataclass(frozen=True)
class Translate:
    name: str
    axis: str
    distance: float


@dataclass(frozen=True)
class Place:
    name: str
    position: tuple[float, float, float]


@dataclass(frozen=True)
class Rotate:
    name: str
    axis: str
    angle_degrees: float


@dataclass(frozen=True)
class Scale:
    name: str
    value: float | tuple[float, float, float]


@dataclass(frozen=True)
class ViewScene:
    view: str = "Iso"
    zoom: float = 1.0


@dataclass(frozen=True)
class FocusOn:
    target: str
    view: str = "Iso"
    zoom: float = 1.0


@dataclass(frozen=True)
class RotateCamera:
    horizontal: float
    vertical: float


@dataclass(frozen=True)
class MoveCamera:
    direction: str
    distance: float


@dataclass(frozen=True)
class GenerateFloorTexture:
    description: str


@dataclass(frozen=True)
class Finish:
    pass


Action = (
    Create | Duplicate | Delete | Translate | Place | Rotate | Scale
    | ViewScene | FocusOn | RotateCamera | MoveCamera | GenerateFloorTexture | Finish
)

CREATION_TYPES = (Create, Duplicate)
OBJECT_TYPES = (Create, Duplicate, Delete, Translate, Place, Rotate, Scale)


@dataclass(frozen=True)
class ActionBatch:
    reason: str
    actions: tuple[Action, ...]


@dataclass
class ValidationVerdict:
    accepted: bool
    rejection_reason: str | None = None
    warnings: list[str] | None = None

    def __post_init__(self):
        if self.warnings is None:
            self.warnings = []
        if not self.accepted and not self.rejection_reason:
            raise ValueError("a rejected verdict needs a reason")


# --- wire form ---------------------------------------------------------------


def _num(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError("ArityMismatch", f"{what} must be a number, got {value!r}")
    return float(value)


def _text(value, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise ParseError("ArityMismatch", f"{what} must be a non-empty string, got {value!r}")
    return value


def _vec3(value, what: str) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ParseError("ArityMismatch", f"{what} must be a list of three numbers, got {value!r}")
    return tuple(_num(v, what) for v in value)


def action_from_wire(doc) -> Action:
    if not isinstance(doc, dict) or "type" not in doc:
        raise ParseError("MalformedJson", f"action entries need a 'type' key, got {doc!r}")
    kind = doc["type"]
    args = doc.get("args", [])
    if not isinstance(args, list):
        raise ParseError("MalformedJson", f"'args' must be a list, got {args!r}")

    def arity(lo: int, hi: int | None = None):
        hi = lo if hi is None else hi
        if not (lo <= len(args) <= hi):
            want = str(lo) if lo == hi else f"{lo}..{hi}"
            raise ParseError(
                "ArityMismatch", f"{kind} expects {want} argument(s), got {len(args)}"
            )

    if kind == "Create":
        arity(2)
        return Create(_text(args[0], "name"), _text(args[1], "description"))
    if kind == "Duplicate":
        arity(2)
        count = args[1]
        if isinstance(count, bool) or not isinstance(count, int):
            raise ParseError("ArityMismatch", f"count must be an integer, got {count!r}")
        return Duplicate(_text(args[0], "name"), count)
    if kind == "Delete":
        arity(1)
        return Delete(_text(args[0], "name"))
    if kind == "Translate":
        arity(3)
        return Translate(_text(args[0], "name"), _text(args[1], "axis").upper(),
                         _num(args[2], "distance"))
    if kind == "Place":
        arity(2)
        return Place(_text(args[0], "name"), _vec3(args[1], "position"))
    if kind == "Rotate":
        arity(3)
        return Rotate(_text(args[0], "name"), _text(args[1], "axis").upper(),
                      _num(args[2], "angle_degrees"))
    if kind == "Scale":
        arity(2)
        value = args[1]
        if isinstance(value, (list, tuple)):
            return Scale(_text(args[0], "name"), _vec3(value, "scale"))
        return Scale(_text(args[0], "name"), _num(value, "scale"))
    if kind == "ViewScene":
        arity(0, 2)
        view = _text(args[0], "view").title() if len(args) >= 1 else "Iso"
        zoom = _num(args[1], "zoom") if len(args) >= 2 else 1.0
        return ViewScene(view, zoom)
    if kind == "FocusOn":
        arity(1, 3)
        view = _text(args[1], "view").title() if len(args) >= 2 else "Iso"
        zoom = _num(args[2], "zoom") if len(args) >= 3 else 1.0
        return FocusOn(_text(args[0], "target"), view, zoom)
    if kind == "RotateCamera":
        arity(2)
        return RotateCamera(_num(args[0], "horizontal"), _num(args[1], "vertical"))
    if kind == "MoveCamera":
        arity(2)
        return MoveCamera(_text(args[0], "direction").title(), _num(args[1], "distance"))
    if kind == "GenerateFloorTexture":
        arity(1)
        return GenerateFloorTexture(_text(args[0], "description"))
    if kind == "Finish":
        arity(0)
        return Finish()
    raise ParseError("UnknownActionType", f"unknown action type {kind!r}")


def action_to_wire(action: Action) -> dict:
    if isinstance(action, Create):
        args = [action.name, action.description]
    elif isinstance(action, Duplicate):
        args = [action.name, action.count]
    elif isinstance(action, Delete):
        args = [action.name]
    elif isinstance(action, Translate):
        args = [action.name, action.axis, action.distance]
    elif isinstance(action, Place):
        args = [action.name, list(action.position)]
    elif isinstance(action, Rotate):
        args = [action.name, action.axis, action.angle_degrees]
    elif isinstance(action, Scale):
        value = list(action.value) if isinstance(action.value, tuple) else action.value
        args = [action.name, value]
    elif isinstance(action, ViewScene):
        args = [action.view, action.zoom]
    elif isinstance(action, FocusOn):
        args = [action.target, action.view, action.zoom]
    elif isinstance(action, RotateCamera):
        args = [action.horizontal, action.vertical]
    elif isinstance(action, MoveCamera):
        args = [action.direction, action.distance]
    elif isinstance(action, GenerateFloorTexture):
        args = [action.description]
    elif isinstance(action, Finish):
        args = []
    else:
        raise TypeError(f"not an action: {action!r}")
    return {"type": type(action).__name__, "args": args}


# --- parsing -----------------------------------------------------------------

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_response(text: str) -> ActionBatch:
    """Extract the reasoning and the first fenced JSON action list."""
    marker = text.find("Action:")
    if marker < 0:
        raise ParseError("NoActionBlock", "response has no 'Action:' section")
    reason = ""
    rm = text.find("Reason:")
    if 0 <= rm < marker:
        reason = text[rm + len("Reason:"):marker].strip()
    fence = _FENCE.search(text, marker)
    if fence is None:
        raise ParseError("NoActionBlock", "no fenced JSON block after 'Action:'")
    try:
        doc = json.loads(fence.group(1).strip())
    except json.JSONDecodeError as exc:
        raise ParseError("MalformedJson", f"invalid JSON in action block: {exc}") from exc
    if not isinstance(doc, list):
        raise ParseError("MalformedJson", "action block must be a JSON list")
    if not doc:
        raise ParseError("MalformedJson", "action list is empty")
    return ActionBatch(reason, tuple(action_from_wire(entry) for entry in doc))


# --- validation --------------------------------------------------------------

MAX_TOUCHED_OBJECTS = 3


def validate_batch(batch: ActionBatch, scene: Scene) -> ValidationVerdict:
    """Check a parsed batch against the scene without executing anything."""
    actions = batch.actions
    creation = [a for a in actions if isinstance(a, CREATION_TYPES)]
    if creation and len(creation) != len(actions):
        return ValidationVerdict(
            False,
            "Create/Duplicate must be executed in a separate batch, not mixed "
            "with other actions",
        )
    if any(isinstance(a, Finish) for a in actions) and len(actions) > 1:
        return ValidationVerdict(False, "Finish must be called as a single batch")

    known = set(scene.names())
    touched: set[str] = set()
    for a in actions:
        problem = _domain_problem(a, known)
        if problem:
            return ValidationVerdict(False, problem)
        if isinstance(a, Create):
            known.add(a.name)
            touched.add(a.name)
        elif isinstance(a, OBJECT_TYPES):
            touched.add(a.name)

    warnings = []
    if len(touched) > MAX_TOUCHED_OBJECTS:
        warnings.append(
            f"batch touches {len(touched)} distinct objects; prefer at most "
            f"{MAX_TOUCHED_OBJECTS} per batch"
        )
    return ValidationVerdict(True, warnings=warnings)


def _finite(*values) -> bool:
    return all(math.isfinite(v) for v in values)


def _domain_problem(a: Action, known: set[str]) -> str | None:
    if isinstance(a, Create):
        if a.name in known:
            return f"Create name {a.name!r} already exists"
        return None
    if isinstance(a, OBJECT_TYPES) and a.name not in known:
        return f"unknown object {a.name!r}"
    if isinstance(a, (Translate, Rotate)):
        if a.axis not in AXES:
            return f"bad axis {a.axis!r} (expected X, Y or Z)"
        value = a.distance if isinstance(a, Translate) else a.angle_degrees
        if not _finite(value):
            return f"non-finite argument in {type(a).__name__}"
    elif isinstance(a, Place):
        if not _finite(*a.position):
            return "Place position must be finite"
    elif isinstance(a, Scale):
        values = a.value if isinstance(a.value, tuple) else (a.value,)
        if not _finite(*values) or any(v <= 0 for v in values):
            return f"scale must be > 0, got {a.value!r}"
    elif isinstance(a, Duplicate):
        if a.count < 1:
            return f"duplicate count must be >= 1, got {a.count}"
    elif isinstance(a, (ViewScene, FocusOn)):
        if a.view not in VIEWS:
            return f"bad view {a.view!r} (expected Top, Front, Side or Iso)"
        if not _finite(a.zoom) or a.zoom <= 0:
            return f"zoom must be > 0, got {a.zoom!r}"
        if isinstance(a, FocusOn) and a.target not in known:
            return f"unknown object {a.target!r}"
    elif isinstance(a, RotateCamera):
        if not _finite(a.horizontal, a.vertical):
            return "RotateCamera angles must be finite"
    elif isinstance(a, MoveCamera):
        if a.direction not in cam_mod.DIRECTIONS:
            return f"bad direction {a.direction!r}"
        if not _finite(a.distance) or a.distance < 0:
            return f"move distance must be >= 0, got {a.distance!r}"
    return None


# --- execution ---------------------------------------------------------------


@dataclass
class ExecutedAction:
    action: Action
    ok: bool
    detail: str | None = None
    # transient payloads for the session layer to persist
    created_mesh: object = None
    created_texture: object = None


@dataclass
class ExecutionResult:
    camera: cam_mod.CameraState
    executed: list[ExecutedAction]
    messages: list[tuple[str, str]]  # (origin, text)
    finished: bool


def execute_batch(scene: Scene, camera: cam_mod.CameraState, batch: ActionBatch,
                  asset_provider, fov: float | None = None,
                  aspect: float = cam_mod.DEFAULT_ASPECT) -> ExecutionResult:
    """Apply an accepted batch in order. Object actions mutate the scene,
    camera actions produce a new camera, Create/GenerateFloorTexture call the
    provider; a provider failure skips that action and surfaces as a system
    message instead of aborting."""
    fov = camera.fov if fov is None else fov
    executed: list[ExecutedAction] = []
    messages: list[tuple[str, str]] = []
    finished = False
    for action in batch.actions:
        try:
            if isinstance(action, Create):
                mesh = asset_provider.generate_asset(AssetRequest(action.name, action.description))
                scene.add_object(action.name, mesh)
                executed.append(ExecutedAction(action, True, created_mesh=mesh))
            elif isinstance(action, Duplicate):
                scene.duplicate(action.name, action.count)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, Delete):
                scene.delete(action.name)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, Translate):
                scene.translate(action.name, action.axis, action.distance)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, Place):
                scene.place(action.name, action.position)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, Rotate):
                scene.rotate(action.name, action.axis, action.angle_degrees)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, Scale):
                scene.set_scale(action.name, action.value)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, ViewScene):
                camera = cam_mod.view_scene(scene, action.view, action.zoom, fov, aspect)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, FocusOn):
                camera = cam_mod.focus_on(scene, action.target, action.view, action.zoom,
                                          fov, aspect)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, RotateCamera):
                camera = cam_mod.rotate_camera(camera, action.horizontal, action.vertical)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, MoveCamera):
                camera = cam_mod.move_camera(camera, action.direction, action.distance)
                executed.append(ExecutedAction(action, True))
            elif isinstance(action, GenerateFloorTexture):
                try:
                    texture = asset_provider.generate_floor_texture(action.description)
                except ProviderError as exc:
                    from .assets import procedural_floor_texture

                    texture = procedural_floor_texture(action.description)
                    messages.append(
                        ("warning",
                         f"floor texture generation failed ({exc}); using fallback checker")
                    )
                scene.floor_texture = texture
                executed.append(ExecutedAction(action, True, created_texture=texture))
            elif isinstance(action, Finish):
                finished = True
                executed.append(ExecutedAction(action, True))
            else:
                raise TypeError(f"unhandled action {action!r}")
        except ProviderError as exc:
            executed.append(ExecutedAction(action, False, detail=str(exc)))
            if isinstance(action, Create):
                messages.append(("provider_failure", f"creation failed: {action.name}: {exc}"))
            else:
                messages.append(("provider_failure", f"action failed: {exc}"))
        except SceneError as exc:
            # only reachable through intra-batch interactions (e.g. Delete
            # then Translate of the same name); skip and report
            executed.append(ExecutedAction(action, False, detail=str(exc)))
            messages.append(("warning", f"{type(action).__name__} skipped: {exc}"))
    return ExecutionResult(camera, executed, messages, finished)
