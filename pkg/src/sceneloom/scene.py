"""Scene state and the object-manipulation semantics of the action API.

A scene owns an ordered collection of named mesh instances. Mutations are
serial (one session owns one scene); every object-mutating operation ends
with an auto-lift pass on the touched objects so nothing sinks below the
floor plane at Z=0.
"""
from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import (
    BadAxis,
    BadCount,
    DuplicateName,
    EmptyMesh,
    NonPositiveScale,
    UnknownObject,
)
from .mesh import Aabb, Pose, TriangleMesh, dump_obj, parse_obj, world_aabb

AXES = ("X", "Y", "Z")

# floor rectangle when the scene is empty, meters
DEFAULT_FLOOR_EXTENT = ((-2.0, -2.0), (2.0, 2.0))
FLOOR_PAD_FACTOR = 1.2


def normalize_angle(deg: float) -> float:
    """Map an angle in degrees into [-180, 180)."""
    a = math.fmod(deg + 180.0, 360.0)
    if a < 0:
        a += 360.0
    return a - 180.0


def _axis_index(axis: str) -> int:
    key = str(axis).strip().upper()
    if key not in AXES:
        raise BadAxis(f"axis must be one of X/Y/Z, got {axis!r}")
    return AXES.index(key)


class TextureImage:
    """RGBA tile with a physical size; floor textures repeat every tile_m meters."""

    def __init__(self, pixels: np.ndarray, tile_m: float = 2.0):
        arr = np.ascontiguousarray(np.asarray(pixels, dtype=np.uint8))
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise ValueError("texture must be HxWx4 RGBA")
        h, w = arr.shape[:2]
        if h & (h - 1) or w & (w - 1) or h == 0 or w == 0:
            raise ValueError("texture dimensions must be powers of two")
        self.pixels = arr
        self.tile_m = float(tile_m)

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.pixels.tobytes())
        h.update(repr(self.tile_m).encode())
        return h.hexdigest()


class SceneObject:
    """Named mesh instance with position/rotation/scale.

    ``position`` is the world location of the local origin; meshes are
    recentered on import so the local origin is the AABB center.
    ``size`` is the local AABB extents times scale and does not change
    under rotation.
    """

    def __init__(self, name: str, mesh: TriangleMesh,
                 position=(0.0, 0.0, 0.0), rotation_deg=(0.0, 0.0, 0.0),
                 scale=(1.0, 1.0, 1.0)):
        if not name or not isinstance(name, str):
            raise ValueError("object name must be a non-empty string")
        self.name = name
        self.mesh = mesh
        self.position = [float(c) for c in position]
        self.rotation_deg = [normalize_angle(float(a)) for a in rotation_deg]
        scale = [float(s) for s in scale]
        if any(s <= 0 for s in scale):
            raise NonPositiveScale(f"scale components must be > 0, got {scale}")
        self.scale = scale

    @property
    def pose(self) -> Pose:
        return Pose(tuple(self.position), tuple(self.rotation_deg), tuple(self.scale))

    @property
    def size(self) -> list[float]:
        ext = self.mesh.aabb().extents
        return [float(e * s) for e, s in zip(ext, self.scale)]

    def world_aabb(self) -> Aabb:
        return world_aabb(self.mesh, self.pose)


class Scene:
    """Ordered collection of SceneObjects plus an optional floor texture."""

    def __init__(self):
        self.objects: list[SceneObject] = []
        self._index: dict[str, SceneObject] = {}
        self.floor_texture: TextureImage | None = None

    # --- lookup ---

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.objects)

    def get(self, name: str) -> SceneObject:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownObject(f"no object named {name!r}") from None

    def names(self) -> list[str]:
        return [o.name for o in self.objects]

    # --- placement helpers ---

    def _stacking_z(self, candidate_aabb_at_zero: Aabb) -> float:
        """Support height for a new object dropped at x=y=0.

        Returns the z of the highest top surface among existing objects
        whose XY AABB strictly overlaps the candidate footprint, else 0.
        """
        lo, hi = candidate_aabb_at_zero.lo, candidate_aabb_at_zero.hi
        support = 0.0
        for obj in self.objects:
            box = obj.world_aabb()
            if box.lo[0] < hi[0] and lo[0] < box.hi[0] and box.lo[1] < hi[1] and lo[1] < box.hi[1]:
                support = max(support, float(box.hi[2]))
        return support

    def _insert_stacked(self, name: str, mesh: TriangleMesh,
                        rotation_deg=(0.0, 0.0, 0.0), scale=(1.0, 1.0, 1.0)) -> SceneObject:
        probe = SceneObject(name, mesh, (0.0, 0.0, 0.0), rotation_deg, scale)
        box0 = probe.world_aabb()
        support = self._stacking_z(box0)
        probe.position[2] = support - float(box0.lo[2])
        self.objects.append(probe)
        self._index[name] = probe
        return probe

    # --- operations ---

    def add_object(self, name: str, mesh: TriangleMesh) -> SceneObject:
        """Add a new object at x=y=0, stacked on whatever sits under it.

        The mesh is recentered so the local AABB center is the origin;
        rotation is identity and scale is one.
        """
        if name in self._index:
            raise DuplicateName(f"object {name!r} already exists")
        if mesh.num_triangles == 0:
            raise EmptyMesh("cannot add an empty mesh")
        return self._insert_stacked(name, mesh.recentered())

    def place(self, name: str, position) -> SceneObject:
        obj = self.get(name)
        pos = [float(c) for c in position]
        if len(pos) != 3 or not all(math.isfinite(c) for c in pos):
            raise ValueError(f"position must be three finite numbers, got {position!r}")
        obj.position = pos
        self.auto_lift(name)
        return obj

    def translate(self, name: str, axis: str, distance: float) -> SceneObject:
        obj = self.get(name)
        idx = _axis_index(axis)
        obj.position[idx] += float(distance)
        self.auto_lift(name)
        return obj

    def rotate(self, name: str, axis: str, angle_degrees: float) -> SceneObject:
        """Absolute set of one Euler angle (degrees); not an increment."""
        obj = self.get(name)
        idx = _axis_index(axis)
        obj.rotation_deg[idx] = normalize_angle(float(angle_degrees))
        self.auto_lift(name)
        return obj

    def set_scale(self, name: str, value) -> SceneObject:
        """Absolute scale; a scalar applies to all three axes."""
        obj = self.get(name)
        if isinstance(value, (int, float)):
            scale = [float(value)] * 3
        else:
            scale = [float(v) for v in value]
            if len(scale) != 3:
                raise NonPositiveScale(f"scale must be a scalar or 3 values, got {value!r}")
        if any((not math.isfinite(s)) or s <= 0 for s in scale):
            raise NonPositiveScale(f"scale components must be > 0, got {scale}")
        obj.scale = scale
        self.auto_lift(name)
        return obj

    def duplicate(self, name: str, count: int) -> list[SceneObject]:
        """Make ``count`` copies named ``name_2``, ``name_3``, ... (first free
        suffix), each dropped at x=y=0 with stacked z, inheriting rotation
        and scale. Copies stack on each other when footprints overlap."""
        obj = self.get(name)
        if not isinstance(count, int) or isinstance(count, bool) or count < 1:
            raise BadCount(f"duplicate count must be an integer >= 1, got {count!r}")
        copies = []
        suffix = 2
        for _ in range(count):
            while f"{name}_{suffix}" in self._index:
                suffix += 1
            copies.append(
                self._insert_stacked(
                    f"{name}_{suffix}", obj.mesh, tuple(obj.rotation_deg), tuple(obj.scale)
                )
            )
            suffix += 1
        return copies

    def delete(self, name: str) -> None:
        obj = self.get(name)
        self.objects.remove(obj)
        del self._index[name]

    def auto_lift(self, name: str) -> float:
        """Lift the object so its world AABB bottom is at z>=0.

        Lift-only: floating objects are never pulled down. Returns the
        applied lift (0 when nothing was needed)."""
        obj = self.get(name)
        min_z = float(obj.world_aabb().lo[2])
        if min_z < 0.0:
            obj.position[2] -= min_z
            return -min_z
        return 0.0

    # --- derived geometry ---

    def floor_extent(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """XY rectangle covering all object footprints, padded 20% about its
        center; a default 4x4 m square for an empty scene."""
        if not self.objects:
            return DEFAULT_FLOOR_EXTENT
        boxes = [o.world_aabb() for o in self.objects]
        lo = np.min([b.lo[:2] for b in boxes], axis=0)
        hi = np.max([b.hi[:2] for b in boxes], axis=0)
        center = (lo + hi) * 0.5
        half = (hi - lo) * 0.5 * FLOOR_PAD_FACTOR
        lo2, hi2 = center - half, center + half
        return ((float(lo2[0]), float(lo2[1])), (float(hi2[0]), float(hi2[1])))

    # --- summaries / serialization ---

    def summary(self) -> list[dict]:
        """Per-object state for the model prompt, rounded to 3 decimals,
        insertion order."""
        def r3(values):
            out = []
            for v in values:
                x = round(float(v), 3)
                if x == 0.0:
                    x = 0.0  # avoid -0.0 in prompts
                out.append(x)
            return out

        return [
            {
                "name": o.name,
                "position": r3(o.position),
                "rotation": r3(o.rotation_deg),
                "scale": r3(o.scale),
                "size": r3(o.size),
            }
            for o in self.objects
        ]

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)

    def content_hash(self) -> str:
        """Hash of the full scene state including mesh and texture content."""
        import hashlib

        doc = {
            "objects": [
                {
                    "name": o.name,
                    "position": o.position,
                    "rotation_deg": o.rotation_deg,
                    "scale": o.scale,
                    "mesh": o.mesh.content_hash(),
                }
                for o in self.objects
            ],
            "floor_texture": self.floor_texture.content_hash() if self.floor_texture else None,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# --- scene file (scene.json + OBJ meshes + optional floor texture PNG) ---


def _safe_filename(name: str, taken: set[str]) -> str:
    base = re.sub(r"[^A-Za-z0-9_\-]", "_", name) or "object"
    candidate = base
    k = 2
    while candidate in taken:
        candidate = f"{base}_{k}"
        k += 1
    taken.add(candidate)
    return candidate


def save_scene(scene: Scene, directory) -> Path:
    """Write scene.json plus meshes/<name>.obj (and floor.png if textured).

    Numbers are serialized with full precision so a load reproduces the
    scene exactly."""
    directory = Path(directory)
    (directory / "meshes").mkdir(parents=True, exist_ok=True)
    taken: set[str] = set()
    entries = []
    for obj in scene.objects:
        fname = _safe_filename(obj.name, taken)
        ref = f"meshes/{fname}.obj"
        (directory / ref).write_text(dump_obj(obj.mesh))
        entries.append(
            {
                "name": obj.name,
                "position": obj.position,
                "rotation_deg": obj.rotation_deg,
                "scale": obj.scale,
                "mesh_ref": ref,
            }
        )
    doc: dict = {"objects": entries, "floor_texture_ref": None}
    if scene.floor_texture is not None:
        from .render import encode_png

        doc["floor_texture_ref"] = "floor.png"
        doc["floor_texture_tile_m"] = scene.floor_texture.tile_m
        (directory / "floor.png").write_bytes(encode_png(scene.floor_texture.pixels))
    path = directory / "scene.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def load_scene(path) -> Scene:
    path = Path(path)
    doc = json.loads(path.read_text())
    scene = Scene()
    for entry in doc["objects"]:
        mesh = parse_obj((path.parent / entry["mesh_ref"]).read_text())
        obj = SceneObject(
            entry["name"],
            mesh,
            entry["position"],
            entry["rotation_deg"],
            entry["scale"],
        )
        scene.objects.append(obj)
        scene._index[obj.name] = obj
    if doc.get("floor_texture_ref"):
        from .render import decode_png

        pixels = decode_png((path.parent / doc["floor_texture_ref"]).read_bytes())
        scene.floor_texture = TextureImage(pixels, doc.get("floor_texture_tile_m", 2.0))
    return scene
