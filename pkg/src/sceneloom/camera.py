"""Orbit camera: preset framing, object focus, and relative orbit/move.

The camera is parametrized as (target, azimuth, elevation, distance) with a
vertical field of view. Azimuth 0 puts the camera on the -Y side looking
toward +Y (scene forward is -Y); azimuth 90 on the +X side. Presets RESET
the orbit; RotateCamera/MoveCamera accumulate until the next preset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import BadDirection, BadZoom, UnknownObject

PRESETS = {
    "Top": (0.0, 90.0),
    "Front": (0.0, 15.0),
    "Side": (90.0, 15.0),
    "Iso": (45.0, 30.0),
}
DIRECTIONS = ("Forward", "Backward", "Left", "Right", "Up", "Down")

DEFAULT_FOV = 50.0
DEFAULT_ASPECT = 4.0 / 3.0
MIN_FRAMING_DISTANCE = 0.5
MIN_DOLLY_DISTANCE = 0.05
ELEVATION_CLAMP = 89.0
FOCUS_PADDING = 1.5


@dataclass(frozen=True)
class CameraState:
    target: tuple[float, float, float]
    azimuth: float
    elevation: float
    distance: float
    fov: float = DEFAULT_FOV

    def to_dict(self) -> dict:
        return {
            "target": list(self.target),
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "distance": self.distance,
            "fov": self.fov,
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraState":
        return CameraState(
            tuple(float(c) for c in d["target"]),
            float(d["azimuth"]),
            float(d["elevation"]),
            float(d["distance"]),
            float(d.get("fov", DEFAULT_FOV)),
        )


class Projected(NamedTuple):
    x: float
    y: float
    depth: float

    @property
    def behind(self) -> bool:
        return self.depth <= 0.0


def _offset_direction(azimuth: float, elevation: float) -> np.ndarray:
    az, el = math.radians(azimuth), math.radians(elevation)
    return np.array(
        [math.sin(az) * math.cos(el), -math.cos(az) * math.cos(el), math.sin(el)],
        dtype=np.float64,
    )


def camera_basis(cam: CameraState):
    """(right, up, forward, position); up vector is +Z, or +Y for the
    straight-down Top view to keep the look-at well defined."""
    d = _offset_direction(cam.azimuth, cam.elevation)
    position = np.asarray(cam.target, dtype=np.float64) + cam.distance * d
    forward = -d
    world_up = np.array([0.0, 1.0, 0.0]) if cam.elevation >= 89.999 else np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return right, up, forward, position


def canonical_view(view) -> str:
    key = str(view).strip().title() if view is not None else "Iso"
    if key not in PRESETS:
        raise ValueError(f"view must be one of Top/Front/Side/Iso, got {view!r}")
    return key


def canonical_direction(direction) -> str:
    key = str(direction).strip().title()
    if key not in DIRECTIONS:
        raise BadDirection(f"direction must be one of {'/'.join(DIRECTIONS)}, got {direction!r}")
    return key


def _fit_distance(corners: np.ndarray, center: np.ndarray,
                  azimuth: float, elevation: float,
                  tan_v: float, tan_h: float) -> float:
    """Smallest distance along the preset view axis at which every corner
    projects inside the frustum."""
    d = _offset_direction(azimuth, elevation)
    forward = -d
    world_up = np.array([0.0, 1.0, 0.0]) if elevation >= 89.999 else np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    rel = corners - center
    along = rel @ d
    need_v = np.abs(rel @ up) / tan_v + along
    need_h = np.abs(rel @ right) / tan_h + along
    return float(max(need_v.max(), need_h.max())) * (1.0 + 1e-9)


def _frame(corners: np.ndarray | None, view: str, zoom: float,
           fov: float, aspect: float, pad: float = 1.0) -> CameraState:
    if zoom is None:
        zoom = 1.0
    zoom = float(zoom)
    if not math.isfinite(zoom) or zoom <= 0:
        raise BadZoom(f"zoom must be > 0, got {zoom!r}")
    view = canonical_view(view)
    azimuth, elevation = PRESETS[view]
    tan_v = math.tan(math.radians(fov) / 2.0)
    tan_h = tan_v * aspect
    if corners is None or corners.shape[0] == 0:
        center = np.zeros(3)
        radius = 1.0
        base = radius / tan_v
    else:
        lo, hi = corners.min(axis=0), corners.max(axis=0)
        center = (lo + hi) * 0.5
        radius = float(np.linalg.norm(corners - center, axis=1).max())
        if radius < 1e-9:
            radius = 1.0
        base = max(radius * pad / tan_v,
                   _fit_distance(corners, center, azimuth, elevation, tan_v, tan_h))
    distance = max(MIN_FRAMING_DISTANCE, zoom * base)
    return CameraState(tuple(float(c) for c in center), azimuth, elevation, distance, fov)


def _scene_corners(scene) -> np.ndarray | None:
    if not scene.objects:
        return None
    return np.concatenate([o.world_aabb().corners() for o in scene.objects], axis=0)


def view_scene(scene, view: str = "Iso", zoom: float = 1.0,
               fov: float = DEFAULT_FOV, aspect: float = DEFAULT_ASPECT) -> CameraState:
    """Preset view framing all objects; clears accumulated orbit/movement."""
    return _frame(_scene_corners(scene), view, zoom, fov, aspect)


def focus_on(scene, target_name: str, view: str = "Iso", zoom: float = 1.0,
             fov: float = DEFAULT_FOV, aspect: float = DEFAULT_ASPECT) -> CameraState:
    """Preset view framing one object, radius padded x1.5 to show its
    surroundings; clears accumulated orbit/movement."""
    if target_name not in scene:
        raise UnknownObject(f"no object named {target_name!r}")
    corners = scene.get(target_name).world_aabb().corners()
    return _frame(corners, view, zoom, fov, aspect, pad=FOCUS_PADDING)


def rotate_camera(cam: CameraState, horizontal_deg: float, vertical_deg: float) -> CameraState:
    """Relative orbit; positive horizontal rotates right, elevation clamps
    to +/-89 degrees."""
    elevation = min(ELEVATION_CLAMP, max(-ELEVATION_CLAMP, cam.elevation + float(vertical_deg)))
    return replace(cam, azimuth=cam.azimuth + float(horizontal_deg), elevation=elevation)


def move_camera(cam: CameraState, direction: str, distance_m: float) -> CameraState:
    """Relative movement along the camera's local axes. Forward/Backward
    dolly the orbit distance (floored at 0.05 m); the rest translate the
    target with the rig."""
    direction = canonical_direction(direction)
    d = float(distance_m)
    if not math.isfinite(d) or d < 0:
        raise ValueError(f"move distance must be >= 0, got {distance_m!r}")
    if direction == "Forward":
        return replace(cam, distance=max(MIN_DOLLY_DISTANCE, cam.distance - d))
    if direction == "Backward":
        return replace(cam, distance=cam.distance + d)
    right, up, _, _ = camera_basis(cam)
    delta = {
        "Left": -right,
        "Right": right,
        "Up": up,
        "Down": -up,
    }[direction] * d
    target = np.asarray(cam.target) + delta
    return replace(cam, target=tuple(float(c) for c in target))


def project(cam: CameraState, point, viewport_w: int, viewport_h: int) -> Projected:
    """Perspective projection to pixel coordinates, origin top-left.

    ``depth`` is the forward distance from the camera; depth <= 0 means the
    point is behind (or at) the camera and x/y are NaN."""
    right, up, forward, position = camera_basis(cam)
    v = np.asarray(point, dtype=np.float64) - position
    depth = float(v @ forward)
    if depth <= 1e-12:
        return Projected(float("nan"), float("nan"), depth)
    tan_v = math.tan(math.radians(cam.fov) / 2.0)
    aspect = viewport_w / viewport_h
    x_ndc = float(v @ right) / (depth * tan_v * aspect)
    y_ndc = float(v @ up) / (depth * tan_v)
    return Projected(
        (0.5 + 0.5 * x_ndc) * viewport_w,
        (0.5 - 0.5 * y_ndc) * viewport_h,
        depth,
    )
