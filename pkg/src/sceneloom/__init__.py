"""sceneloom: deterministic visual-feedback agent engine for 3D scene synthesis."""

from .actions import (
    ActionBatch,
    ValidationVerdict,
    execute_batch,
    parse_response,
    validate_batch,
)
from .camera import CameraState, focus_on, move_camera, project, rotate_camera, view_scene
from .collision import (
    brute_force_collisions,
    build_bvh,
    detect_collisions,
    intersect_meshes,
    tri_tri_intersect,
    world_aabb,
)
from .loop import Session, SessionConfig, replay_trajectory
from .mesh import Aabb, Pose, TriangleMesh, load_obj, save_obj
from .render import Image, RenderOptions, render
from .scene import Scene, SceneObject, TextureImage, load_scene, save_scene

__version__ = "0.1.0"

__all__ = [
    "ActionBatch",
    "ValidationVerdict",
    "execute_batch",
    "parse_response",
    "validate_batch",
    "CameraState",
    "view_scene",
    "focus_on",
    "rotate_camera",
    "move_camera",
    "project",
    "build_bvh",
    "tri_tri_intersect",
    "intersect_meshes",
    "detect_collisions",
    "brute_force_collisions",
    "world_aabb",
    "Session",
    "SessionConfig",
    "replay_trajectory",
    "Aabb",
    "Pose",
    "TriangleMesh",
    "load_obj",
    "save_obj",
    "Image",
    "RenderOptions",
    "render",
    "Scene",
    "SceneObject",
    "TextureImage",
    "load_scene",
    "save_scene",
    "__version__",
]
