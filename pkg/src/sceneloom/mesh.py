"""Triangle meshes, axis-aligned boxes, poses, and OBJ import/export.

Coordinate convention everywhere: +Z is up, +X is right, -Y is forward,
lengths in meters. A pose applies scale, then rotation (R = Rz @ Ry @ Rx
from per-axis Euler degrees), then translation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMesh

DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box; ``lo <= hi`` componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def from_points(points: np.ndarray) -> "Aabb":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] == 0:
            raise ValueError("cannot build an AABB from zero points")
        return Aabb(pts.min(axis=0), pts.max(axis=0))

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) * 0.5

    @property
    def extents(self) -> np.ndarray:
        return self.hi - self.lo

    def corners(self) -> np.ndarray:
        """All 8 corners, shape (8, 3)."""
        lo, hi = self.lo, self.hi
        return np.array(
            [
                [x, y, z]
                for x in (lo[0], hi[0])
                for y in (lo[1], hi[1])
                for z in (lo[2], hi[2])
            ],
            dtype=np.float64,
        )

    def overlaps(self, other: "Aabb") -> bool:
        """Closed-interval overlap (touching boxes overlap)."""
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))


@dataclass(frozen=True)
class Pose:
    """Scale -> rotate -> translate transform of a mesh into world space."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)


def rotation_matrix(rotation_deg) -> np.ndarray:
    """R = Rz @ Ry @ Rx for Euler angles in degrees (X applied first)."""
    rx, ry, rz = (math.radians(a) for a in rotation_deg)
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=np.float64)
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=np.float64)
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=np.float64)
    return mz @ my @ mx


def transform_points(points: np.ndarray, pose: Pose, extra_scale: float = 1.0) -> np.ndarray:
    """Apply a pose to local points; ``extra_scale`` contracts about the local origin."""
    pts = np.asarray(points, dtype=np.float64)
    s = np.asarray(pose.scale, dtype=np.float64) * extra_scale
    rot = rotation_matrix(pose.rotation_deg)
    return (pts * s) @ rot.T + np.asarray(pose.position, dtype=np.float64)


class TriangleMesh:
    """Indexed triangle soup in local coordinates.

    ``vertices`` is (N, 3) float64, ``triangles`` (M, 3) int32. On
    construction, out-of-range indices raise and near-zero-area triangles
    (area <= 1e-12) are dropped, so downstream collision code can assume
    non-degenerate input.
    """

    def __init__(self, vertices, triangles, clean: bool = True):
        v = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(triangles, dtype=np.int32).reshape(-1, 3))
        if v.shape[0] == 0 or t.shape[0] == 0:
            raise EmptyMesh("mesh has no vertices or no triangles")
        if not np.isfinite(v).all():
            raise EmptyMesh("mesh has non-finite vertices")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise EmptyMesh("triangle index out of range")
        if clean:
            a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
            area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
            keep = area2 > 2.0 * DEGENERATE_AREA
            t = t[keep]
            if t.shape[0] == 0:
                raise EmptyMesh("mesh has only degenerate triangles")
        self.vertices = v
        self.triangles = t

    @property
    def num_triangles(self) -> int:
        return int(self.triangles.shape[0])

    def aabb(self) -> Aabb:
        return Aabb.from_points(self.vertices)

    def triangle_vertices(self) -> np.ndarray:
        """Dense (M, 3, 3) array of triangle corner positions."""
        return self.vertices[self.triangles]

    def recentered(self) -> "TriangleMesh":
        """Copy translated so the local AABB center sits at the origin."""
        box = self.aabb()
        return TriangleMesh(self.vertices - box.center, self.triangles.copy(), clean=False)

    def copy(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.triangles.copy(), clean=False)

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()


def world_aabb(mesh: TriangleMesh, pose: Pose) -> Aabb:
    """World AABB from transforming every vertex (not a box-of-box bound)."""
    return Aabb.from_points(transform_points(mesh.vertices, pose))


# --- OBJ import/export (vertices + faces only, fan triangulation) ---


def parse_obj(text: str) -> TriangleMesh:
    verts: list[tuple[float, float, float]] = []
    tris: list[tuple[int, int, int]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v" and len(parts) >= 4:
            verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
        elif parts[0] == "f" and len(parts) >= 4:
            # face tokens may be v, v/vt, v//vn or v/vt/vn; only v is used
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            for k in range(1, len(idx) - 1):
                tris.append((idx[0], idx[k], idx[k + 1]))
    if not verts or not tris:
        raise EmptyMesh("OBJ contains no usable geometry")
    return TriangleMesh(verts, tris)


def load_obj(path) -> TriangleMesh:
    return parse_obj(Path(path).read_text())


def dump_obj(mesh: TriangleMesh) -> str:
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for a, b, c in mesh.triangles:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    lines.append("")
    return "\n".join(lines)


def save_obj(mesh: TriangleMesh, path) -> None:
    Path(path).write_text(dump_obj(mesh))
