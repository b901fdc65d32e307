"""Mesh collision detection: BVH mid phase + triangle narrow phase.

Two independent routes are provided on purpose:

* ``detect_collisions`` — broad-phase world AABBs, dual-BVH descent,
  interval-based triangle test (plane distances + projection intervals).
* ``brute_force_collisions`` — every triangle pair, no BVH, vectorized
  17-axis separating-axis test.

Both use closed-triangle semantics (touching counts as intersecting); the
contraction margin is what keeps exactly-touching stacked objects from
reporting collisions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMesh
from .mesh import Aabb, Pose, TriangleMesh, transform_points, world_aabb

__all__ = [
    "Bvh",
    "build_bvh",
    "tri_tri_intersect",
    "sat_tri_tri_many",
    "intersect_meshes",
    "detect_collisions",
    "brute_force_collisions",
    "world_aabb",
    "DEFAULT_MARGIN",
]

LEAF_SIZE = 4
DEFAULT_MARGIN = 1e-4


# --- BVH -------------------------------------------------------------------


@dataclass
class BvhNode:
    lo: np.ndarray
    hi: np.ndarray
    left: int = -1
    right: int = -1
    tri_indices: np.ndarray | None = None  # leaves only

    @property
    def is_leaf(self) -> bool:
        return self.tri_indices is not None


class Bvh:
    """Median-split BVH over triangles; leaves hold <= LEAF_SIZE indices."""

    def __init__(self, tri_verts: np.ndarray):
        if tri_verts.shape[0] == 0:
            raise EmptyMesh("cannot build a BVH over zero triangles")
        self.tri_verts = tri_verts  # (M, 3, 3)
        self.nodes: list[BvhNode] = []
        centroids = tri_verts.mean(axis=1)
        tri_lo = tri_verts.min(axis=1)
        tri_hi = tri_verts.max(axis=1)
        self.root = self._build(np.arange(tri_verts.shape[0]), centroids, tri_lo, tri_hi)

    def _build(self, idx: np.ndarray, centroids, tri_lo, tri_hi) -> int:
        lo = tri_lo[idx].min(axis=0)
        hi = tri_hi[idx].max(axis=0)
        node_id = len(self.nodes)
        if idx.shape[0] <= LEAF_SIZE:
            self.nodes.append(BvhNode(lo, hi, tri_indices=idx))
            return node_id
        self.nodes.append(BvhNode(lo, hi))
        cen = centroids[idx]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        order = np.argsort(cen[:, axis], kind="stable")
        half = idx.shape[0] // 2
        left = self._build(idx[order[:half]], centroids, tri_lo, tri_hi)
        right = self._build(idx[order[half:]], centroids, tri_lo, tri_hi)
        self.nodes[node_id].left = left
        self.nodes[node_id].right = right
        return node_id

    def leaf_triangle_sets(self) -> list[np.ndarray]:
        return [n.tri_indices for n in self.nodes if n.is_leaf]


def build_bvh(mesh: TriangleMesh) -> Bvh:
    return Bvh(mesh.triangle_vertices())


def _boxes_overlap(a: BvhNode, b: BvhNode) -> bool:
    return bool(
        a.lo[0] <= b.hi[0] and b.lo[0] <= a.hi[0]
        and a.lo[1] <= b.hi[1] and b.lo[1] <= a.hi[1]
        and a.lo[2] <= b.hi[2] and b.lo[2] <= a.hi[2]
    )


def bvh_candidate_pairs(a: Bvh, b: Bvh):
    """Yield triangle index pairs surviving the dual-BVH descent.

    No pair whose triangle AABBs overlap is ever skipped (node boxes
    contain their triangles, so overlapping descendants keep every
    ancestor pair alive)."""
    stack = [(a.root, b.root)]
    while stack:
        ia, ib = stack.pop()
        na, nb = a.nodes[ia], b.nodes[ib]
        if not _boxes_overlap(na, nb):
            continue
        if na.is_leaf and nb.is_leaf:
            for ta in na.tri_indices:
                for tb in nb.tri_indices:
                    yield int(ta), int(tb)
        elif na.is_leaf:
            stack.append((ia, nb.left))
            stack.append((ia, nb.right))
        elif nb.is_leaf:
            stack.append((na.left, ib))
            stack.append((na.right, ib))
        else:
            stack.append((na.left, nb.left))
            stack.append((na.left, nb.right))
            stack.append((na.right, nb.left))
            stack.append((na.right, nb.right))


# --- scalar narrow phase ---------------------------------------------------
# Interval method: signed distances to the other triangle's plane; if both
# triangles straddle, project the plane crossings onto the dominant axis of
# the plane-intersection line and compare closed intervals. Coplanar pairs
# fall back to a 2D separating-axis test.


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _plane_interval(tri, dists, axis_idx):
    """Closed interval of tri's intersection with the other plane, projected
    on a coordinate axis. Vertices on the plane contribute themselves."""
    lo = hi = None
    for i in range(3):
        j = (i + 1) % 3
        di, dj = dists[i], dists[j]
        if di == 0.0:
            p = tri[i][axis_idx]
            lo = p if lo is None or p < lo else lo
            hi = p if hi is None or p > hi else hi
        if di * dj < 0.0:
            t = di / (di - dj)
            p = tri[i][axis_idx] + t * (tri[j][axis_idx] - tri[i][axis_idx])
            lo = p if lo is None or p < lo else lo
            hi = p if hi is None or p > hi else hi
    return lo, hi


def _coplanar_2d_sat(t1, t2, n):
    # project out the dominant normal axis, then SAT over the 6 edge normals
    k = max(range(3), key=lambda i: abs(n[i]))
    u, v = (k + 1) % 3, (k + 2) % 3
    p1 = [(p[u], p[v]) for p in t1]
    p2 = [(p[u], p[v]) for p in t2]
    for poly in (p1, p2):
        for i in range(3):
            ex = poly[(i + 1) % 3][0] - poly[i][0]
            ey = poly[(i + 1) % 3][1] - poly[i][1]
            ax, ay = -ey, ex
            min1 = min(q[0] * ax + q[1] * ay for q in p1)
            max1 = max(q[0] * ax + q[1] * ay for q in p1)
            min2 = min(q[0] * ax + q[1] * ay for q in p2)
            max2 = max(q[0] * ax + q[1] * ay for q in p2)
            if max1 < min2 or max2 < min1:
                return False
    return True


def tri_tri_intersect(t1, t2) -> bool:
    """True iff the closed triangles intersect (shared points count)."""
    a = tuple(tuple(float(c) for c in p) for p in np.asarray(t1, dtype=np.float64))
    b = tuple(tuple(float(c) for c in p) for p in np.asarray(t2, dtype=np.float64))

    n2 = _cross(_sub(b[1], b[0]), _sub(b[2], b[0]))
    d2 = -_dot(n2, b[0])
    dist1 = tuple(_dot(n2, p) + d2 for p in a)
    if all(d > 0.0 for d in dist1) or all(d < 0.0 for d in dist1):
        return False

    n1 = _cross(_sub(a[1], a[0]), _sub(a[2], a[0]))
    d1 = -_dot(n1, a[0])
    dist2 = tuple(_dot(n1, p) + d1 for p in b)
    if all(d > 0.0 for d in dist2) or all(d < 0.0 for d in dist2):
        return False

    if all(d == 0.0 for d in dist1) and all(d == 0.0 for d in dist2):
        return _coplanar_2d_sat(a, b, n1)

    line = _cross(n1, n2)
    axis_idx = max(range(3), key=lambda i: abs(line[i]))
    lo1, hi1 = _plane_interval(a, dist1, axis_idx)
    lo2, hi2 = _plane_interval(b, dist2, axis_idx)
    if lo1 is None or lo2 is None:
        # one triangle only grazes the other plane without crossing it
        return False
    return hi1 >= lo2 and hi2 >= lo1


# --- vectorized SAT narrow phase (oracle route) ----------------------------


def sat_tri_tri_many(tris1: np.ndarray, tris2: np.ndarray) -> np.ndarray:
    """Closed-triangle intersection over K pairs via separating axes.

    Axis set: both face normals, the 9 edge-edge cross products, and the 6
    in-plane edge normals (needed for coplanar pairs). Near-zero axes carry
    no information and are skipped."""
    t1 = np.asarray(tris1, dtype=np.float64).reshape(-1, 3, 3)
    t2 = np.asarray(tris2, dtype=np.float64).reshape(-1, 3, 3)
    k = t1.shape[0]
    e1 = np.stack([t1[:, 1] - t1[:, 0], t1[:, 2] - t1[:, 1], t1[:, 0] - t1[:, 2]], axis=1)
    e2 = np.stack([t2[:, 1] - t2[:, 0], t2[:, 2] - t2[:, 1], t2[:, 0] - t2[:, 2]], axis=1)
    n1 = np.cross(e1[:, 0], e1[:, 1])
    n2 = np.cross(e2[:, 0], e2[:, 1])

    axes = [n1, n2]
    for i in range(3):
        for j in range(3):
            axes.append(np.cross(e1[:, i], e2[:, j]))
    for i in range(3):
        axes.append(np.cross(e1[:, i], n1))
        axes.append(np.cross(e2[:, i], n2))

    scale = np.maximum(
        np.abs(t1).reshape(k, -1).max(axis=1), np.abs(t2).reshape(k, -1).max(axis=1)
    )
    eps = (1e-12 * np.maximum(scale, 1.0)) ** 2

    separated = np.zeros(k, dtype=bool)
    for axis in axes:
        valid = (axis * axis).sum(axis=1) > eps
        p1 = np.einsum("kij,kj->ki", t1, axis)
        p2 = np.einsum("kij,kj->ki", t2, axis)
        apart = (p1.max(axis=1) < p2.min(axis=1)) | (p2.max(axis=1) < p1.min(axis=1))
        separated |= valid & apart
    return ~separated


# --- mesh-level checks ------------------------------------------------------


def _contracted_world_tris(mesh: TriangleMesh, pose: Pose, margin: float) -> np.ndarray:
    verts = transform_points(mesh.vertices, pose, extra_scale=1.0 - margin)
    return verts[mesh.triangles]


def intersect_meshes(mesh_a: TriangleMesh, pose_a: Pose,
                     mesh_b: TriangleMesh, pose_b: Pose,
                     margin: float = DEFAULT_MARGIN) -> bool:
    """True iff any triangle pair intersects after contracting each mesh by
    (1 - margin) about its local origin."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    ta = _contracted_world_tris(mesh_a, pose_a, margin)
    tb = _contracted_world_tris(mesh_b, pose_b, margin)
    box_a = Aabb(ta.reshape(-1, 3).min(axis=0), ta.reshape(-1, 3).max(axis=0))
    box_b = Aabb(tb.reshape(-1, 3).min(axis=0), tb.reshape(-1, 3).max(axis=0))
    if not box_a.overlaps(box_b):
        return False
    bvh_a, bvh_b = Bvh(ta), Bvh(tb)
    for ia, ib in bvh_candidate_pairs(bvh_a, bvh_b):
        if tri_tri_intersect(ta[ia], tb[ib]):
            return True
    return False


def _scene_pairs(scene) -> list[tuple]:
    objs = sorted(scene.objects, key=lambda o: o.name)
    return list(itertools.combinations(objs, 2))


def detect_collisions(scene, margin: float = DEFAULT_MARGIN) -> list[tuple[str, str]]:
    """All unordered colliding object pairs, lexicographically sorted."""
    tris: dict[str, np.ndarray] = {}
    boxes: dict[str, Aabb] = {}
    bvhs: dict[str, Bvh] = {}
    for obj in scene.objects:
        t = _contracted_world_tris(obj.mesh, obj.pose, margin)
        tris[obj.name] = t
        flat = t.reshape(-1, 3)
        boxes[obj.name] = Aabb(flat.min(axis=0), flat.max(axis=0))
    hits = []
    for a, b in _scene_pairs(scene):
        if not boxes[a.name].overlaps(boxes[b.name]):
            continue
        for name in (a.name, b.name):
            if name not in bvhs:
                bvhs[name] = Bvh(tris[name])
        ta, tb = tris[a.name], tris[b.name]
        for ia, ib in bvh_candidate_pairs(bvhs[a.name], bvhs[b.name]):
            if tri_tri_intersect(ta[ia], tb[ib]):
                hits.append((a.name, b.name))
                break
    return sorted(hits)


def brute_force_collisions(scene, margin: float = DEFAULT_MARGIN) -> list[tuple[str, str]]:
    """Oracle path: every triangle pair per object pair, no BVH, SAT narrow
    phase. O(n^2 * t^2); only meant for tests and cross-checks."""
    tris = {o.name: _contracted_world_tris(o.mesh, o.pose, margin) for o in scene.objects}
    hits = []
    step = 65536
    for a, b in _scene_pairs(scene):
        ta, tb = tris[a.name], tris[b.name]
        na, nb = ta.shape[0], tb.shape[0]
        collided = False
        for start in range(0, na * nb, step):
            flat = np.arange(start, min(start + step, na * nb))
            if sat_tri_tri_many(ta[flat // nb], tb[flat % nb]).any():
                collided = True
                break
        if collided:
            hits.append((a.name, b.name))
    return sorted(hits)
