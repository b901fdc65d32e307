"""Procedural primitive meshes used by tests and the stand-in asset provider."""
from __future__ import annotations

import math

import numpy as np

from .mesh import TriangleMesh


def box(sx: float = 1.0, sy: float = 1.0, sz: float = 1.0) -> TriangleMesh:
    """Axis-aligned box centered at the origin."""
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    v = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ],
        dtype=np.float64,
    )
    t = [
        (0, 2, 1), (0, 3, 2),  # bottom
        (4, 5, 6), (4, 6, 7),  # top
        (0, 1, 5), (0, 5, 4),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (1, 2, 6), (1, 6, 5),  # +x
        (3, 0, 4), (3, 4, 7),  # -x
    ]
    return TriangleMesh(v, t)


def cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 16) -> TriangleMesh:
    hz = height / 2.0
    verts = [(0.0, 0.0, -hz), (0.0, 0.0, hz)]
    for i in range(segments):
        a = 2.0 * math.pi * i / segments
        x, y = radius * math.cos(a), radius * math.sin(a)
        verts.append((x, y, -hz))
        verts.append((x, y, hz))
    tris = []
    for i in range(segments):
        b0 = 2 + 2 * i
        b1 = 2 + 2 * ((i + 1) % segments)
        tris.append((0, b1, b0))          # bottom cap
        tris.append((1, b0 + 1, b1 + 1))  # top cap
        tris.append((b0, b1, b1 + 1))     # side
        tris.append((b0, b1 + 1, b0 + 1))
    return TriangleMesh(verts, tris)


def cone(radius: float = 0.5, height: float = 1.0, segments: int = 16) -> TriangleMesh:
    hz = height / 2.0
    verts = [(0.0, 0.0, -hz), (0.0, 0.0, hz)]
    for i in range(segments):
        a = 2.0 * math.pi * i / segments
        verts.append((radius * math.cos(a), radius * math.sin(a), -hz))
    tris = []
    for i in range(segments):
        b0 = 2 + i
        b1 = 2 + (i + 1) % segments
        tris.append((0, b1, b0))
        tris.append((1, b0, b1))
    return TriangleMesh(verts, tris)


def uv_sphere(radius: float = 0.5, rings: int = 8, segments: int = 12) -> TriangleMesh:
    verts = [(0.0, 0.0, radius), (0.0, 0.0, -radius)]
    for r in range(1, rings):
        phi = math.pi * r / rings
        z = radius * math.cos(phi)
        rr = radius * math.sin(phi)
        for s in range(segments):
            a = 2.0 * math.pi * s / segments
            verts.append((rr * math.cos(a), rr * math.sin(a), z))
    tris = []

    def vid(r: int, s: int) -> int:
        return 2 + (r - 1) * segments + (s % segments)

    for s in range(segments):
        tris.append((0, vid(1, s), vid(1, s + 1)))
        tris.append((1, vid(rings - 1, s + 1), vid(rings - 1, s)))
    for r in range(1, rings - 1):
        for s in range(segments):
            a, b = vid(r, s), vid(r, s + 1)
            c, d = vid(r + 1, s), vid(r + 1, s + 1)
            tris.append((a, c, d))
            tris.append((a, d, b))
    return TriangleMesh(verts, tris)
