"""Mesh and texture providers behind Create / GenerateFloorTexture.

Two implementations ship: a deterministic procedural provider (pure
function of the description bytes, suitable for offline runs and golden
tests) and a remote HTTP client that bridges real generative backends.
All provider meshes are normalized (max AABB extent 1 m, centered) before
they enter a scene.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import httpx
import numpy as np

from . import primitives
from .errors import DegenerateMesh, GenerationFailed, ProviderUnavailable
from .mesh import TriangleMesh, parse_obj
from .scene import TextureImage

DEFAULT_TIMEOUT_S = 120.0
ASSET_ENDPOINT_ENV = "SCENELOOM_ASSET_ENDPOINT"


@dataclass(frozen=True)
class AssetRequest:
    name: str
    description: str

    def __post_init__(self):
        if not self.description:
            raise ValueError("asset description must be non-empty")


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Uniformly rescale so the max AABB extent is 1 m, recentered to the
    origin. Idempotent to floating-point noise."""
    box = mesh.aabb()
    extent = float(box.extents.max())
    if extent <= 0.0:
        raise DegenerateMesh("mesh has zero extent")
    verts = (mesh.vertices - box.center) / extent
    return TriangleMesh(verts, mesh.triangles.copy(), clean=False)


def _digest_floats(description: str, n: int) -> list[float]:
    """n floats in [0, 1) derived from the description bytes."""
    out: list[float] = []
    counter = 0
    while len(out) < n:
        block = hashlib.sha256(description.encode() + counter.to_bytes(4, "big")).digest()
        for i in range(0, 32, 4):
            out.append(int.from_bytes(block[i:i + 4], "big") / 2**32)
        counter += 1
    return out[:n]


def procedural_asset(description: str) -> TriangleMesh:
    """Deterministic composite primitive whose shape derives from a stable
    hash of the description; stands in for a generative model."""
    f = _digest_floats(description, 12)
    kind = int(f[0] * 4) % 4
    if kind == 0:
        # box body with a smaller box on top
        body = primitives.box(1.0, 0.6 + 0.4 * f[1], 0.5 + 0.3 * f[2])
        cap = primitives.box(0.4 + 0.3 * f[3], 0.4 + 0.3 * f[4], 0.3)
        mesh = _stack(body, cap)
    elif kind == 1:
        base = primitives.cylinder(0.3 + 0.2 * f[1], 0.5 + 0.4 * f[2], segments=14)
        top = primitives.cone(0.25 + 0.2 * f[3], 0.4 + 0.3 * f[4], segments=14)
        mesh = _stack(base, top)
    elif kind == 2:
        mesh = primitives.uv_sphere(0.4 + 0.2 * f[1], rings=7, segments=11)
        if f[2] > 0.5:
            mesh = _stack(primitives.box(0.8, 0.8, 0.2 + 0.2 * f[3]), mesh)
    else:
        mesh = primitives.box(0.5 + 0.5 * f[1], 0.5 + 0.5 * f[2], 0.5 + 0.5 * f[3])
    return normalize_mesh(mesh)


def _stack(lower: TriangleMesh, upper: TriangleMesh) -> TriangleMesh:
    lo_top = float(lower.aabb().hi[2])
    up_bottom = float(upper.aabb().lo[2])
    shifted = upper.vertices + np.array([0.0, 0.0, lo_top - up_bottom])
    verts = np.concatenate([lower.vertices, shifted], axis=0)
    tris = np.concatenate(
        [lower.triangles, upper.triangles + lower.vertices.shape[0]], axis=0
    )
    return TriangleMesh(verts, tris, clean=False)


def procedural_floor_texture(description: str) -> TextureImage:
    """Two-tone checker tinted by the description hash; 256x256, 2 m tile."""
    f = _digest_floats(description, 6)
    import colorsys

    r1, g1, b1 = colorsys.hsv_to_rgb(f[0], 0.25 + 0.2 * f[1], 0.55 + 0.25 * f[2])
    r2, g2, b2 = colorsys.hsv_to_rgb(f[0], 0.25 + 0.2 * f[1], 0.40 + 0.25 * f[3])
    arr = np.empty((256, 256, 4), dtype=np.uint8)
    ys, xs = np.mgrid[0:256, 0:256]
    check = ((xs // 64) + (ys // 64)) % 2 == 0
    arr[check] = (int(r1 * 255), int(g1 * 255), int(b1 * 255), 255)
    arr[~check] = (int(r2 * 255), int(g2 * 255), int(b2 * 255), 255)
    return TextureImage(arr, tile_m=2.0)


class ProceduralAssetProvider:
    """Offline provider; output depends only on the request description."""

    kind = "procedural"

    def generate_asset(self, request: AssetRequest) -> TriangleMesh:
        return procedural_asset(request.description)

    def generate_floor_texture(self, description: str) -> TextureImage:
        return procedural_floor_texture(description)


class RemoteAssetProvider:
    """HTTP bridge: POST /generate {description} -> OBJ bytes and
    POST /texture {description} -> PNG bytes."""

    kind = "remote"

    def __init__(self, endpoint: str, timeout_s: float = DEFAULT_TIMEOUT_S, transport=None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self._transport = transport

    def _post(self, path: str, payload: dict) -> bytes:
        try:
            with httpx.Client(transport=self._transport, timeout=self.timeout_s) as client:
                resp = client.post(self.endpoint + path, json=payload)
        except httpx.TimeoutException as exc:
            raise ProviderUnavailable(f"asset endpoint timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"asset endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise GenerationFailed(f"asset endpoint returned HTTP {resp.status_code}")
        return resp.content

    def generate_asset(self, request: AssetRequest) -> TriangleMesh:
        data = self._post("/generate", {"description": request.description})
        try:
            mesh = parse_obj(data.decode("utf-8", errors="replace"))
            return normalize_mesh(mesh)
        except Exception as exc:
            raise GenerationFailed(f"unusable OBJ payload: {exc}") from exc

    def generate_floor_texture(self, description: str) -> TextureImage:
        data = self._post("/texture", {"description": description})
        try:
            from .render import decode_png

            pixels = decode_png(data)
            return TextureImage(_to_power_of_two(pixels), tile_m=2.0)
        except Exception as exc:
            raise GenerationFailed(f"unusable PNG payload: {exc}") from exc


def _to_power_of_two(pixels: np.ndarray) -> np.ndarray:
    """Nearest-neighbor resize down to power-of-two dimensions (tiling
    requirement); no-op when already conforming."""
    h, w = pixels.shape[:2]

    def floor_pow2(n: int) -> int:
        return 1 << max(0, n.bit_length() - 1)

    th, tw = floor_pow2(h), floor_pow2(w)
    if (th, tw) == (h, w):
        return pixels
    ys = (np.arange(th) * h // th).astype(np.int64)
    xs = (np.arange(tw) * w // tw).astype(np.int64)
    return pixels[ys][:, xs]


def provider_from_config(config: dict):
    kind = config.get("kind", "procedural")
    if kind == "procedural":
        return ProceduralAssetProvider()
    if kind == "remote":
        endpoint = config.get("endpoint")
        if not endpoint:
            raise ValueError("remote asset provider requires an endpoint")
        return RemoteAssetProvider(endpoint, config.get("timeout_s", DEFAULT_TIMEOUT_S))
    raise ValueError(f"unknown asset provider kind {kind!r}")
