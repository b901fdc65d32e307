"""Software rasterizer producing the agent's visual feedback image.

Z-buffered flat shading with per-object colors derived from name hashes,
a textured floor quad, and (unless disabled) the visual-prompting
overlays: one name label per on-screen object and a coordinate-axis HUD.
Output is bit-deterministic for identical inputs, which is what makes
golden-image tests possible.
"""
from __future__ import annotations

import colorsys
import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PilImage

from . import font8x8
from .camera import CameraState, camera_basis, project
from .mesh import transform_points

NEAR_PLANE = 0.05
BACKGROUND = (233, 238, 244, 255)
FLOOR_RENDER_PAD = 1.2

LABEL_SCALE = 2
LABEL_PAD_X = 4
LABEL_PAD_Y = 3
LABEL_GAP = 4
LABEL_BG = (24, 26, 34)
LABEL_ALPHA = 0.62

HUD_MARGIN = 56
HUD_LENGTH = 34
AXIS_COLORS = {"X": (226, 61, 61, 255), "Y": (58, 196, 92, 255), "Z": (64, 108, 238, 255)}


@dataclass
class RenderOptions:
    width: int = 1024
    height: int = 768
    visual_prompting: bool = True
    draw_floor: bool = True
    background: tuple[int, int, int, int] = BACKGROUND

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise ValueError("viewport must be at least 64x64")


class Image:
    """RGBA8 buffer, row-major from the top-left."""

    def __init__(self, array: np.ndarray):
        arr = np.ascontiguousarray(np.asarray(array, dtype=np.uint8))
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise ValueError("image must be HxWx4")
        self.array = arr

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @staticmethod
    def blank(width: int, height: int, color=BACKGROUND) -> "Image":
        arr = np.empty((height, width, 4), dtype=np.uint8)
        arr[:, :] = color
        return Image(arr)

    def to_png_bytes(self) -> bytes:
        return encode_png(self.array)

    @staticmethod
    def from_png_bytes(data: bytes) -> "Image":
        return Image(decode_png(data))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())


def encode_png(array: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PilImage.fromarray(np.asarray(array, dtype=np.uint8), "RGBA").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with PilImage.open(io.BytesIO(data)) as im:
        return np.array(im.convert("RGBA"), dtype=np.uint8)


def object_color(name: str) -> tuple[int, int, int]:
    """Deterministic base color from the object name."""
    digest = hashlib.sha256(name.encode()).digest()
    hue = digest[0] / 255.0
    sat = 0.45 + 0.30 * digest[1] / 255.0
    val = 0.70 + 0.25 * digest[2] / 255.0
    r, g, b = colorsys.hsv_to_rgb(hue, sat, val)
    return int(r * 255), int(g * 255), int(b * 255)


def default_floor_texture() -> np.ndarray:
    """Light-gray checker, 64x64 px covering one tile meter."""
    arr = np.empty((64, 64, 4), dtype=np.uint8)
    ys, xs = np.mgrid[0:64, 0:64]
    check = ((xs // 32) + (ys // 32)) % 2 == 0
    arr[check] = (206, 206, 210, 255)
    arr[~check] = (181, 181, 186, 255)
    return arr


# --- rasterization core -----------------------------------------------------


def _clip_near(cam_pts: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against the
    near plane; returns 0..2 triangles."""
    inside = cam_pts[:, 2] >= NEAR_PLANE
    if inside.all():
        return [cam_pts]
    if not inside.any():
        return []
    poly = []
    for i in range(3):
        j = (i + 1) % 3
        p, q = cam_pts[i], cam_pts[j]
        if inside[i]:
            poly.append(p)
        if inside[i] != inside[j]:
            t = (NEAR_PLANE - p[2]) / (q[2] - p[2])
            poly.append(p + t * (q - p))
    out = []
    for k in range(1, len(poly) - 1):
        out.append(np.stack([poly[0], poly[k], poly[k + 1]]))
    return out


class _Raster:
    def __init__(self, opts: RenderOptions, cam: CameraState):
        self.w, self.h = opts.width, opts.height
        self.color = np.empty((self.h, self.w, 4), dtype=np.uint8)
        self.color[:, :] = opts.background
        self.zinv = np.zeros((self.h, self.w), dtype=np.float64)
        self.right, self.up, self.forward, self.position = camera_basis(cam)
        self.tan_v = math.tan(math.radians(cam.fov) / 2.0)
        self.aspect = self.w / self.h

    def to_camera(self, world_pts: np.ndarray) -> np.ndarray:
        rel = world_pts - self.position
        return np.stack([rel @ self.right, rel @ self.up, rel @ self.forward], axis=1)

    def to_pixels(self, cam_pts: np.ndarray) -> np.ndarray:
        z = cam_pts[:, 2]
        x = (0.5 + 0.5 * cam_pts[:, 0] / (z * self.tan_v * self.aspect)) * self.w
        y = (0.5 - 0.5 * cam_pts[:, 1] / (z * self.tan_v)) * self.h
        return np.stack([x, y], axis=1)

    def fill(self, cam_tri: np.ndarray, rgba=None, uv=None, texture=None, tile_m: float = 1.0):
        """Rasterize one camera-space triangle, either flat-colored or
        floor-textured (uv = world XY per vertex, perspective-correct)."""
        pts = self.to_pixels(cam_tri)
        zinv = 1.0 / cam_tri[:, 2]
        (x0, y0), (x1, y1) = pts.min(axis=0), pts.max(axis=0)
        ix0, iy0 = max(0, int(math.floor(x0 - 0.5))), max(0, int(math.floor(y0 - 0.5)))
        ix1, iy1 = min(self.w - 1, int(math.ceil(x1))), min(self.h - 1, int(math.ceil(y1)))
        if ix0 > ix1 or iy0 > iy1:
            return
        ax, ay = pts[0]
        bx, by = pts[1]
        cx, cy = pts[2]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            return
        if area < 0.0:
            bx, by, cx, cy = cx, cy, bx, by
            pts = pts[[0, 2, 1]]
            zinv = zinv[[0, 2, 1]]
            if uv is not None:
                uv = uv[[0, 2, 1]]
            area = -area
        px, py = np.meshgrid(
            np.arange(ix0, ix1 + 1, dtype=np.float64) + 0.5,
            np.arange(iy0, iy1 + 1, dtype=np.float64) + 0.5,
        )
        w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
        w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
        w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            return
        b0, b1, b2 = w0 / area, w1 / area, w2 / area
        zinv_pix = b0 * zinv[0] + b1 * zinv[1] + b2 * zinv[2]
        zbuf = self.zinv[iy0:iy1 + 1, ix0:ix1 + 1]
        win = inside & (zinv_pix > zbuf)
        if not win.any():
            return
        zbuf[win] = zinv_pix[win]
        patch = self.color[iy0:iy1 + 1, ix0:ix1 + 1]
        if texture is None:
            patch[win] = rgba
        else:
            # perspective-correct world XY, then nearest-neighbor tiled lookup
            u = (b0 * uv[0, 0] * zinv[0] + b1 * uv[1, 0] * zinv[1] + b2 * uv[2, 0] * zinv[2])
            v = (b0 * uv[0, 1] * zinv[0] + b1 * uv[1, 1] * zinv[1] + b2 * uv[2, 1] * zinv[2])
            u = u[win] / zinv_pix[win]
            v = v[win] / zinv_pix[win]
            th, tw = texture.shape[:2]
            tx = np.floor((u / tile_m) % 1.0 * tw).astype(np.int64) % tw
            ty = np.floor((v / tile_m) % 1.0 * th).astype(np.int64) % th
            patch[win] = texture[ty, tx]


def _shade(base_rgb, normal: np.ndarray, light: np.ndarray) -> np.ndarray:
    intensity = 0.34 + 0.66 * abs(float(normal @ light))
    return np.array(
        [min(255, int(base_rgb[0] * intensity)),
         min(255, int(base_rgb[1] * intensity)),
         min(255, int(base_rgb[2] * intensity)),
         255],
        dtype=np.uint8,
    )


def render(scene, cam: CameraState, opts: RenderOptions | None = None) -> Image:
    """Render the scene: floor, objects, then overlays if enabled."""
    opts = opts or RenderOptions()
    rast = _Raster(opts, cam)

    # directional light halfway between the view direction and straight up
    light = np.array([0.0, 0.0, 1.0]) - rast.forward
    light /= np.linalg.norm(light)

    if opts.draw_floor:
        (fx0, fy0), (fx1, fy1) = scene.floor_extent()
        cx, cy = (fx0 + fx1) / 2.0, (fy0 + fy1) / 2.0
        hx = (fx1 - fx0) / 2.0 * FLOOR_RENDER_PAD
        hy = (fy1 - fy0) / 2.0 * FLOOR_RENDER_PAD
        quad = np.array(
            [[cx - hx, cy - hy, 0.0], [cx + hx, cy - hy, 0.0],
             [cx + hx, cy + hy, 0.0], [cx - hx, cy + hy, 0.0]]
        )
        if scene.floor_texture is not None:
            texture, tile = scene.floor_texture.pixels, scene.floor_texture.tile_m
        else:
            texture, tile = default_floor_texture(), 1.0
        cam_quad = rast.to_camera(quad)
        uvs = quad[:, :2]
        for tri_idx in ((0, 1, 2), (0, 2, 3)):
            for sub in _clip_near_with_uv(cam_quad[list(tri_idx)], uvs[list(tri_idx)]):
                rast.fill(sub[0], uv=sub[1], texture=texture, tile_m=tile)

    for obj in scene.objects:
        world = transform_points(obj.mesh.vertices, obj.pose)
        cam_pts = rast.to_camera(world)
        base = object_color(obj.name)
        tris = obj.mesh.triangles
        wv = world[tris]
        normals = np.cross(wv[:, 1] - wv[:, 0], wv[:, 2] - wv[:, 0])
        lens = np.linalg.norm(normals, axis=1)
        lens[lens == 0] = 1.0
        normals /= lens[:, None]
        for k in range(tris.shape[0]):
            tri_cam = cam_pts[tris[k]]
            if (tri_cam[:, 2] < NEAR_PLANE).all():
                continue
            rgba = _shade(base, normals[k], light)
            for sub in _clip_near(tri_cam):
                rast.fill(sub, rgba=rgba)

    image = Image(rast.color)
    if opts.visual_prompting:
        overlay_labels(image, scene, cam)
        overlay_axis_hud(image, cam)
    return image


def _clip_near_with_uv(cam_pts: np.ndarray, uv: np.ndarray):
    """Near-clip a triangle while carrying per-vertex UV attributes."""
    inside = cam_pts[:, 2] >= NEAR_PLANE
    if inside.all():
        return [(cam_pts, uv)]
    if not inside.any():
        return []
    pts, uvs = [], []
    for i in range(3):
        j = (i + 1) % 3
        if inside[i]:
            pts.append(cam_pts[i])
            uvs.append(uv[i])
        if inside[i] != inside[j]:
            t = (NEAR_PLANE - cam_pts[i][2]) / (cam_pts[j][2] - cam_pts[i][2])
            pts.append(cam_pts[i] + t * (cam_pts[j] - cam_pts[i]))
            uvs.append(uv[i] + t * (uv[j] - uv[i]))
    out = []
    for k in range(1, len(pts) - 1):
        out.append(
            (np.stack([pts[0], pts[k], pts[k + 1]]), np.stack([uvs[0], uvs[k], uvs[k + 1]]))
        )
    return out


# --- overlays ----------------------------------------------------------------


def label_rect(scene_obj, cam: CameraState, width: int, height: int):
    """Pixel rect (x0, y0, x1, y1) the object's label occupies, or None when
    the AABB center is off-screen/behind the camera."""
    box = scene_obj.world_aabb()
    center = box.center
    hit = project(cam, center, width, height)
    if hit.behind or not (0 <= hit.x < width and 0 <= hit.y < height):
        return None
    anchor = project(cam, (center[0], center[1], float(box.hi[2])), width, height)
    if anchor.behind:
        return None
    tw, th = font8x8.text_size(scene_obj.name, LABEL_SCALE)
    bw, bh = tw + 2 * LABEL_PAD_X, th + 2 * LABEL_PAD_Y
    x0 = int(round(anchor.x)) - bw // 2
    y1 = int(round(anchor.y)) - LABEL_GAP
    y0 = y1 - bh
    x0 = max(0, min(width - bw, x0))
    y0 = max(0, min(height - bh, y0))
    return x0, y0, x0 + bw, y0 + bh


def overlay_labels(image: Image, scene, cam: CameraState) -> Image:
    """Draw each on-screen object's name in a dark box above its AABB."""
    arr = image.array
    h, w = arr.shape[:2]
    for obj in scene.objects:
        rect = label_rect(obj, cam, w, h)
        if rect is None:
            continue
        x0, y0, x1, y1 = rect
        patch = arr[y0:y1, x0:x1, :3].astype(np.float64)
        bg = np.array(LABEL_BG, dtype=np.float64)
        arr[y0:y1, x0:x1, :3] = (patch * (1 - LABEL_ALPHA) + bg * LABEL_ALPHA).astype(np.uint8)
        mask = font8x8.text_mask(obj.name, LABEL_SCALE)
        ty, tx = y0 + LABEL_PAD_Y, x0 + LABEL_PAD_X
        sub = arr[ty:ty + mask.shape[0], tx:tx + mask.shape[1]]
        sub[mask[: sub.shape[0], : sub.shape[1]]] = (255, 255, 255, 255)
    return image


def hud_rect(width: int, height: int):
    """Pixel rect the axis HUD may touch."""
    cx, cy = width - HUD_MARGIN, HUD_MARGIN
    r = HUD_LENGTH + 18
    return max(0, cx - r), max(0, cy - r), min(width, cx + r), min(height, cy + r)


def _draw_line(arr: np.ndarray, p0, p1, color, thickness: int = 2):
    h, w = arr.shape[:2]
    length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    steps = max(1, int(length * 2))
    for i in range(steps + 1):
        t = i / steps
        x = int(round(p0[0] + (p1[0] - p0[0]) * t))
        y = int(round(p0[1] + (p1[1] - p0[1]) * t))
        x0, y0 = max(0, x), max(0, y)
        arr[y0:min(h, y + thickness), x0:min(w, x + thickness)] = color


def overlay_axis_hud(image: Image, cam: CameraState) -> Image:
    """Top-right gizmo: world axes under the camera rotation only, X red,
    Y green, Z blue; an axis pointing at the camera collapses to a dot."""
    arr = image.array
    h, w = arr.shape[:2]
    cx, cy = w - HUD_MARGIN, HUD_MARGIN
    right, up, _, _ = camera_basis(cam)
    for name, world_axis in (("X", (1.0, 0.0, 0.0)), ("Y", (0.0, 1.0, 0.0)), ("Z", (0.0, 0.0, 1.0))):
        a = np.asarray(world_axis)
        dx = float(a @ right)
        dy = -float(a @ up)
        color = AXIS_COLORS[name]
        tip = (cx + dx * HUD_LENGTH, cy + dy * HUD_LENGTH)
        if math.hypot(dx, dy) < 0.05:
            arr[max(0, cy - 3):cy + 3, max(0, cx - 3):cx + 3] = color
            label_at = (cx + 5, cy - 14)
        else:
            _draw_line(arr, (cx, cy), tip, color)
            norm = math.hypot(dx, dy)
            ux, uy = dx / norm, dy / norm
            label_at = (tip[0] + ux * 6 - 4, tip[1] + uy * 6 - 4)
        mask = font8x8.text_mask(name, 1)
        lx, ly = int(round(label_at[0])), int(round(label_at[1]))
        if 0 <= ly and ly + mask.shape[0] <= h and 0 <= lx and lx + mask.shape[1] <= w:
            sub = arr[ly:ly + mask.shape[0], lx:lx + mask.shape[1]]
            sub[mask] = color
    return image
