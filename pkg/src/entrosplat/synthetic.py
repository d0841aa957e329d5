"""Procedural scenes with analytically exact depth.

Stands in for a learned depth/feature backbone at desk scale: every depth
value is a closed-form ray intersection, every color a procedural texture,
and the feature maps are the RGB-patch fallback.  Identical (spec, seed)
pairs produce byte-identical bundles.

Conventions: cameras use the CV frame (x right, y down, z forward); pixel
(u, v) samples the continuous image point (u, v); depth is camera-frame z.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateCamera, ValidationError
from .rng import uniform_at
from .scene import (
    CameraIntrinsics,
    CameraPose,
    DepthMap,
    FeatureMap,
    PosedView,
    SceneBundle,
    TargetView,
    ViewImage,
    rgb_patch_features,
)


def look_at(eye, target, up_hint=(0.0, 1.0, 0.0)):
    """World-to-camera pose with +z pointing from eye toward target."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise ValidationError("look_at eye and target coincide")
    z = z / nz
    x = np.cross(np.asarray(up_hint, dtype=np.float64), z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValidationError("look_at up_hint is parallel to the view direction")
    x = x / nx
    y = np.cross(z, x)
    m = np.eye(4)
    m[:3, :3] = np.stack([x, y, z])
    m[:3, 3] = -m[:3, :3] @ eye
    return CameraPose(m)


@dataclass(frozen=True)
class FlatWall:
    """Infinite (or bounded) single-color plane."""

    point: tuple
    normal: tuple
    color: tuple = (0.5, 0.5, 0.5)
    extent: Optional[float] = None  # half-size along the in-plane axes; None = infinite

    def _frame(self):
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        helper = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        a = np.cross(helper, n)
        a = a / np.linalg.norm(a)
        b = np.cross(n, a)
        return n, a, b

    def intersect(self, origins, dirs):
        n, _, _ = self._frame()
        p0 = np.asarray(self.point, dtype=np.float64)
        denom = dirs @ n
        t = np.where(np.abs(denom) > 1e-12, ((p0 - origins) @ n) / np.where(denom == 0, 1.0, denom), np.inf)
        t = np.where(t > 1e-9, t, np.inf)
        if self.extent is not None:
            hit = origins + t[..., None] * dirs
            _, a, b = self._frame()
            pa = (hit - p0) @ a
            pb = (hit - p0) @ b
            inside = (np.abs(pa) <= self.extent) & (np.abs(pb) <= self.extent)
            t = np.where(inside, t, np.inf)
        return t

    def shade(self, points, phase):
        color = np.asarray(self.color, dtype=np.float64)
        return np.broadcast_to(color, points.shape).copy()

    def contains(self, point):
        return False


@dataclass(frozen=True)
class CheckerPlane(FlatWall):
    """Plane textured with a grid of cells.

    shade_levels == 2 gives a classic two-color checkerboard; more levels
    assign each cell a deterministic pseudo-random shade between the two
    colors, which raises the local gray-level diversity (and therefore the
    window entropy) without touching the geometry.
    """

    cell_size: float = 0.5
    color2: tuple = (0.05, 0.05, 0.05)
    shade_levels: int = 2

    def shade(self, points, phase):
        _, a, b = self._frame()
        p0 = np.asarray(self.point, dtype=np.float64)
        pa = (points - p0) @ a / self.cell_size + phase
        pb = (points - p0) @ b / self.cell_size + phase * 0.7
        ia = np.floor(pa).astype(np.int64)
        ib = np.floor(pb).astype(np.int64)
        c1 = np.asarray(self.color, dtype=np.float64)
        c2 = np.asarray(self.color2, dtype=np.float64)
        if self.shade_levels <= 2:
            w = ((ia + ib) % 2).astype(np.float64)
        else:
            mixed = (ia * np.int64(73856093)) ^ (ib * np.int64(19349663))
            w = (mixed % self.shade_levels).astype(np.float64) / float(self.shade_levels - 1)
        return c2[None, :] * w[..., None] + c1[None, :] * (1.0 - w[..., None])


@dataclass(frozen=True)
class StripedSphere:
    center: tuple
    radius: float
    color: tuple = (0.85, 0.3, 0.2)
    color2: tuple = (0.1, 0.1, 0.5)
    stripe_width: float = 0.3
    shade_levels: int = 2

    def intersect(self, origins, dirs):
        c = np.asarray(self.center, dtype=np.float64)
        oc = origins - c
        b = np.sum(oc * dirs, axis=-1)
        q = np.sum(oc * oc, axis=-1) - self.radius**2
        disc = b * b - q
        t = np.full(b.shape, np.inf)
        ok = disc >= 0
        root = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - root
        t1 = -b + root
        near = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
        t[ok] = near[ok]
        return t

    def shade(self, points, phase):
        band = np.floor((points[..., 1] - self.center[1]) / self.stripe_width + phase).astype(np.int64)
        c1 = np.asarray(self.color, dtype=np.float64)
        c2 = np.asarray(self.color2, dtype=np.float64)
        if self.shade_levels <= 2:
            w = (band % 2).astype(np.float64)
        else:
            w = ((band * np.int64(83492791)) % self.shade_levels).astype(np.float64) / float(
                self.shade_levels - 1
            )
        return c2[None, :] * w[..., None] + c1[None, :] * (1.0 - w[..., None])

    def contains(self, point):
        return np.linalg.norm(np.asarray(point, dtype=np.float64) - np.asarray(self.center)) <= self.radius


@dataclass(frozen=True)
class SyntheticSpec:
    primitives: tuple
    cameras: tuple  # of (CameraIntrinsics, CameraPose)
    target_cameras: tuple = ()
    texture_jitter: bool = True

    def __post_init__(self):
        if not self.primitives:
            raise ValidationError("synthetic spec needs at least one primitive")
        if not self.cameras:
            raise ValidationError("synthetic spec needs at least one camera")


def pixel_rays(intr, pose):
    """World-space unit ray directions through every pixel center, plus origin."""
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    d_cam = np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1)
    d_world = d_cam @ pose.rotation  # row vectors times R == R^T applied
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    return pose.camera_center, d_world


def _render_camera(spec, intr, pose, phase):
    origin, dirs = pixel_rays(intr, pose)
    flat = dirs.reshape(-1, 3)
    origins = np.broadcast_to(origin, flat.shape)

    best_t = np.full(flat.shape[0], np.inf)
    best_prim = np.full(flat.shape[0], -1, dtype=np.int64)
    for i, prim in enumerate(spec.primitives):
        t = prim.intersect(origins, flat)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_prim[closer] = i

    hit = np.isfinite(best_t)
    points = origins + best_t[:, None] * flat
    rgb = np.zeros((flat.shape[0], 3))
    for i, prim in enumerate(spec.primitives):
        sel = hit & (best_prim == i)
        if np.any(sel):
            rgb[sel] = prim.shade(points[sel], phase)

    # depth is camera-frame z of the hit point
    z_axis = pose.rotation[2]
    depth = np.where(hit, (points - origin) @ z_axis, 0.0)

    h, w = intr.height, intr.width
    rgb8 = np.clip(rgb * 255.0 + 0.5, 0, 255).astype(np.uint8)
    return (
        (rgb8.astype(np.float32) / 255.0).reshape(h, w, 3),
        depth.astype(np.float32).reshape(h, w),
        hit.reshape(h, w),
    )


def generate_synthetic_scene(spec, seed):
    """Ray-casts the spec into a SceneBundle with exact depth maps."""
    for prim in spec.primitives:
        for intr, pose in tuple(spec.cameras) + tuple(spec.target_cameras):
            if prim.contains(pose.camera_center):
                raise DegenerateCamera(f"camera at {pose.camera_center} is inside {type(prim).__name__}")

    phase = uniform_at(seed, 0, 0, 0) if spec.texture_jitter else 0.0

    views = []
    for vid, (intr, pose) in enumerate(spec.cameras):
        rgb, depth, valid = _render_camera(spec, intr, pose, phase)
        views.append(
            PosedView(
                image=ViewImage(rgb),
                depth=DepthMap(depth, valid),
                features=FeatureMap(rgb_patch_features(rgb)),
                intrinsics=intr,
                pose=pose,
                view_id=vid,
            )
        )
    targets = []
    for intr, pose in spec.target_cameras:
        rgb, _, _ = _render_camera(spec, intr, pose, phase)
        targets.append(TargetView(ViewImage(rgb), intr, pose))
    return SceneBundle(views=tuple(views), target_views=tuple(targets))
