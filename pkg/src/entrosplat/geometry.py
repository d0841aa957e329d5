"""Pinhole camera math and anchor construction.

Back-projection of pixel (u, v) at depth d (camera-frame z):

    p_cam = ((u - cx) d / fx, (v - cy) d / fy, d),  p_world = W2C^-1 p_cam

Each sampled pixel becomes one anchor carrying a 9-d geometric feature
(position, surface normal, viewing ray) and the feature-map value at the
pixel as its appearance feature.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, NonPositiveDepth, ValidationError

GEO_DIM = 9


def backproject(pixel, depth, intr, pose):
    u, v = pixel
    if depth <= 0:
        raise NonPositiveDepth(f"depth must be positive at pixel ({u}, {v}), got {depth}")
    p_cam = np.array([(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth])
    return pose.rotation.T @ (p_cam - pose.translation)


def project(point, intr, pose):
    """Returns (u, v, camera-frame depth)."""
    p_cam = pose.rotation @ np.asarray(point, dtype=np.float64) + pose.translation
    if p_cam[2] <= 0:
        raise BehindCamera(f"point {point} has camera-frame z {p_cam[2]:.6g}")
    u = intr.fx * p_cam[0] / p_cam[2] + intr.cx
    v = intr.fy * p_cam[1] / p_cam[2] + intr.cy
    return u, v, p_cam[2]


def viewing_ray(pixel, intr, pose):
    """Unit direction from the camera center through the pixel, world frame."""
    u, v = pixel
    d_cam = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    d_world = pose.rotation.T @ d_cam
    return d_world / np.linalg.norm(d_world)


def backproject_grid(depth, intr, pose):
    """World points for every pixel of a depth raster, shape (H, W, 3)."""
    h, w = depth.shape
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    d = np.asarray(depth, dtype=np.float64)
    p_cam = np.stack([(uu - intr.cx) * d / intr.fx, (vv - intr.cy) * d / intr.fy, d], axis=-1)
    return (p_cam - pose.translation) @ pose.rotation  # row-vector form of R^T (p - t)


def viewing_ray_grid(h, w, intr, pose):
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    d_cam = np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1)
    d_world = d_cam @ pose.rotation
    return d_world / np.linalg.norm(d_world, axis=-1, keepdims=True)


def estimate_normals(depth_map, intr, pose):
    """Camera-facing unit normals from central-difference tangents.

    Tangents come from the backprojected 4-neighborhood; border or invalid
    neighbors fall back to one-sided differences, and pixels without any
    usable tangent pair take the negated viewing ray.
    """
    depth = np.asarray(depth_map.depth, dtype=np.float64)
    valid = np.asarray(depth_map.valid, dtype=bool)
    h, w = depth.shape
    pts = backproject_grid(depth, intr, pose)
    rays = viewing_ray_grid(h, w, intr, pose)

    def _tangent(axis):
        # difference of the nearest valid neighbors along one raster axis
        plus = np.zeros_like(pts)
        minus = np.zeros_like(pts)
        ok_plus = np.zeros((h, w), dtype=bool)
        ok_minus = np.zeros((h, w), dtype=bool)
        if axis == 0:  # u: columns
            plus[:, :-1] = pts[:, 1:]
            ok_plus[:, :-1] = valid[:, 1:]
            minus[:, 1:] = pts[:, :-1]
            ok_minus[:, 1:] = valid[:, :-1]
        else:  # v: rows
            plus[:-1] = pts[1:]
            ok_plus[:-1] = valid[1:]
            minus[1:] = pts[:-1]
            ok_minus[1:] = valid[:-1]
        center_ok = valid
        a = np.where(ok_plus[..., None], plus, np.where(center_ok[..., None], pts, 0.0))
        b = np.where(ok_minus[..., None], minus, np.where(center_ok[..., None], pts, 0.0))
        usable = (ok_plus | ok_minus) & center_ok
        return a - b, usable

    tu, ok_u = _tangent(0)
    tv, ok_v = _tangent(1)
    normals = np.cross(tu, tv)
    norms = np.linalg.norm(normals, axis=-1)
    degenerate = ~(ok_u & ok_v) | (norms < 1e-12)
    safe = np.where(degenerate[..., None], 1.0, norms[..., None])
    normals = normals / safe
    # face the camera: flip where the normal points along the viewing ray
    flip = np.sum(normals * rays, axis=-1) > 0
    normals = np.where(flip[..., None], -normals, normals)
    normals = np.where(degenerate[..., None], -rays, normals)
    return normals


@dataclass(frozen=True)
class AnchorCloud:
    """Struct-of-arrays anchor set merged across views.

    Ordering is deterministic: by view id, then row-major pixel order.
    geo rows are the concatenation (position, normal, ray).
    """

    positions: np.ndarray  # (N, 3) float64
    normals: np.ndarray  # (N, 3)
    rays: np.ndarray  # (N, 3)
    appearance: np.ndarray  # (N, d_v) float64
    view_ids: np.ndarray  # (N,) int64
    pixels: np.ndarray  # (N, 2) int64 (u, v)
    view_offsets: dict  # view_id -> (start, end)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def geo(self):
        return np.concatenate([self.positions, self.normals, self.rays], axis=1)

    @property
    def feature_dim(self):
        return self.appearance.shape[1]

    def bounding_diagonal(self):
        if len(self) == 0:
            return 0.0
        span = self.positions.max(axis=0) - self.positions.min(axis=0)
        return float(np.linalg.norm(span))


def build_anchor_cloud(samples, bundle):
    """Back-projects per-view sample sets into one merged anchor cloud."""
    views = {view.view_id: view for view in bundle.views}
    positions, normals, rays, appearance, view_ids, pixels = [], [], [], [], [], []
    offsets = {}
    cursor = 0
    fdim = None
    for sample in sorted(samples, key=lambda s: s.view_id):
        view = views.get(sample.view_id)
        if view is None:
            raise ValidationError(f"sample set references unknown view {sample.view_id}")
        coords = np.asarray(sample.coords, dtype=np.int64)
        if coords.size and (
            coords.min() < 0
            or coords[:, 0].max() >= view.intrinsics.width
            or coords[:, 1].max() >= view.intrinsics.height
        ):
            raise ValidationError(f"view {sample.view_id}: sample pixel out of bounds")
        # deterministic row-major order regardless of the input order
        order = np.lexsort((coords[:, 0], coords[:, 1])) if coords.size else np.array([], dtype=np.int64)
        coords = coords[order]
        n = coords.shape[0]
        if n:
            us, vs = coords[:, 0], coords[:, 1]
            depth = np.asarray(view.depth.depth, dtype=np.float64)[vs, us]
            bad = depth <= 0
            if bad.any():
                u, v = coords[np.argmax(bad)]
                raise NonPositiveDepth(f"view {sample.view_id}: nonpositive depth at pixel ({u}, {v})")
            intr, pose = view.intrinsics, view.pose
            p_cam = np.stack(
                [(us - intr.cx) * depth / intr.fx, (vs - intr.cy) * depth / intr.fy, depth], axis=1
            )
            pos = (p_cam - pose.translation) @ pose.rotation
            nrm = estimate_normals(view.depth, intr, pose)[vs, us]
            ray = viewing_ray_grid(view.shape[0], view.shape[1], intr, pose)[vs, us]
            feat = np.asarray(view.features.features, dtype=np.float64)[:, vs, us].T
            positions.append(pos)
            normals.append(nrm)
            rays.append(ray)
            appearance.append(feat)
            view_ids.append(np.full(n, sample.view_id, dtype=np.int64))
            pixels.append(coords)
            if fdim is None:
                fdim = feat.shape[1]
        offsets[sample.view_id] = (cursor, cursor + n)
        cursor += n

    if fdim is None:
        fdim = bundle.views[0].features.channels
    if cursor == 0:
        return AnchorCloud(
            positions=np.zeros((0, 3)),
            normals=np.zeros((0, 3)),
            rays=np.zeros((0, 3)),
            appearance=np.zeros((0, fdim)),
            view_ids=np.zeros(0, dtype=np.int64),
            pixels=np.zeros((0, 2), dtype=np.int64),
            view_offsets=offsets,
        )
    return AnchorCloud(
        positions=np.concatenate(positions),
        normals=np.concatenate(normals),
        rays=np.concatenate(rays),
        appearance=np.concatenate(appearance),
        view_ids=np.concatenate(view_ids),
        pixels=np.concatenate(pixels),
        view_offsets=offsets,
    )


def export_anchors_xyz(cloud, path):
    """ASCII dump: x y z nx ny nz per line, for quick inspection."""
    data = np.concatenate([cloud.positions, cloud.normals], axis=1)
    np.savetxt(path, data, fmt="%.9g")
