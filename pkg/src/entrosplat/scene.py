"""Posed views and on-disk scene bundles.

A scene bundle directory holds, per view:
  cameras.json            intrinsics + 4x4 world-to-camera (row major) per view
  view_<id>.png           8-bit RGB
  view_<id>.depth         raw tensor (H, W) float32, scene units
  view_<id>.feat          optional raw tensor (C, H, W) float32
  view_<id>.mask          optional H*W bytes, nonzero = valid depth
  target_<i>.png          optional held-out evaluation images (cameras.json "targets")

When no .feat file is present, per-pixel appearance features fall back to
the flattened 3x3 RGB patch around the pixel (27 channels, replicate
padded), so the pipeline runs without any pretrained feature extractor.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image

from . import tensorio
from .errors import (
    DimensionMismatch,
    IoFailure,
    MissingFile,
    NonRigidPose,
    ValidationError,
)

PATCH_FALLBACK_CHANNELS = 27


def grayscale(rgb):
    """BT.601 luma of an (H, W, 3) image in [0, 1].

    Integer weights over 1000 keep white at exactly 1.0.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionMismatch(f"expected (H, W, 3) rgb, got {rgb.shape}")
    return (299.0 * rgb[..., 0] + 587.0 * rgb[..., 1] + 114.0 * rgb[..., 2]) / 1000.0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValidationError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} frame"
            )


@dataclass(frozen=True)
class CameraPose:
    """Rigid world-to-camera transform (4x4)."""

    world_to_camera: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.world_to_camera, dtype=np.float64)
        if m.shape != (4, 4):
            raise NonRigidPose(f"pose must be 4x4, got {m.shape}")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise NonRigidPose("rotation block is not orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=1e-6):
            raise NonRigidPose(f"rotation block has determinant {np.linalg.det(r):.6f}")
        if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=1e-12):
            raise NonRigidPose(f"last row must be (0,0,0,1), got {m[3]}")
        object.__setattr__(self, "world_to_camera", m)

    @property
    def rotation(self):
        return self.world_to_camera[:3, :3]

    @property
    def translation(self):
        return self.world_to_camera[:3, 3]

    @property
    def camera_center(self):
        """Camera origin expressed in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def camera_to_world(self):
        inv = np.eye(4)
        inv[:3, :3] = self.rotation.T
        inv[:3, 3] = self.camera_center
        return inv


@dataclass(frozen=True)
class ViewImage:
    rgb: np.ndarray  # (H, W, 3) float32 in [0, 1]
    gray: np.ndarray = field(init=False)  # (H, W) float64, derived

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float32)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DimensionMismatch(f"rgb must be (H, W, 3), got {rgb.shape}")
        if rgb.min() < 0.0 or rgb.max() > 1.0:
            raise ValidationError("rgb values must lie in [0, 1]")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "gray", grayscale(rgb))


@dataclass(frozen=True)
class DepthMap:
    depth: np.ndarray  # (H, W) float32, scene units
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float32)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.ndim != 2:
            raise DimensionMismatch(f"depth must be (H, W), got {depth.shape}")
        if valid.shape != depth.shape:
            raise DimensionMismatch(f"validity mask {valid.shape} does not match depth {depth.shape}")
        d = depth[valid]
        if d.size and (not np.all(np.isfinite(d)) or d.min() <= 0):
            raise ValidationError("valid depths must be finite and positive")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "valid", valid)


@dataclass(frozen=True)
class FeatureMap:
    features: np.ndarray  # (C, H, W) float32

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float32)
        if f.ndim != 3:
            raise DimensionMismatch(f"features must be (C, H, W), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValidationError("feature map contains non-finite values")
        object.__setattr__(self, "features", f)

    @property
    def channels(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class PosedView:
    image: ViewImage
    depth: DepthMap
    features: FeatureMap
    intrinsics: CameraIntrinsics
    pose: CameraPose
    view_id: int

    def __post_init__(self):
        h, w = self.image.rgb.shape[:2]
        if self.depth.depth.shape != (h, w):
            raise DimensionMismatch(
                f"view {self.view_id}: depth {self.depth.depth.shape} vs image {(h, w)}"
            )
        if self.features.features.shape[1:] != (h, w):
            raise DimensionMismatch(
                f"view {self.view_id}: features {self.features.features.shape[1:]} vs image {(h, w)}"
            )
        if (self.intrinsics.height, self.intrinsics.width) != (h, w):
            raise DimensionMismatch(
                f"view {self.view_id}: intrinsics {self.intrinsics.height}x{self.intrinsics.width}"
                f" vs raster {h}x{w}"
            )

    @property
    def shape(self):
        return self.image.rgb.shape[:2]


@dataclass(frozen=True)
class TargetView:
    """Held-out (image, camera) pair used only for evaluation."""

    image: ViewImage
    intrinsics: CameraIntrinsics
    pose: CameraPose


@dataclass(frozen=True)
class SceneBundle:
    views: tuple
    target_views: tuple = ()

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValidationError("a scene bundle needs at least one input view")
        ids = [v.view_id for v in views]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate view ids: {ids}")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "target_views", tuple(self.target_views))


def rgb_patch_features(rgb):
    """Flattened 3x3 RGB patch around each pixel, replicate padded.

    Channel order: (dy, dx, color) row major, so channel 13 is the center
    pixel's green value.  Returns (27, H, W) float32.
    """
    rgb = np.asarray(rgb, dtype=np.float32)
    padded = np.pad(rgb, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w = rgb.shape[:2]
    planes = []
    for dy in range(3):
        for dx in range(3):
            patch = padded[dy : dy + h, dx : dx + w]
            planes.extend(patch[..., c] for c in range(3))
    return np.stack(planes, axis=0)


def _read_png(path):
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    except FileNotFoundError as exc:
        raise MissingFile(f"missing image file {path}") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read image file {path}: {exc}") from exc
    return arr / 255.0


def _write_png(path, rgb):
    data = np.clip(np.asarray(rgb, dtype=np.float64) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    try:
        Image.fromarray(data, mode="RGB").save(path)
    except OSError as exc:
        raise IoFailure(f"cannot write image file {path}: {exc}") from exc


def _camera_record(intr, pose, extra=None):
    rec = {
        "fx": intr.fx,
        "fy": intr.fy,
        "cx": intr.cx,
        "cy": intr.cy,
        "width": intr.width,
        "height": intr.height,
        "world_to_camera": [float(x) for x in pose.world_to_camera.reshape(-1)],
    }
    if extra:
        rec.update(extra)
    return rec


def _camera_from_record(rec, name):
    try:
        intr = CameraIntrinsics(
            fx=float(rec["fx"]),
            fy=float(rec["fy"]),
            cx=float(rec["cx"]),
            cy=float(rec["cy"]),
            width=int(rec["width"]),
            height=int(rec["height"]),
        )
        m = np.asarray(rec["world_to_camera"], dtype=np.float64)
        if m.size != 16:
            raise NonRigidPose(f"{name}: world_to_camera must have 16 entries, got {m.size}")
        pose = CameraPose(m.reshape(4, 4))
    except KeyError as exc:
        raise ValidationError(f"{name}: camera record missing field {exc}") from exc
    return intr, pose


def save_scene_bundle(bundle, path):
    """Writes a bundle directory; load_scene_bundle inverts it bit-exactly
    for rasters and to 1e-12 for poses (poses go through JSON floats)."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create bundle directory {path}: {exc}") from exc

    cameras = {"version": 1, "views": [], "targets": []}
    for view in bundle.views:
        vid = view.view_id
        cameras["views"].append(_camera_record(view.intrinsics, view.pose, {"view_id": vid}))
        _write_png(os.path.join(path, f"view_{vid}.png"), view.image.rgb)
        tensorio.write_tensor(os.path.join(path, f"view_{vid}.depth"), view.depth.depth)
        tensorio.write_tensor(os.path.join(path, f"view_{vid}.feat"), view.features.features)
        mask = view.depth.valid.astype(np.uint8)
        try:
            mask.tofile(os.path.join(path, f"view_{vid}.mask"))
        except OSError as exc:
            raise IoFailure(f"cannot write mask for view {vid}: {exc}") from exc
    for i, target in enumerate(bundle.target_views):
        cameras["targets"].append(_camera_record(target.intrinsics, target.pose, {"index": i}))
        _write_png(os.path.join(path, f"target_{i}.png"), target.image.rgb)
    try:
        with open(os.path.join(path, "cameras.json"), "w") as fh:
            json.dump(cameras, fh, indent=1)
    except OSError as exc:
        raise IoFailure(f"cannot write cameras.json: {exc}") from exc


def load_scene_bundle(path):
    cam_path = os.path.join(path, "cameras.json")
    if not os.path.exists(cam_path):
        raise MissingFile(f"missing camera file {cam_path}")
    try:
        with open(cam_path) as fh:
            cameras = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {cam_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{cam_path} is not valid JSON: {exc}") from exc

    views = []
    for rec in cameras.get("views", []):
        vid = int(rec.get("view_id", len(views)))
        name = f"view_{vid}"
        intr, pose = _camera_from_record(rec, name)
        rgb = _read_png(os.path.join(path, f"{name}.png"))
        h, w = rgb.shape[:2]

        depth_path = os.path.join(path, f"{name}.depth")
        if not os.path.exists(depth_path):
            raise MissingFile(f"missing depth file {depth_path}")
        depth = tensorio.read_tensor(depth_path)
        if depth.ndim != 2:
            raise DimensionMismatch(f"{depth_path}: depth rank {depth.ndim}, expected 2")
        if depth.shape != (h, w):
            raise DimensionMismatch(f"{depth_path}: depth {depth.shape} vs image {(h, w)}")

        mask_path = os.path.join(path, f"{name}.mask")
        finite_pos = np.isfinite(depth) & (depth > 0)
        if os.path.exists(mask_path):
            raw = np.fromfile(mask_path, dtype=np.uint8)
            if raw.size != h * w:
                raise DimensionMismatch(f"{mask_path}: {raw.size} bytes for {h}x{w} raster")
            valid = (raw.reshape(h, w) != 0) & finite_pos
        else:
            valid = finite_pos

        feat_path = os.path.join(path, f"{name}.feat")
        if os.path.exists(feat_path):
            feats = tensorio.read_tensor(feat_path)
            if feats.ndim != 3:
                raise DimensionMismatch(f"{feat_path}: feature rank {feats.ndim}, expected 3")
            if feats.shape[1:] != (h, w):
                raise DimensionMismatch(f"{feat_path}: features {feats.shape[1:]} vs image {(h, w)}")
        else:
            feats = rgb_patch_features(rgb)

        views.append(
            PosedView(
                image=ViewImage(rgb.astype(np.float32)),
                depth=DepthMap(depth.astype(np.float32), valid),
                features=FeatureMap(feats.astype(np.float32)),
                intrinsics=intr,
                pose=pose,
                view_id=vid,
            )
        )

    targets = []
    for i, rec in enumerate(cameras.get("targets", [])):
        intr, pose = _camera_from_record(rec, f"target_{i}")
        rgb = _read_png(os.path.join(path, f"target_{i}.png"))
        targets.append(TargetView(ViewImage(rgb.astype(np.float32)), intr, pose))

    return SceneBundle(views=tuple(views), target_views=tuple(targets))
