"""Lifting layer stacks into world-space feature point clouds.

Every valid pixel of every layer becomes one point carrying its color as
the feature vector. Points are ordered layer-major then row-major, so a
cloud built from the same stack is always identical — downstream
compositing relies on that ordering for deterministic depth ties.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, CameraPose, unproject_grid
from .layering import LayerStack


@dataclass(frozen=True)
class FeaturePointCloud:
    """World-space points with per-point features.

    Attributes:
        positions: (N, 3) world coordinates.
        features: (N, C) feature vectors (layer colors by default).
        source_pixel: (N, 2) integer (u, v) pixel of origin in the
            outpainted frame.
        layer_id: (N,) 1-based layer index per point.
        base_depth: (N,) camera depth each point was lifted at.
        intrinsics: intrinsics of the lifting camera.
        pose: pose of the lifting camera.
    """

    positions: np.ndarray
    features: np.ndarray
    source_pixel: np.ndarray
    layer_id: np.ndarray
    base_depth: np.ndarray
    intrinsics: CameraIntrinsics
    pose: CameraPose

    def __post_init__(self) -> None:
        n = self.positions.shape[0]
        if self.positions.shape != (n, 3):
            raise ValueError(f"positions must be (N, 3), got {self.positions.shape}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must be (N, C), got {self.features.shape}")
        if self.source_pixel.shape != (n, 2):
            raise ValueError(f"source_pixel must be (N, 2), got {self.source_pixel.shape}")
        if self.layer_id.shape != (n,) or self.base_depth.shape != (n,):
            raise ValueError("layer_id and base_depth must be (N,)")
        for name in ("positions", "features", "source_pixel", "layer_id", "base_depth"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def feature_channels(self) -> int:
        return self.features.shape[1]

    def with_positions(self, positions: np.ndarray) -> "FeaturePointCloud":
        """Copy of the cloud with replaced world positions."""
        return FeaturePointCloud(
            positions=np.ascontiguousarray(positions, dtype=np.float64),
            features=self.features,
            source_pixel=self.source_pixel,
            layer_id=self.layer_id,
            base_depth=self.base_depth,
            intrinsics=self.intrinsics,
            pose=self.pose,
        )


def lift_layers(
    stack: LayerStack, intrinsics: CameraIntrinsics, pose: CameraPose | None = None
) -> FeaturePointCloud:
    """Unproject every valid layer pixel into a world-space point.

    Points are emitted layer 1 first, each layer scanned row-major. The
    point count equals the sum of the layers' validity mask sizes.
    """
    pose = pose or CameraPose.identity()

    positions = []
    features = []
    pixels = []
    layer_ids = []
    depths = []
    for layer in stack.layers:
        ys, xs = np.nonzero(layer.validity)  # C order, i.e. row-major
        depth = layer.depth.data[ys, xs, 0]
        positions.append(unproject_grid(xs.astype(np.float64), ys.astype(np.float64), depth, intrinsics, pose))
        features.append(layer.color.data[ys, xs, :])
        pixels.append(np.stack([xs, ys], axis=1).astype(np.int64))
        layer_ids.append(np.full(ys.size, layer.index, dtype=np.int32))
        depths.append(depth)

    return FeaturePointCloud(
        positions=np.ascontiguousarray(np.concatenate(positions), dtype=np.float64),
        features=np.ascontiguousarray(np.concatenate(features), dtype=np.float64),
        source_pixel=np.concatenate(pixels),
        layer_id=np.concatenate(layer_ids),
        base_depth=np.ascontiguousarray(np.concatenate(depths), dtype=np.float64),
        intrinsics=intrinsics,
        pose=pose,
    )


def save_ply(cloud: FeaturePointCloud, path: str | Path) -> None:
    """Dump a cloud as ASCII PLY for inspection in external viewers.

    The first three feature channels are written as 8-bit RGB (grayscale
    features repeat into all three).
    """
    feats = cloud.features
    if feats.shape[1] >= 3:
        rgb = feats[:, :3]
    else:
        rgb = np.repeat(feats[:, :1], 3, axis=1)
    rgb8 = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)

    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for pos, col in zip(cloud.positions, rgb8):
        lines.append(f"{pos[0]:.6f} {pos[1]:.6f} {pos[2]:.6f} {col[0]} {col[1]} {col[2]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
