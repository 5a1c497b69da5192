"""Scene motion from a time-invariant 2D flow field.

The flow field assigns every pixel a constant velocity in pixels per
frame. Positions move by iterated Euler steps — each step samples the
field at the current (nearest-neighbor) location and adds or subtracts
it — so the field itself never changes over time. Displaced pixels are
lifted back to 3D at each point's original depth, which turns the 2D
field into world-space scene flow. Looping animation composites each
frame from a forward-displaced copy of the cloud and a backward-displaced
one whose cross-fade weights trade off linearly over the loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .assets import ImageBuffer
from .camera import unproject_grid
from .pointcloud import FeaturePointCloud

STATIC_FLOW_EPS = 1e-4

Direction = Literal["forward", "backward"]


@dataclass(frozen=True)
class EulerianFlow:
    """A constant-in-time pixel velocity field over the outpainted frame."""

    field: ImageBuffer

    def __post_init__(self) -> None:
        if self.field.channels != 2:
            raise ValueError(f"flow field needs 2 channels, got {self.field.channels}")

    @property
    def width(self) -> int:
        return self.field.width

    @property
    def height(self) -> int:
        return self.field.height

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.field.data[:, :, 0], self.field.data[:, :, 1])

    def animation_mask(self, threshold: float = STATIC_FLOW_EPS) -> np.ndarray:
        """Pixels considered animated: flow magnitude above ``threshold``."""
        return self.magnitude() > threshold

    def scaled(self, factor: float) -> "EulerianFlow":
        return EulerianFlow(ImageBuffer(self.field.data * float(factor)))


@dataclass(frozen=True)
class AnimatedCloud:
    """One animation instant: two displaced copies of a cloud plus weights.

    ``forward_weight + backward_weight == 1`` always holds; holes opened by
    one copy are covered by the other when both are splatted together.
    """

    source: FeaturePointCloud
    forward_positions: np.ndarray
    backward_positions: np.ndarray
    forward_weight: float
    backward_weight: float

    def __post_init__(self) -> None:
        n = len(self.source)
        if self.forward_positions.shape != (n, 3) or self.backward_positions.shape != (n, 3):
            raise ValueError("displaced positions must match the source cloud size")


def integrate_flow(
    flow: EulerianFlow,
    start: np.ndarray,
    steps: int,
    direction: Direction = "forward",
) -> np.ndarray:
    """Iterate Euler steps through the flow field.

    Each step samples the field with nearest-neighbor lookup at the current
    position and moves by +F (forward) or -F (backward). Positions are
    clamped to the frame bounds after every step, which also keeps the
    lookups in range.

    Args:
        flow: the velocity field.
        start: (N, 2) float pixel positions.
        steps: number of Euler steps (>= 0).
        direction: "forward" or "backward".

    Returns:
        (N, 2) displaced positions.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    sign = 1.0 if direction == "forward" else -1.0

    data = flow.field.data
    max_x = float(flow.width - 1)
    max_y = float(flow.height - 1)
    pos = np.array(start, dtype=np.float64)
    if pos.ndim == 1:
        pos = pos[None, :]
    np.clip(pos[:, 0], 0.0, max_x, out=pos[:, 0])
    np.clip(pos[:, 1], 0.0, max_y, out=pos[:, 1])

    for _ in range(steps):
        ix = np.rint(pos[:, 0]).astype(np.int64)
        iy = np.rint(pos[:, 1]).astype(np.int64)
        pos[:, 0] += sign * data[iy, ix, 0]
        pos[:, 1] += sign * data[iy, ix, 1]
        np.clip(pos[:, 0], 0.0, max_x, out=pos[:, 0])
        np.clip(pos[:, 1], 0.0, max_y, out=pos[:, 1])
    return pos


def displace_cloud(
    cloud: FeaturePointCloud,
    flow: EulerianFlow,
    steps: int,
    direction: Direction = "forward",
    animation_mask: np.ndarray | None = None,
) -> np.ndarray:
    """World positions of a cloud after ``steps`` of flow displacement.

    Each animated point's source pixel is advected through the field, and
    the displaced pixel is unprojected at the point's original depth with
    the lifting camera; the world-space displacement is applied to the
    point. Points outside the animation mask (by default: zero flow at
    their source pixel) keep their original positions exactly.
    """
    if (flow.width, flow.height) != (cloud.intrinsics.width, cloud.intrinsics.height):
        raise ValueError(
            f"flow field {flow.width}x{flow.height} does not match the lifting frame "
            f"{cloud.intrinsics.width}x{cloud.intrinsics.height}"
        )
    mask = flow.animation_mask() if animation_mask is None else np.asarray(animation_mask, dtype=bool)
    xs = cloud.source_pixel[:, 0]
    ys = cloud.source_pixel[:, 1]
    moving = mask[ys, xs]
    if steps == 0 or not moving.any():
        return np.array(cloud.positions)

    start = cloud.source_pixel[moving].astype(np.float64)
    displaced = integrate_flow(flow, start, steps, direction)
    base = unproject_grid(
        xs[moving].astype(np.float64),
        ys[moving].astype(np.float64),
        cloud.base_depth[moving],
        cloud.intrinsics,
        cloud.pose,
    )
    lifted = unproject_grid(
        displaced[:, 0], displaced[:, 1], cloud.base_depth[moving], cloud.intrinsics, cloud.pose
    )
    positions = np.array(cloud.positions)
    positions[moving] += lifted - base
    return positions


def symmetric_clouds(
    cloud: FeaturePointCloud,
    flow: EulerianFlow,
    t: int,
    loop_length: int,
    animation_mask: np.ndarray | None = None,
) -> AnimatedCloud:
    """Displaced cloud pair for frame ``t`` of an ``loop_length``-step loop.

    The forward copy advects ``t`` steps forward; the backward copy advects
    ``loop_length - t`` steps against the flow. Their cross-fade weights
    are ``1 - t/loop_length`` and ``t/loop_length``, which sum to one and
    hand the frame fully to the forward copy at t = 0 and fully to the
    backward copy at t = loop_length.
    """
    if loop_length < 1:
        raise ValueError(f"loop_length must be >= 1, got {loop_length}")
    if not 0 <= t <= loop_length:
        raise ValueError(f"frame index {t} outside 0..{loop_length}")

    forward = displace_cloud(cloud, flow, t, "forward", animation_mask)
    backward = displace_cloud(cloud, flow, loop_length - t, "backward", animation_mask)
    backward_weight = t / loop_length
    return AnimatedCloud(
        source=cloud,
        forward_positions=forward,
        backward_positions=backward,
        forward_weight=1.0 - backward_weight,
        backward_weight=backward_weight,
    )
