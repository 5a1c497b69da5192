"""Soft point splatting and sequence rendering.

Each point is rasterized as a truncated Gaussian disc: every pixel center
within ``radius`` of the projection receives alpha
``weight * exp(-gamma * r^2 / radius^2)``. Per pixel, contributions are
depth-sorted (nearest first, ties broken by point index), truncated to a
per-pixel budget, and composited front to back. The scatter core is a
set of numba kernels parallelized over output pixels, which keeps results
bit-identical regardless of thread count: every pixel is owned by exactly
one iteration and the compositing order is a fixed total order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

from .animation import EulerianFlow, symmetric_clouds
from .assets import ImageBuffer
from .camera import CameraIntrinsics, CameraPose, Trajectory, project_points
from .codecs import write_pfm, write_png
from .pointcloud import FeaturePointCloud

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplatConfig:
    """Splatting parameters.

    Attributes:
        radius: splat radius in pixels. With ``depth_adaptive`` set, each
            point's radius is scaled by reference_depth / point_depth, so
            discs shrink with distance like projected surface patches.
        gamma: Gaussian falloff rate inside the disc.
        alpha_threshold: pixels whose accumulated coverage stays below this
            are reported as holes.
        max_points_per_pixel: per-pixel compositing budget; the nearest
            contributions win.
        depth_adaptive: enable perspective radius scaling.
        reference_depth: depth at which an adaptive splat has exactly
            ``radius``; defaults to the median depth of the cloud.
        max_radius: safety clamp on any single splat's pixel radius.

    Points with non-positive weight are skipped entirely; they carry no
    alpha and must not occupy compositing slots.
    """

    radius: float = 1.0
    gamma: float = 1.0
    alpha_threshold: float = 0.05
    max_points_per_pixel: int = 8
    depth_adaptive: bool = False
    reference_depth: float | None = None
    max_radius: float = 64.0

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.alpha_threshold <= 1.0:
            raise ValueError(f"alpha_threshold {self.alpha_threshold!r} outside [0, 1]")
        if self.max_points_per_pixel < 1:
            raise ValueError("max_points_per_pixel must be >= 1")
        if self.max_radius < self.radius and not self.depth_adaptive:
            raise ValueError("max_radius must be >= radius")


@dataclass(frozen=True)
class Framebuffer:
    """One rendered frame.

    Attributes:
        color: (H, W, C) composited features.
        coverage: (H, W) accumulated alpha in [0, 1].
        depth: (H, W) camera depth of the nearest composited point, 0 where
            nothing landed.
        hole_mask: (H, W) pixels whose coverage is below the configured
            threshold.
    """

    color: np.ndarray
    coverage: np.ndarray
    depth: np.ndarray
    hole_mask: np.ndarray

    @property
    def hole_fraction(self) -> float:
        return float(self.hole_mask.mean())

    def color_image(self) -> ImageBuffer:
        return ImageBuffer(np.clip(self.color, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Numba kernels


@njit(cache=True)
def _count_hits(u, v, radius, width, height, counts):
    total = 0
    for i in range(u.shape[0]):
        r = radius[i]
        r2 = r * r
        x0 = int(np.ceil(u[i] - r))
        x1 = int(np.floor(u[i] + r))
        y0 = int(np.ceil(v[i] - r))
        y1 = int(np.floor(v[i] + r))
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > width - 1:
            x1 = width - 1
        if y1 > height - 1:
            y1 = height - 1
        for py in range(y0, y1 + 1):
            dy = py - v[i]
            for px in range(x0, x1 + 1):
                dx = px - u[i]
                if dx * dx + dy * dy <= r2:
                    counts[py * width + px] += 1
                    total += 1
    return total


@njit(cache=True)
def _fill_hits(u, v, z, weight, radius, gamma, width, height, cursor, hit_depth, hit_alpha, hit_point):
    for i in range(u.shape[0]):
        r = radius[i]
        r2 = r * r
        x0 = int(np.ceil(u[i] - r))
        x1 = int(np.floor(u[i] + r))
        y0 = int(np.ceil(v[i] - r))
        y1 = int(np.floor(v[i] + r))
        if x0 < 0:
            x0 = 0
        if y0 < 0:
            y0 = 0
        if x1 > width - 1:
            x1 = width - 1
        if y1 > height - 1:
            y1 = height - 1
        for py in range(y0, y1 + 1):
            dy = py - v[i]
            for px in range(x0, x1 + 1):
                dx = px - u[i]
                d2 = dx * dx + dy * dy
                if d2 <= r2:
                    pix = py * width + px
                    slot = cursor[pix]
                    cursor[pix] = slot + 1
                    hit_depth[slot] = z[i]
                    hit_alpha[slot] = weight[i] * np.exp(-gamma * d2 / r2)
                    hit_point[slot] = i


@njit(cache=True, parallel=True)
def _composite(
    offsets,
    counts,
    hit_depth,
    hit_alpha,
    hit_point,
    features,
    max_ppp,
    out_color,
    out_coverage,
    out_depth,
):
    npix = counts.shape[0]
    nchan = features.shape[1]
    for pix in prange(npix):
        cnt = counts[pix]
        if cnt == 0:
            continue
        off = offsets[pix]
        keep = cnt if cnt < max_ppp else max_ppp

        sel_depth = np.empty(keep, dtype=np.float64)
        sel_alpha = np.empty(keep, dtype=np.float64)
        sel_point = np.empty(keep, dtype=np.int64)
        filled = 0
        for j in range(off, off + cnt):
            d = hit_depth[j]
            p = hit_point[j]
            pos = filled
            while pos > 0 and (
                sel_depth[pos - 1] > d or (sel_depth[pos - 1] == d and sel_point[pos - 1] > p)
            ):
                pos -= 1
            if pos >= keep:
                continue
            top = filled if filled < keep else keep - 1
            m = top
            while m > pos:
                sel_depth[m] = sel_depth[m - 1]
                sel_alpha[m] = sel_alpha[m - 1]
                sel_point[m] = sel_point[m - 1]
                m -= 1
            sel_depth[pos] = d
            sel_alpha[pos] = hit_alpha[j]
            sel_point[pos] = p
            if filled < keep:
                filled += 1

        transmittance = 1.0
        coverage = 0.0
        for j in range(filled):
            a = sel_alpha[j]
            contrib = transmittance * a
            coverage += contrib
            src = sel_point[j]
            for c in range(nchan):
                out_color[pix, c] += contrib * features[src, c]
            transmittance *= 1.0 - a
        out_coverage[pix] = coverage
        out_depth[pix] = sel_depth[0]


# ---------------------------------------------------------------------------
# Public API


def point_radii(z: np.ndarray, config: SplatConfig) -> np.ndarray:
    """Per-point splat radius in pixels for camera depths ``z``."""
    if not config.depth_adaptive:
        return np.full(z.shape[0], min(config.radius, config.max_radius))
    reference = config.reference_depth
    if reference is None:
        reference = float(np.median(z)) if z.size else 1.0
    return np.minimum(config.radius * reference / z, config.max_radius)


def splat(
    positions: np.ndarray,
    features: np.ndarray,
    weights: np.ndarray,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    config: SplatConfig | None = None,
) -> Framebuffer:
    """Rasterize weighted feature points into a framebuffer.

    Behind-camera points and points with non-positive weight are skipped.
    Output is deterministic for a given input ordering: depth ties resolve
    by point index.
    """
    config = config or SplatConfig()
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    features = np.ascontiguousarray(features, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError(f"positions must be (N, 3), got {positions.shape}")
    if features.ndim != 2 or features.shape[0] != positions.shape[0]:
        raise ValueError("features must be (N, C) aligned with positions")
    if weights.shape != (positions.shape[0],):
        raise ValueError("weights must be (N,) aligned with positions")

    width, height = intrinsics.width, intrinsics.height
    nchan = features.shape[1]

    uv, z, in_front = project_points(positions, intrinsics, pose)
    keep = np.flatnonzero(in_front & (weights > 0.0))
    z_front = z[keep]
    radii = point_radii(z_front, config)

    u = uv[keep, 0]
    v = uv[keep, 1]
    on_frame = (
        (u + radii >= 0.0)
        & (u - radii <= width - 1)
        & (v + radii >= 0.0)
        & (v - radii <= height - 1)
    )
    keep = keep[on_frame]
    u = np.ascontiguousarray(u[on_frame])
    v = np.ascontiguousarray(v[on_frame])
    z_used = np.ascontiguousarray(z_front[on_frame])
    radii = np.ascontiguousarray(radii[on_frame])
    w_used = np.ascontiguousarray(weights[keep])
    feats_used = np.ascontiguousarray(features[keep])

    npix = width * height
    out_color = np.zeros((npix, nchan), dtype=np.float64)
    out_coverage = np.zeros(npix, dtype=np.float64)
    out_depth = np.zeros(npix, dtype=np.float64)

    if u.size:
        counts = np.zeros(npix, dtype=np.int64)
        total = _count_hits(u, v, radii, width, height, counts)
        if total:
            offsets = np.zeros(npix, dtype=np.int64)
            np.cumsum(counts[:-1], out=offsets[1:])
            hit_depth = np.empty(total, dtype=np.float64)
            hit_alpha = np.empty(total, dtype=np.float64)
            hit_point = np.empty(total, dtype=np.int64)
            _fill_hits(
                u, v, z_used, w_used, radii, config.gamma, width, height,
                offsets.copy(), hit_depth, hit_alpha, hit_point,
            )
            _composite(
                offsets, counts, hit_depth, hit_alpha, hit_point, feats_used,
                config.max_points_per_pixel, out_color, out_coverage, out_depth,
            )

    coverage = out_coverage.reshape(height, width)
    return Framebuffer(
        color=out_color.reshape(height, width, nchan),
        coverage=coverage,
        depth=out_depth.reshape(height, width),
        hole_mask=coverage < config.alpha_threshold,
    )


def render_frame(
    cloud: FeaturePointCloud,
    flow: EulerianFlow | None,
    t: int,
    trajectory: Trajectory,
    config: SplatConfig | None = None,
    animation_mask: np.ndarray | None = None,
) -> Framebuffer:
    """Render frame ``t`` of a trajectory with symmetric looped animation.

    The frame composites a forward-displaced copy of the cloud and a
    backward-displaced one in a single splatting pass, weighted
    ``1 - t/N`` and ``t/N`` over the loop of ``N = trajectory.loop_length``
    steps. Points whose two copies coincide (everything outside the
    animation mask, or the whole cloud when ``flow`` is None) are splatted
    once at full weight, so a motionless scene renders identically at
    every ``t``.
    """
    if not 0 <= t < len(trajectory):
        raise ValueError(f"frame index {t} outside 0..{len(trajectory) - 1}")
    pose, intrinsics = trajectory.frames[t]

    if flow is None:
        return splat(
            cloud.positions, cloud.features, np.ones(len(cloud)), intrinsics, pose, config
        )

    animated = symmetric_clouds(cloud, flow, t, trajectory.loop_length, animation_mask)
    still = np.all(animated.forward_positions == animated.backward_positions, axis=1)
    moving = ~still

    positions = [animated.forward_positions[still]]
    features = [cloud.features[still]]
    weights = [np.ones(int(still.sum()))]
    if moving.any():
        moving_feats = cloud.features[moving]
        positions += [animated.forward_positions[moving], animated.backward_positions[moving]]
        features += [moving_feats, moving_feats]
        count = int(moving.sum())
        weights += [
            np.full(count, animated.forward_weight),
            np.full(count, animated.backward_weight),
        ]

    return splat(
        np.concatenate(positions),
        np.concatenate(features),
        np.concatenate(weights),
        intrinsics,
        pose,
        config,
    )


def render_sequence(
    cloud: FeaturePointCloud,
    flow: EulerianFlow | None,
    trajectory: Trajectory,
    out_dir: str | Path,
    config: SplatConfig | None = None,
    animation_mask: np.ndarray | None = None,
    write_depth: bool = False,
) -> list[float]:
    """Render every trajectory frame to ``out_dir``.

    Writes ``frame_%04d.png`` (plus ``depth_%04d.pfm`` when requested) and
    a ``holes.txt`` report with one hole fraction per frame. Holes are
    left as recorded — nothing fills them in at render time. Returns the
    per-frame hole fractions.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    fractions: list[float] = []
    for t in range(len(trajectory)):
        frame = render_frame(cloud, flow, t, trajectory, config, animation_mask)
        write_png(out_dir / f"frame_{t:04d}.png", frame.color)
        if write_depth:
            write_pfm(out_dir / f"depth_{t:04d}.pfm", frame.depth)
        fractions.append(frame.hole_fraction)
        logger.debug("frame %d: hole fraction %.5f", t, fractions[-1])

    lines = [f"{t} {frac:.6f}" for t, frac in enumerate(fractions)]
    lines.append(f"mean {float(np.mean(fractions)):.6f}")
    (out_dir / "holes.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return fractions
