"""Procedural test scenes with exact ground truth, and a reference renderer.

Scenes are stacks of textured planes with disjoint depth ranges. The
visible regions partition the frame; each plane's content also extends
behind its occluders, so every layer has defined ground truth where a
moving camera can expose it. All randomness flows through one seeded
generator, textures land on the 8-bit grid, and float maps are rounded to
float32, so a scene survives a bundle round trip sample-exactly and two
calls with the same seed are bit-identical.

``reference_render`` is an independent gather-formulation implementation
of the splatting contract: per pixel it scans every point, keeps those
whose disc covers the pixel, sorts, and composites. It exists to check
the scatter renderer against and is deliberately simple and slow; ground
truth views are produced only by it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assets import ImageBuffer, SceneAssets
from .animation import EulerianFlow
from .camera import CameraIntrinsics, CameraPose, quat_to_matrix
from .layering import DepthIntervals, Layer, LayerStack
from .metrics import disocclusion_estimate
from .pointcloud import FeaturePointCloud, lift_layers
from .renderer import Framebuffer, SplatConfig

PRESETS = ("planes", "terraced-terrain", "corridor")

_BASE_COLORS = (
    (0.70, 0.55, 0.40),
    (0.42, 0.58, 0.38),
    (0.50, 0.45, 0.62),
    (0.55, 0.62, 0.72),
)


@dataclass(frozen=True)
class SyntheticConfig:
    """Shape and content controls for generated scenes.

    ``width``/``height`` are the original frame size; the outpainted frame
    adds ``margin`` pixels on every side.
    """

    width: int = 160
    height: int = 160
    margin: int = 48
    layer_count: int = 3
    flow_amplitude: float = 0.6
    noise_cells: int = 3
    noise_octaves: int = 3
    texture_contrast: float = 0.35
    gt_view_count: int = 0
    focal_pixels: float | None = None
    """Override for fx = fy; None keeps the outpainted-frame default.

    A focal shorter than the default widens the cone of generated content
    relative to the rendered crop, which is what orbit-style camera moves
    need to stay inside the populated region.
    """

    def __post_init__(self) -> None:
        if self.width < 16 or self.height < 16:
            raise ValueError("scene must be at least 16x16")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if not 2 <= self.layer_count <= 4:
            raise ValueError(f"layer_count must be 2..4, got {self.layer_count}")
        if self.flow_amplitude < 0.0:
            raise ValueError("flow_amplitude must be >= 0")
        if not 0 <= self.gt_view_count <= 4:
            raise ValueError("gt_view_count must be 0..4")
        if self.focal_pixels is not None and self.focal_pixels <= 0.0:
            raise ValueError("focal_pixels must be positive")


@dataclass(frozen=True)
class GroundTruthView:
    """A pose with its reference-rendered image, depth, and exclusion mask."""

    pose: CameraPose
    color: np.ndarray
    depth: np.ndarray
    disocclusion: np.ndarray


@dataclass(frozen=True)
class SyntheticScene:
    """A generated scene: bundle-ready assets plus exact ground truth."""

    preset: str
    seed: int
    config: SyntheticConfig
    assets: SceneAssets
    intrinsics: CameraIntrinsics
    intervals: DepthIntervals
    stack: LayerStack
    flow: EulerianFlow
    fluid_mask: np.ndarray
    gt_views: list[GroundTruthView] = field(default_factory=list)

    def lift(self) -> FeaturePointCloud:
        """Point cloud of the ground-truth stack at the identity camera."""
        return lift_layers(self.stack, self.intrinsics, CameraPose.identity())


# ---------------------------------------------------------------------------
# Procedural ingredients


def _value_noise(rng: np.random.Generator, height: int, width: int, cells: int, octaves: int) -> np.ndarray:
    """Deterministic multi-octave value noise in [0, 1]."""
    out = np.zeros((height, width))
    amplitude = 1.0
    total = 0.0
    for octave in range(octaves):
        n = cells * (2**octave)
        grid = rng.random((n + 1, n + 1))
        ys = np.linspace(0.0, n, height)
        xs = np.linspace(0.0, n, width)
        y0 = np.minimum(ys.astype(np.int64), n - 1)
        x0 = np.minimum(xs.astype(np.int64), n - 1)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        # Smoothstep weights keep texture gradients gentle.
        fy = fy * fy * (3.0 - 2.0 * fy)
        fx = fx * fx * (3.0 - 2.0 * fx)
        g00 = grid[np.ix_(y0, x0)]
        g01 = grid[np.ix_(y0, x0 + 1)]
        g10 = grid[np.ix_(y0 + 1, x0)]
        g11 = grid[np.ix_(y0 + 1, x0 + 1)]
        layer = (g00 * (1 - fx) + g01 * fx) * (1 - fy) + (g10 * (1 - fx) + g11 * fx) * fy
        out += amplitude * layer
        total += amplitude
        amplitude *= 0.5
    return out / total


def _texture(rng: np.random.Generator, height: int, width: int, base: tuple[float, float, float], config: SyntheticConfig) -> np.ndarray:
    """A quantized RGB texture around ``base`` with value-noise modulation."""
    noise = _value_noise(rng, height, width, config.noise_cells, config.noise_octaves)
    tint = _value_noise(rng, height, width, max(config.noise_cells - 1, 2), 2)
    tex = np.empty((height, width, 3))
    for c in range(3):
        swing = config.texture_contrast * (noise - 0.5) + 0.12 * (tint - 0.5) * (1 if c % 2 else -1)
        tex[:, :, c] = base[c] + swing
    return np.rint(np.clip(tex, 0.0, 1.0) * 255.0) / 255.0


@dataclass(frozen=True)
class _PlaneSpec:
    """One scene plane: where it is visible, its full extent, and its depth."""

    region: np.ndarray          # visible pixels (partition member)
    extent: np.ndarray          # all pixels with defined content
    depth: np.ndarray           # float32-rounded depth over the frame
    depth_range: tuple[float, float]


def _clamped_depth(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Round to float32 and clamp so samples stay inside [lo, hi] exactly."""
    arr = values.astype(np.float32)
    return np.clip(arr, np.float32(lo), np.float32(hi)).astype(np.float64)


def _rect(height: int, width: int, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    mask[int(y0 * height): int(y1 * height), int(x0 * width): int(x1 * width)] = True
    return mask


def _planes_spec(height: int, width: int, layer_count: int, margin: int) -> list[_PlaneSpec]:
    """Fronto-parallel cards in front of a full-frame backdrop.

    Cards are the photo's subject, so they are placed relative to the
    original-frame window; the outpainted margin stays card-free filler.
    Within that window they sit left and right of center, keeping the
    default forward autocruise path clear: only the backdrop spans the
    flight corridor.
    """
    crop_h = height - 2 * margin
    crop_w = width - 2 * margin

    def crop_rect(x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        ys = margin + int(y0 * crop_h)
        ye = margin + int(y1 * crop_h)
        xs = margin + int(x0 * crop_w)
        xe = margin + int(x1 * crop_w)
        mask[ys:ye, xs:xe] = True
        return mask

    card_rects = [
        crop_rect(0.72, 0.98, 0.48, 0.92),   # near card, right of center
        crop_rect(0.04, 0.28, 0.22, 0.75),   # mid card, left of center
        crop_rect(0.70, 0.96, 0.06, 0.38),   # extra card, upper right
    ]
    depth_levels = {
        2: [2.0],
        3: [2.0, 5.0],
        4: [2.0, 4.0, 6.5],
    }[layer_count]
    ranges = {2.0: (2.0, 2.0), 4.0: (4.0, 4.0), 5.0: (5.0, 5.0), 6.5: (6.5, 6.5)}

    specs: list[_PlaneSpec] = []
    for level, rect in zip(depth_levels, card_rects):
        specs.append(
            _PlaneSpec(
                region=rect,  # refined below
                extent=rect,
                depth=np.full((height, width), np.float32(level), dtype=np.float64),
                depth_range=ranges[level],
            )
        )
    backdrop = np.ones((height, width), dtype=bool)
    specs.append(
        _PlaneSpec(
            region=backdrop,
            extent=backdrop,
            depth=np.full((height, width), 10.0),
            depth_range=(10.0, 10.0),
        )
    )
    return specs


def _terraced_spec(height: int, width: int, layer_count: int) -> list[_PlaneSpec]:
    """Horizontal terraces rising away from the camera, nearest at the bottom."""
    yy = np.arange(height, dtype=np.float64)[:, None] / max(height - 1, 1)
    yn = np.broadcast_to(yy, (height, width))
    full = np.ones((height, width), dtype=bool)

    band_edges = {
        2: [1.0, 0.45, 0.0],
        3: [1.0, 0.60, 0.30, 0.0],
        4: [1.0, 0.68, 0.44, 0.22, 0.0],
    }[layer_count]
    band_ranges = {
        2: [(2.0, 3.25), (10.0, 10.0)],
        3: [(2.0, 3.25), (4.5, 6.0), (10.0, 10.0)],
        4: [(2.0, 3.25), (4.5, 6.0), (7.0, 8.5), (10.0, 10.0)],
    }[layer_count]
    grow = 0.10

    specs: list[_PlaneSpec] = []
    for i, (lo, hi) in enumerate(band_ranges):
        top, bottom = band_edges[i + 1], band_edges[i]  # yn decreases upward
        region = (yn >= top) & (yn < bottom) if i > 0 else (yn >= top)
        last = i == len(band_ranges) - 1
        if last:
            region = yn < bottom if i > 0 else full
            extent = full
            depth = np.full((height, width), np.float32(lo), dtype=np.float64)
        else:
            # Depth ramps from hi at the band's top edge to lo at its bottom.
            span = max(bottom - top, 1e-6)
            ramp = lo + (hi - lo) * (bottom - yn) / span
            depth = _clamped_depth(ramp, lo, hi)
            extent = region | ((yn >= bottom) & (yn < bottom + grow))
        specs.append(_PlaneSpec(region=region, extent=extent, depth=depth, depth_range=(lo, hi)))
    return specs


def _corridor_spec(height: int, width: int, layer_count: int) -> list[_PlaneSpec]:
    """Nested wall rings receding toward a full back wall."""
    ys = (np.arange(height, dtype=np.float64)[:, None] / max(height - 1, 1)) * 2.0 - 1.0
    xs = (np.arange(width, dtype=np.float64)[None, :] / max(width - 1, 1)) * 2.0 - 1.0
    m = np.maximum(np.abs(ys), np.abs(xs))  # max-norm distance from center
    full = np.ones((height, width), dtype=bool)

    ring_edges = {
        2: [1.0, 0.55, 0.0],
        3: [1.0, 0.64, 0.33, 0.0],
        4: [1.0, 0.72, 0.48, 0.26, 0.0],
    }[layer_count]
    ring_ranges = {
        2: [(2.0, 3.5), (9.5, 9.5)],
        3: [(2.0, 3.5), (4.5, 6.5), (9.5, 9.5)],
        4: [(2.0, 3.0), (4.0, 5.0), (6.0, 7.5), (9.5, 9.5)],
    }[layer_count]
    grow = 0.09

    specs: list[_PlaneSpec] = []
    for i, (lo, hi) in enumerate(ring_ranges):
        outer, inner = ring_edges[i], ring_edges[i + 1]
        last = i == len(ring_ranges) - 1
        if last:
            region = m <= outer if i > 0 else full
            extent = full
            depth = np.full((height, width), np.float32(lo), dtype=np.float64)
        else:
            region = (m <= outer) & (m > inner) if i > 0 else (m > inner)
            span = max(outer - inner, 1e-6)
            ramp = lo + (hi - lo) * (outer - m) / span
            depth = _clamped_depth(ramp, lo, hi)
            extent = region | ((m <= outer + grow) & (m > outer))
        specs.append(_PlaneSpec(region=region, extent=extent, depth=depth, depth_range=(lo, hi)))
    return specs


def _layer_intervals(specs: list[_PlaneSpec]) -> DepthIntervals:
    bounds = [specs[0].depth_range[0]]
    for near, far in zip(specs, specs[1:]):
        bounds.append((near.depth_range[1] + far.depth_range[0]) / 2.0)
    bounds.append(specs[-1].depth_range[1])
    return DepthIntervals(np.array(bounds))


def _fluid_flow(
    rng: np.random.Generator, height: int, width: int, band: np.ndarray, amplitude: float
) -> np.ndarray:
    """A rotational (curl-of-potential) flow field confined to ``band``."""
    phase_x, phase_y = rng.uniform(0.0, 2.0 * math.pi, size=2)
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    kx = 2.0 * math.pi / (0.55 * width)
    ky = 2.0 * math.pi / (0.80 * max(band.sum(axis=0).max(), 8))
    # psi = cos(kx x + px) cos(ky y + py); F = (d psi/dy, -d psi/dx)
    fu = -ky * np.cos(kx * xs + phase_x) * np.sin(ky * ys + phase_y)
    fv = kx * np.sin(kx * xs + phase_x) * np.cos(ky * ys + phase_y)
    flow = np.stack([fu, fv], axis=-1)

    rows = np.nonzero(band.any(axis=1))[0]
    taper = np.zeros((height, 1))
    if rows.size:
        y0, y1 = rows.min(), rows.max()
        span = max(y1 - y0, 1)
        t = (np.arange(height, dtype=np.float64) - y0) / span
        taper[:, 0] = np.clip(np.sin(np.pi * np.clip(t, 0.0, 1.0)), 0.0, 1.0)
    flow *= taper[:, :, None]
    flow *= band[:, :, None]

    peak = float(np.abs(flow).max())
    if peak > 0.0:
        flow *= amplitude / peak
    return flow.astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------------------
# Scene generation


def generate_scene(preset: str, seed: int, config: SyntheticConfig | None = None) -> SyntheticScene:
    """Build a deterministic synthetic scene for the given preset and seed."""
    config = config or SyntheticConfig()
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")

    out_w = config.width + 2 * config.margin
    out_h = config.height + 2 * config.margin
    rng = np.random.default_rng(seed)

    if preset == "planes":
        specs = _planes_spec(out_h, out_w, config.layer_count, config.margin)
    elif preset == "terraced-terrain":
        specs = _terraced_spec(out_h, out_w, config.layer_count)
    else:
        specs = _corridor_spec(out_h, out_w, config.layer_count)

    # Visible partition: nearest covering extent wins, front to back.
    claimed = np.zeros((out_h, out_w), dtype=bool)
    regions: list[np.ndarray] = []
    for spec in specs:
        region = spec.extent & ~claimed
        regions.append(region)
        claimed |= spec.extent
    if not claimed.all():
        raise AssertionError("preset does not cover the frame")

    textures = [
        _texture(rng, out_h, out_w, _BASE_COLORS[i % len(_BASE_COLORS)], config)
        for i in range(len(specs))
    ]

    color = np.zeros((out_h, out_w, 3))
    depth = np.zeros((out_h, out_w))
    for spec, region, tex in zip(specs, regions, textures):
        color[region] = tex[region]
        depth[region] = spec.depth[region]

    # Fluid band: the upper strip of the farthest plane's visible region.
    back = regions[-1]
    back_rows = np.nonzero(back.any(axis=1))[0]
    band_top = int(back_rows.min())
    band_h = max(int(0.22 * (back_rows.max() - band_top + 1)), 4)
    band = np.zeros((out_h, out_w), dtype=bool)
    band[band_top: band_top + band_h, :] = True
    band &= back
    flow = _fluid_flow(rng, out_h, out_w, band, config.flow_amplitude)

    intervals = _layer_intervals(specs)
    layers = []
    for i, (spec, region, tex) in enumerate(zip(specs, regions, textures), start=1):
        layer_color = np.where(spec.extent[:, :, None], tex, 0.0)
        layers.append(
            Layer(
                index=i,
                mask=region,
                validity=spec.extent,
                color=ImageBuffer(layer_color),
                depth=ImageBuffer(spec.depth),
                interval=intervals.interval(i),
            )
        )
    stack = LayerStack(layers=layers, intervals=intervals, inpainted=True)

    if config.focal_pixels is None:
        intrinsics = CameraIntrinsics.default_for(out_w, out_h)
    else:
        intrinsics = CameraIntrinsics(
            fx=config.focal_pixels,
            fy=config.focal_pixels,
            cx=out_w / 2.0,
            cy=out_h / 2.0,
            width=out_w,
            height=out_h,
        )
    m = config.margin
    original = color[m: out_h - m, m: out_w - m]
    assets = SceneAssets(
        original=ImageBuffer(original),
        outpainted=ImageBuffer(color),
        outpaint_margin=(m, m, m, m),
        depth=ImageBuffer(depth),
        flow=ImageBuffer(flow),
        inpainted_layers=[
            (layer.color, ImageBuffer(layer.validity.astype(np.float64))) for layer in layers
        ],
        intrinsics_hint=(intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy),
    )

    views: list[GroundTruthView] = []
    if config.gt_view_count:
        cloud = lift_layers(stack, intrinsics, CameraPose.identity())
        views = _make_gt_views(cloud, intrinsics, config.gt_view_count)

    return SyntheticScene(
        preset=preset,
        seed=seed,
        config=config,
        assets=assets,
        intrinsics=intrinsics,
        intervals=intervals,
        stack=stack,
        flow=EulerianFlow(assets.flow),
        fluid_mask=band,
        gt_views=views,
    )


def _make_gt_views(
    cloud: FeaturePointCloud, intrinsics: CameraIntrinsics, count: int
) -> list[GroundTruthView]:
    median_depth = float(np.median(cloud.base_depth))
    offsets = [
        np.array([0.02 * median_depth, 0.0, 0.0]),
        np.array([-0.02 * median_depth, 0.0, 0.0]),
        np.array([0.0, 0.0, 0.05 * median_depth]),
        np.array([0.0, -0.015 * median_depth, 0.02 * median_depth]),
    ]
    views = []
    for offset in offsets[:count]:
        pose = CameraPose(np.array([1.0, 0.0, 0.0, 0.0]), -offset)
        frame = reference_render(
            cloud.positions, cloud.features, np.ones(len(cloud)), intrinsics, pose
        )
        views.append(
            GroundTruthView(
                pose=pose,
                color=frame.color,
                depth=frame.depth,
                disocclusion=disocclusion_estimate(frame.depth) | frame.hole_mask,
            )
        )
    return views


# ---------------------------------------------------------------------------
# Reference renderer (gather formulation)


def reference_render(
    positions: np.ndarray,
    features: np.ndarray,
    weights: np.ndarray,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    config: SplatConfig | None = None,
) -> Framebuffer:
    """Render by scanning all points per pixel; same contract as ``splat``.

    O(pixels x points) and single-threaded by design — this is the slow,
    obviously-correct path that the scatter renderer is validated against.
    """
    config = config or SplatConfig()
    positions = np.asarray(positions, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)

    rot = quat_to_matrix(pose.quaternion)
    cam = positions @ rot.T + pose.translation
    z = cam[:, 2]
    keep = (z > 1e-6) & (weights > 0.0)

    width, height = intrinsics.width, intrinsics.height
    nchan = features.shape[1]
    color = np.zeros((height, width, nchan))
    coverage = np.zeros((height, width))
    depth_out = np.zeros((height, width))

    if np.any(keep):
        zk = z[keep]
        uk = intrinsics.fx * cam[keep, 0] / zk + intrinsics.cx
        vk = intrinsics.fy * cam[keep, 1] / zk + intrinsics.cy
        wk = weights[keep]
        fk = features[keep]
        if config.depth_adaptive:
            ref = config.reference_depth
            if ref is None:
                ref = float(np.median(zk))
            radii = np.minimum(config.radius * ref / zk, config.max_radius)
        else:
            radii = np.full(zk.size, min(config.radius, config.max_radius))
        r2 = radii * radii
        budget = config.max_points_per_pixel

        for py in range(height):
            dy2 = (py - vk) ** 2
            near_row = np.flatnonzero(dy2 <= r2)
            if near_row.size == 0:
                continue
            du = uk[near_row]
            dy2_row = dy2[near_row]
            r2_row = r2[near_row]
            for px in range(width):
                d2 = (px - du) ** 2 + dy2_row
                hit = np.flatnonzero(d2 <= r2_row)
                if hit.size == 0:
                    continue
                idx = near_row[hit]
                order = np.argsort(zk[idx], kind="stable")[:budget]
                chosen = idx[order]
                alphas = wk[chosen] * np.exp(
                    -config.gamma * d2[hit][order] / r2_row[hit][order]
                )
                transmittance = 1.0
                acc = np.zeros(nchan)
                cov = 0.0
                for a, f in zip(alphas, fk[chosen]):
                    contrib = transmittance * a
                    acc += contrib * f
                    cov += contrib
                    transmittance *= 1.0 - a
                color[py, px] = acc
                coverage[py, px] = cov
                depth_out[py, px] = zk[chosen[0]]

    return Framebuffer(
        color=color,
        coverage=coverage,
        depth=depth_out,
        hole_mask=coverage < config.alpha_threshold,
    )
