"""Depth layering: cluster a depth map into intervals and build RGB layers.

The depth range is split by single-linkage agglomerative clustering of the
sorted depth samples, which for 1-D data amounts to cutting the largest
gaps between consecutive values. Each resulting interval becomes one scene
layer; per-layer depth is re-estimated over an overlay composite and then
remapped affinely back into the layer's interval so the stack stays
depth-ordered front to back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assets import ImageBuffer, SceneAssets

logger = logging.getLogger(__name__)

MAX_CLUSTER_SAMPLES = 65536


class LayeringError(ValueError):
    """Raised when layering preconditions are violated."""


@dataclass(frozen=True)
class LayerConfig:
    """Controls depth clustering.

    Attributes:
        target_layers: exact number of layers to produce; None lets the
            merge threshold decide.
        merge_threshold: stop merging once the smallest inter-cluster gap
            exceeds this fraction of the observed depth range.
        min_interval_width: interval width used for a constant depth map.
        max_samples: cap on depth samples fed to clustering.
    """

    target_layers: int | None = 3
    merge_threshold: float = 0.05
    min_interval_width: float = 1e-3
    max_samples: int = MAX_CLUSTER_SAMPLES

    def __post_init__(self) -> None:
        if self.target_layers is not None and self.target_layers < 1:
            raise ValueError(f"target_layers must be >= 1, got {self.target_layers}")
        if not 0.0 < self.merge_threshold < 1.0:
            raise ValueError(f"merge_threshold {self.merge_threshold!r} outside (0, 1)")
        if self.min_interval_width <= 0.0:
            raise ValueError("min_interval_width must be positive")
        if self.max_samples < 2:
            raise ValueError("max_samples must be >= 2")


@dataclass(frozen=True)
class DepthIntervals:
    """L+1 increasing boundaries delimiting L half-open depth intervals.

    Interval i covers [boundaries[i], boundaries[i+1]), except the last,
    which is closed on the right.
    """

    boundaries: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.boundaries, dtype=np.float64).reshape(-1).copy()
        if b.size < 2:
            raise ValueError("need at least two boundaries")
        if not np.all(np.diff(b) > 0.0):
            raise ValueError(f"boundaries must be strictly increasing, got {b.tolist()}")
        b.flags.writeable = False
        object.__setattr__(self, "boundaries", b)

    @property
    def count(self) -> int:
        return self.boundaries.size - 1

    def interval(self, index: int) -> tuple[float, float]:
        """Bounds of 1-based layer ``index`` (1 is nearest)."""
        if not 1 <= index <= self.count:
            raise IndexError(f"layer index {index} outside 1..{self.count}")
        return float(self.boundaries[index - 1]), float(self.boundaries[index])


@dataclass(frozen=True)
class Layer:
    """One depth layer of the scene, front to back.

    Attributes:
        index: 1-based position in the stack (1 is nearest).
        mask: pixels whose clustered depth falls in the layer's interval.
        validity: pixels where ``color`` holds defined content; a superset
            of ``mask`` when inpainted content is available.
        color: layer colors over the outpainted frame.
        depth: per-layer depth, remapped into the layer's interval.
        interval: (near, far) depth bounds.
    """

    index: int
    mask: np.ndarray
    validity: np.ndarray
    color: ImageBuffer
    depth: ImageBuffer
    interval: tuple[float, float]


@dataclass(frozen=True)
class LayerStack:
    """Front-to-back layers plus the intervals that produced them."""

    layers: list[Layer]
    intervals: DepthIntervals
    inpainted: bool = True

    def __len__(self) -> int:
        return len(self.layers)


# ---------------------------------------------------------------------------
# Clustering


def _cluster_cuts_for_target(diffs: np.ndarray, target: int) -> np.ndarray:
    """Indices of the gaps that survive merging down to ``target`` clusters.

    Single-linkage merging consumes gaps smallest-first, leftmost-first on
    ties, so the surviving cut gaps are the target-1 largest with ties
    resolved toward the right.
    """
    order = np.lexsort((np.arange(diffs.size), diffs))
    return np.sort(order[diffs.size - (target - 1):])


def cluster_depth(depth: np.ndarray | ImageBuffer, config: LayerConfig | None = None) -> DepthIntervals:
    """Split a depth map's value range into layer intervals.

    At most ``config.max_samples`` uniformly sampled depth values reach the
    clustering; the outer boundaries always come from the full map's min
    and max. A constant map yields one interval of the configured minimal
    width. With ``target_layers`` unset, merging stops once the smallest
    inter-cluster gap exceeds ``merge_threshold`` times the depth range.

    Raises:
        LayeringError: on an empty map, or when ``target_layers`` exceeds
            the number of distinct depth values.
    """
    config = config or LayerConfig()
    if isinstance(depth, ImageBuffer):
        values = depth.data.reshape(-1)
    else:
        values = np.asarray(depth, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise LayeringError("empty depth map")

    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= 0.0:
        if config.target_layers is not None and config.target_layers > 1:
            raise LayeringError(
                f"target_layers={config.target_layers} exceeds 1 distinct depth value"
            )
        return DepthIntervals(np.array([lo, lo + config.min_interval_width]))

    if values.size > config.max_samples:
        picks = np.linspace(0, values.size - 1, config.max_samples).astype(np.int64)
        values = values[picks]
    samples = np.sort(values)
    diffs = np.diff(samples)

    if config.target_layers is not None:
        distinct = int(np.count_nonzero(diffs)) + 1
        if config.target_layers > distinct:
            raise LayeringError(
                f"target_layers={config.target_layers} exceeds {distinct} distinct depth values"
            )
        cuts = _cluster_cuts_for_target(diffs, config.target_layers)
    else:
        cuts = np.flatnonzero(diffs > config.merge_threshold * (hi - lo))

    # Interior boundary between clusters = midpoint of the straddling values.
    interior = (samples[cuts] + samples[cuts + 1]) / 2.0
    return DepthIntervals(np.concatenate([[lo], interior, [hi]]))


def assign_layers(depth: np.ndarray | ImageBuffer, intervals: DepthIntervals) -> np.ndarray:
    """Label every pixel with its 1-based layer index.

    Intervals are half-open with a closed last interval; depths outside the
    boundary range clamp to the nearest layer so the masks always partition
    the image.
    """
    if isinstance(depth, ImageBuffer):
        data = depth.data[:, :, 0]
    else:
        data = np.asarray(depth, dtype=np.float64)
        if data.ndim == 3:
            data = data[:, :, 0]
    bounds = intervals.boundaries
    labels = np.searchsorted(bounds, data, side="right").astype(np.int32)
    np.clip(labels, 1, intervals.count, out=labels)
    return labels


def composite_overlay(layers: list[tuple[ImageBuffer, np.ndarray]], from_index: int = 1) -> ImageBuffer:
    """Overlay layers from ``from_index`` to the back, nearest valid wins.

    Args:
        layers: front-to-back (color, validity mask) pairs.
        from_index: 1-based index of the nearest layer to include.

    Raises:
        LayeringError: if some pixel is valid in no included layer; the
            message names the first uncovered pixel.
    """
    if not layers:
        raise LayeringError("no layers to composite")
    if not 1 <= from_index <= len(layers):
        raise LayeringError(f"from_index {from_index} outside 1..{len(layers)}")

    tail = layers[from_index - 1:]
    first_color = tail[0][0]
    out = np.zeros_like(first_color.data)
    filled = np.zeros((first_color.height, first_color.width), dtype=bool)
    for color, validity in tail:
        mask = np.asarray(validity, dtype=bool)
        if mask.ndim == 3:
            mask = mask[:, :, 0]
        take = mask & ~filled
        out[take] = color.data[take]
        filled |= mask
    if not filled.all():
        y, x = np.argwhere(~filled)[0]
        raise LayeringError(f"uncovered pixel (x={x}, y={y}) when compositing from layer {from_index}")
    return ImageBuffer(out)


def remap_layer_depth(
    predicted: np.ndarray | ImageBuffer, mask: np.ndarray, interval: tuple[float, float]
) -> np.ndarray:
    """Affinely remap masked depth values into ``interval``.

    The masked minimum maps exactly to the interval's near bound and the
    maximum exactly to the far bound; constant input lands on the interval
    midpoint. The map is monotone non-decreasing.

    Raises:
        LayeringError: if the mask selects no pixels.
    """
    if isinstance(predicted, ImageBuffer):
        data = predicted.data[:, :, 0]
    else:
        data = np.asarray(predicted, dtype=np.float64)
        if data.ndim == 3:
            data = data[:, :, 0]
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 3:
        mask = mask[:, :, 0]
    if not mask.any():
        raise LayeringError("empty mask in depth remap")
    near, far = float(interval[0]), float(interval[1])
    if far <= near:
        raise LayeringError(f"degenerate interval ({near}, {far})")

    masked = data[mask]
    lo = float(masked.min())
    hi = float(masked.max())
    out = np.full_like(data, (near + far) / 2.0)
    if hi > lo:
        t = (data - lo) / (hi - lo)
        remapped = np.clip(near + (far - near) * t, near, far)
        # Pin the extremes so the output range hits the bounds exactly.
        remapped[data == lo] = near
        remapped[data == hi] = far
        out[mask] = remapped[mask]
    return out


def build_layer_stack(
    assets: SceneAssets,
    intervals: DepthIntervals,
    per_layer_depth: list[np.ndarray | ImageBuffer] | None = None,
) -> LayerStack:
    """Assemble the front-to-back layer stack for a scene.

    Colors come from the bundle's inpainted layers when present; otherwise
    the stack falls back to raw masked colors (validity equals the raw
    masks) and flags itself as not inpainted — renders will then show
    holes at disocclusions. Per-layer depth defaults to the scene depth
    map and is remapped into each layer's interval over its validity mask.

    Raises:
        LayeringError: on layer-count mismatches or empty layers.
    """
    labels = assign_layers(assets.depth, intervals)
    count = intervals.count

    inpainted = assets.inpainted_layers is not None
    if inpainted and len(assets.inpainted_layers) != count:
        raise LayeringError(
            f"bundle has {len(assets.inpainted_layers)} inpainted layers, clustering produced {count}"
        )
    if per_layer_depth is not None and len(per_layer_depth) != count:
        raise LayeringError(
            f"got {len(per_layer_depth)} per-layer depth maps, clustering produced {count}"
        )
    if not inpainted:
        logger.warning("bundle has no inpainted layers; building stack from raw masked colors")

    layers: list[Layer] = []
    for i in range(1, count + 1):
        raw_mask = labels == i
        if not raw_mask.any():
            raise LayeringError(f"layer {i} has an empty mask")
        if inpainted:
            color, validity_img = assets.inpainted_layers[i - 1]
            validity = validity_img.data[:, :, 0] > 0.5
            if not (validity | ~raw_mask).all():
                y, x = np.argwhere(raw_mask & ~validity)[0]
                raise LayeringError(
                    f"layer {i} validity does not cover its own mask at (x={x}, y={y})"
                )
        else:
            color = ImageBuffer(np.where(raw_mask[:, :, None], assets.outpainted.data, 0.0))
            validity = raw_mask

        predicted = per_layer_depth[i - 1] if per_layer_depth is not None else assets.depth
        remapped = remap_layer_depth(predicted, validity, intervals.interval(i))
        layers.append(
            Layer(
                index=i,
                mask=raw_mask,
                validity=validity,
                color=color,
                depth=ImageBuffer(remapped),
                interval=intervals.interval(i),
            )
        )
    return LayerStack(layers=layers, intervals=intervals, inpainted=inpainted)
