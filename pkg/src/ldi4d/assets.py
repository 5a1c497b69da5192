"""Scene bundle model: immutable image buffers plus directory-based I/O.

A scene bundle is a directory holding everything the engine needs to
animate one picture: the original frame, an outpainted enlargement with
recorded margins, a depth map over the outpainted frame, a 2D motion
field, and (optionally) per-layer inpainted colors with validity masks.
A UTF-8 ``manifest.txt`` names the files and records conventions such as
whether the depth map stores disparity. Keys under the ``model_``
namespace are reserved for provenance notes written by asset providers
(which tool produced the outpainting, depth, and so on); the engine
never interprets them and the validator accepts them silently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codecs import (
    CodecError,
    read_flo,
    read_pfm,
    read_png,
    write_flo,
    write_pfm,
    write_png,
)

MANIFEST_NAME = "manifest.txt"
MANIFEST_VERSION = 1
DISPARITY_EPS = 1e-6

_KNOWN_KEYS = {
    "manifest_version",
    "original",
    "outpainted",
    "depth",
    "flow",
    "margin_left",
    "margin_right",
    "margin_top",
    "margin_bottom",
    "depth_is_disparity",
    "layer_count",
    "fx",
    "fy",
    "cx",
    "cy",
    "prompt",
}


class BundleError(ValueError):
    """Raised when a bundle directory is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class ImageBuffer:
    """Immutable float image with row-major (H, W, C) samples.

    Color data lives in [0, 1]; depth and flow carry physical values.
    The backing array is always float64 and marked read-only.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"image buffer needs (H, W, C) data, got shape {arr.shape}")
        if arr.shape[2] not in (1, 2, 3):
            raise ValueError(f"unsupported channel count {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"empty image buffer shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image buffer contains non-finite samples")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class SceneAssets:
    """Everything loaded from one scene bundle.

    Attributes:
        original: source color frame.
        outpainted: enlarged color frame containing the original at the
            recorded margins.
        outpaint_margin: (left, right, top, bottom) pixel margins.
        depth: 1-channel strictly positive depth over the outpainted frame
            (larger means farther).
        flow: 2-channel motion field in pixels per frame, same size as the
            outpainted frame.
        inpainted_layers: optional front-to-back list of (color, validity
            mask) pairs covering occluded content per depth layer.
        intrinsics_hint: optional (fx, fy, cx, cy) recorded in the manifest.
        prompt: free-form text carried through for content providers; the
            engine never interprets it.
        manifest_version: schema version of the source manifest.
    """

    original: ImageBuffer
    outpainted: ImageBuffer
    outpaint_margin: tuple[int, int, int, int]
    depth: ImageBuffer
    flow: ImageBuffer
    inpainted_layers: list[tuple[ImageBuffer, ImageBuffer]] | None = None
    intrinsics_hint: tuple[float, float, float, float] | None = None
    prompt: str | None = None
    manifest_version: int = MANIFEST_VERSION

    def __post_init__(self) -> None:
        _validate_assets(self)


def _validate_assets(assets: SceneAssets) -> None:
    left, right, top, bottom = assets.outpaint_margin
    if min(left, right, top, bottom) < 0:
        raise BundleError(f"negative outpaint margin {assets.outpaint_margin}")
    ow, oh = assets.outpainted.width, assets.outpainted.height
    if assets.original.width + left + right != ow or assets.original.height + top + bottom != oh:
        raise BundleError(
            "outpainted size does not equal original plus margins: "
            f"{assets.original.width}x{assets.original.height} + {assets.outpaint_margin} "
            f"vs {ow}x{oh}"
        )
    if assets.depth.channels != 1:
        raise BundleError("depth map must have one channel")
    if (assets.depth.width, assets.depth.height) != (ow, oh):
        raise BundleError("depth map does not match outpainted dimensions")
    if np.any(assets.depth.data <= 0.0):
        bad = np.argwhere(assets.depth.data[:, :, 0] <= 0.0)[0]
        raise BundleError(f"non-positive depth at pixel (x={bad[1]}, y={bad[0]})")
    if assets.flow.channels != 2:
        raise BundleError("flow field must have two channels")
    if (assets.flow.width, assets.flow.height) != (ow, oh):
        raise BundleError("flow field does not match outpainted dimensions")
    if assets.inpainted_layers is not None:
        for idx, (color, mask) in enumerate(assets.inpainted_layers, start=1):
            if (color.width, color.height) != (ow, oh):
                raise BundleError(f"inpainted layer {idx} color does not match outpainted dimensions")
            if (mask.width, mask.height) != (ow, oh) or mask.channels != 1:
                raise BundleError(f"inpainted layer {idx} mask must be 1-channel at outpainted size")


# ---------------------------------------------------------------------------
# Manifest


def parse_manifest(text: str, origin: str = MANIFEST_NAME) -> dict[str, str]:
    """Parse ``key = value`` lines, ignoring blanks and ``#`` comments."""
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise BundleError(f"{origin}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise BundleError(f"{origin}:{lineno}: empty key")
        if key in entries:
            raise BundleError(f"{origin}:{lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def format_manifest(entries: dict[str, str]) -> str:
    lines = ["# ldi4d scene bundle"]
    lines.extend(f"{key} = {value}" for key, value in entries.items())
    return "\n".join(lines) + "\n"


def _manifest_int(entries: dict[str, str], key: str, origin: str) -> int:
    try:
        return int(entries[key])
    except KeyError:
        raise BundleError(f"{origin}: missing required key {key!r}") from None
    except ValueError:
        raise BundleError(f"{origin}: key {key!r} is not an integer: {entries[key]!r}") from None


def _manifest_bool(entries: dict[str, str], key: str, origin: str, default: bool) -> bool:
    raw = entries.get(key)
    if raw is None:
        return default
    lowered = raw.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise BundleError(f"{origin}: key {key!r} is not a boolean: {raw!r}")


# ---------------------------------------------------------------------------
# Bundle I/O


def load_bundle(path: str | Path) -> SceneAssets:
    """Load and validate a scene bundle directory.

    Loading is all-or-nothing: any missing or malformed file raises
    :class:`BundleError` naming the offending file. A depth map stored as
    disparity (``depth_is_disparity = true``) is converted to depth as
    ``1 / (value + 1e-6)`` on load.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not root.is_dir():
        raise BundleError(f"{root}: bundle directory does not exist")
    if not manifest_path.is_file():
        raise BundleError(f"{manifest_path}: manifest missing")

    origin = str(manifest_path)
    entries = parse_manifest(manifest_path.read_text(encoding="utf-8"), origin)

    version = _manifest_int(entries, "manifest_version", origin)
    if version != MANIFEST_VERSION:
        raise BundleError(f"{origin}: unsupported manifest_version {version}")

    layer_count = _manifest_int(entries, "layer_count", origin) if "layer_count" in entries else 0
    if layer_count < 0:
        raise BundleError(f"{origin}: negative layer_count")

    expected = set(_KNOWN_KEYS)
    for k in range(1, layer_count + 1):
        expected.add(f"layer_{k}_color")
        expected.add(f"layer_{k}_mask")
    unknown = sorted(
        key for key in set(entries) - expected if not key.startswith("model_")
    )
    if unknown:
        warnings.warn(f"{origin}: ignoring unknown manifest keys {unknown}", stacklevel=2)

    def resolve(key: str) -> Path:
        if key not in entries:
            raise BundleError(f"{origin}: missing required key {key!r}")
        target = root / entries[key]
        if not target.is_file():
            raise BundleError(f"{target}: file named by manifest key {key!r} is missing")
        return target

    def load_image(key: str, want_channels: tuple[int, ...]) -> ImageBuffer:
        target = resolve(key)
        try:
            data = read_png(target)
        except CodecError as exc:
            raise BundleError(str(exc)) from exc
        if data.shape[2] not in want_channels:
            raise BundleError(
                f"{target}: expected {want_channels} channel image, got {data.shape[2]}"
            )
        return ImageBuffer(data)

    original = load_image("original", (1, 3))
    outpainted = load_image("outpainted", (1, 3))

    depth_path = resolve("depth")
    try:
        depth_raw = read_pfm(depth_path)
    except CodecError as exc:
        raise BundleError(str(exc)) from exc
    if depth_raw.ndim != 2:
        raise BundleError(f"{depth_path}: depth map must be single channel")
    if not np.all(np.isfinite(depth_raw)):
        raise BundleError(f"{depth_path}: depth map contains non-finite samples")
    if _manifest_bool(entries, "depth_is_disparity", origin, default=False):
        depth_raw = 1.0 / (depth_raw + DISPARITY_EPS)
    if np.any(depth_raw <= 0.0):
        bad = np.argwhere(depth_raw <= 0.0)[0]
        raise BundleError(f"{depth_path}: non-positive depth at pixel (x={bad[1]}, y={bad[0]})")

    flow_path = resolve("flow")
    try:
        flow_raw = read_flo(flow_path)
    except CodecError as exc:
        raise BundleError(str(exc)) from exc
    if not np.all(np.isfinite(flow_raw)):
        raise BundleError(f"{flow_path}: flow field contains non-finite samples")

    margins = (
        _manifest_int(entries, "margin_left", origin),
        _manifest_int(entries, "margin_right", origin),
        _manifest_int(entries, "margin_top", origin),
        _manifest_int(entries, "margin_bottom", origin),
    )

    layers: list[tuple[ImageBuffer, ImageBuffer]] | None = None
    if layer_count > 0:
        layers = []
        for k in range(1, layer_count + 1):
            color = load_image(f"layer_{k}_color", (3,))
            mask = load_image(f"layer_{k}_mask", (1,))
            layers.append((color, mask))

    intrinsics_hint = None
    if any(k in entries for k in ("fx", "fy", "cx", "cy")):
        try:
            intrinsics_hint = (
                float(entries["fx"]),
                float(entries["fy"]),
                float(entries["cx"]),
                float(entries["cy"]),
            )
        except KeyError as exc:
            raise BundleError(f"{origin}: partial intrinsics (need fx, fy, cx, cy)") from exc
        except ValueError as exc:
            raise BundleError(f"{origin}: malformed intrinsics value ({exc})") from None

    try:
        return SceneAssets(
            original=original,
            outpainted=outpainted,
            outpaint_margin=margins,
            depth=ImageBuffer(depth_raw),
            flow=ImageBuffer(flow_raw),
            inpainted_layers=layers,
            intrinsics_hint=intrinsics_hint,
            prompt=entries.get("prompt"),
            manifest_version=version,
        )
    except BundleError as exc:
        raise BundleError(f"{origin}: {exc}") from exc


def save_bundle(assets: SceneAssets, path: str | Path) -> None:
    """Write a scene bundle directory; payloads survive a reload bit-exactly.

    Depth is always persisted as plain depth (never disparity), so
    ``load_bundle(save_bundle(a))`` reproduces ``a`` sample-for-sample for
    assets whose float maps carry float32-representable values, which holds
    for everything produced by this package.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    entries: dict[str, str] = {
        "manifest_version": str(assets.manifest_version),
        "original": "original.png",
        "outpainted": "outpainted.png",
        "depth": "depth.pfm",
        "flow": "flow.flo",
        "margin_left": str(assets.outpaint_margin[0]),
        "margin_right": str(assets.outpaint_margin[1]),
        "margin_top": str(assets.outpaint_margin[2]),
        "margin_bottom": str(assets.outpaint_margin[3]),
        "depth_is_disparity": "false",
        "layer_count": str(len(assets.inpainted_layers) if assets.inpainted_layers else 0),
    }

    write_png(root / "original.png", assets.original.data)
    write_png(root / "outpainted.png", assets.outpainted.data)
    write_pfm(root / "depth.pfm", assets.depth.data)
    write_flo(root / "flow.flo", assets.flow.data)

    if assets.inpainted_layers:
        layer_dir = root / "layers"
        layer_dir.mkdir(exist_ok=True)
        for k, (color, mask) in enumerate(assets.inpainted_layers, start=1):
            color_rel = f"layers/layer_{k}_color.png"
            mask_rel = f"layers/layer_{k}_mask.png"
            write_png(root / color_rel, color.data)
            write_png(root / mask_rel, mask.data)
            entries[f"layer_{k}_color"] = color_rel
            entries[f"layer_{k}_mask"] = mask_rel

    if assets.intrinsics_hint is not None:
        fx, fy, cx, cy = assets.intrinsics_hint
        entries["fx"] = repr(fx)
        entries["fy"] = repr(fy)
        entries["cx"] = repr(cx)
        entries["cy"] = repr(cy)
    if assets.prompt is not None:
        # The manifest is line-based; fold the prompt onto one line.
        entries["prompt"] = " ".join(assets.prompt.split())

    (root / MANIFEST_NAME).write_text(format_manifest(entries), encoding="utf-8")
