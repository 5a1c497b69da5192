"""Image quality and temporal consistency metrics.

PSNR and SSIM follow their standard definitions over [0, 1] images; SSIM
uses an 11x11 Gaussian window (sigma 1.5) evaluated only where the window
fits entirely inside the frame. Temporal consistency backward-warps the
next frame into the current view using the current frame's depth and the
relative camera motion, then reports the mean L1 difference scaled by
100. Perceptual (learned-feature) similarity has no implementation here:
it is reported as unavailable rather than approximated by a proxy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, CameraPose

PSNR_CAP = 99.0
_MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DISOCCLUSION_REL_THRESHOLD = 0.10
_EDGE_EPS = 1e-6


def _as_hwc(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected an image array, got shape {arr.shape}")
    return arr


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images, capped at 99."""
    a = _as_hwc(a)
    b = _as_hwc(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    coords = np.arange(SSIM_WINDOW, dtype=np.float64) - half
    taps = np.exp(-(coords**2) / (2.0 * SSIM_SIGMA**2))
    kernel = np.outer(taps, taps)
    return kernel / kernel.sum()


_SSIM_KERNEL = _gaussian_window()


def _windowed_mean(img: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local means over all fully interior windows."""
    windows = np.lib.stride_tricks.sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
    return np.einsum("ijkl,kl->ij", windows, _SSIM_KERNEL)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over interior windows; 1.0 for identical images.

    Multi-channel images average the per-channel scores.
    """
    a = _as_hwc(a)
    b = _as_hwc(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")

    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    scores = []
    for c in range(a.shape[2]):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x = _windowed_mean(x)
        mu_y = _windowed_mean(y)
        var_x = _windowed_mean(x * x) - mu_x**2
        var_y = _windowed_mean(y * y) - mu_y**2
        cov = _windowed_mean(x * y) - mu_x * mu_y
        score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        )
        scores.append(float(score.mean()))
    return float(np.mean(scores))


def bilinear_sample(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample an (H, W, C) image at float pixel coordinates."""
    img = _as_hwc(img)
    height, width = img.shape[:2]
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, width - 1)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, height - 1)
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (u - x0)[:, None]
    fy = (v - y0)[:, None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def disocclusion_estimate(
    depth: np.ndarray, threshold: float = DISOCCLUSION_REL_THRESHOLD, dilate: int = 1
) -> np.ndarray:
    """Pixels likely invalid under small view changes.

    Marks holes (non-positive depth) and pixels where a 4-neighbor depth
    jump exceeds ``threshold`` relative to the local depth, dilated by
    ``dilate`` pixels.
    """
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim == 3:
        d = d[:, :, 0]
    holes = d <= 0.0
    safe = np.where(holes, 1.0, d)

    jump = np.zeros_like(d)
    for shift_y, shift_x in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        neighbor = np.roll(safe, (shift_y, shift_x), axis=(0, 1))
        # Edge rolls wrap around; suppress the wrapped border rows/cols.
        diff = np.abs(safe - neighbor) / safe
        if shift_y == 1:
            diff[0, :] = 0.0
        elif shift_y == -1:
            diff[-1, :] = 0.0
        if shift_x == 1:
            diff[:, 0] = 0.0
        elif shift_x == -1:
            diff[:, -1] = 0.0
        np.maximum(jump, diff, out=jump)

    mask = holes | (jump > threshold)
    for _ in range(max(dilate, 0)):
        grown = mask.copy()
        grown[1:, :] |= mask[:-1, :]
        grown[:-1, :] |= mask[1:, :]
        grown[:, 1:] |= mask[:, :-1]
        grown[:, :-1] |= mask[:, 1:]
        mask = grown
    return mask


def photometric_consistency(
    frame: np.ndarray,
    next_frame: np.ndarray,
    depth: np.ndarray,
    step_pose: CameraPose,
    intrinsics: CameraIntrinsics,
    exclusion_mask: np.ndarray | None = None,
) -> float:
    """Mean L1 error (x100) after backward-warping the next frame.

    Every valid pixel of ``frame`` is lifted with ``depth``, moved by
    ``step_pose`` (the transform from this frame's camera to the next
    one's), projected, and compared against a bilinear sample of
    ``next_frame``. Skipped pixels: excluded ones, holes (non-positive
    depth), warps landing out of bounds, and — when no explicit exclusion
    mask is given — an estimated disocclusion band around depth edges.
    """
    frame = _as_hwc(frame)
    next_frame = _as_hwc(next_frame)
    if frame.shape != next_frame.shape:
        raise ValueError(f"shape mismatch {frame.shape} vs {next_frame.shape}")
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim == 3:
        d = d[:, :, 0]
    if d.shape != frame.shape[:2]:
        raise ValueError(f"depth shape {d.shape} does not match frame {frame.shape[:2]}")

    if exclusion_mask is None:
        excluded = disocclusion_estimate(d)
    else:
        excluded = np.asarray(exclusion_mask, dtype=bool)
    valid = (d > 0.0) & ~excluded
    if not valid.any():
        raise ValueError("no valid pixels left for consistency evaluation")

    ys, xs = np.nonzero(valid)
    z = d[ys, xs]
    cam = np.stack(
        [
            (xs - intrinsics.cx) / intrinsics.fx * z,
            (ys - intrinsics.cy) / intrinsics.fy * z,
            z,
        ],
        axis=1,
    )
    moved = cam @ step_pose.rotation().T + step_pose.translation
    z_new = moved[:, 2]
    in_front = z_new > 1e-6
    safe_z = np.where(in_front, z_new, 1.0)
    u_new = intrinsics.fx * moved[:, 0] / safe_z + intrinsics.cx
    v_new = intrinsics.fy * moved[:, 1] / safe_z + intrinsics.cy
    in_bounds = (
        in_front
        & (u_new >= -_EDGE_EPS)
        & (u_new <= intrinsics.width - 1 + _EDGE_EPS)
        & (v_new >= -_EDGE_EPS)
        & (v_new <= intrinsics.height - 1 + _EDGE_EPS)
    )
    if not in_bounds.any():
        raise ValueError("every warped pixel lands outside the next frame")

    sampled = bilinear_sample(next_frame, u_new[in_bounds], v_new[in_bounds])
    reference = frame[ys[in_bounds], xs[in_bounds]]
    return float(np.mean(np.abs(reference - sampled))) * 100.0


@dataclass(frozen=True)
class FrameMetrics:
    """Metrics attached to a single frame (consistency spans t to t+1)."""

    index: int
    psnr: float | None = None
    ssim: float | None = None
    consistency: float | None = None


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate metrics for a rendered sequence.

    ``lpips`` is always None: no perceptual model ships with this package,
    and the field exists so reports state that explicitly instead of
    silently substituting a different metric.
    """

    psnr: float | None
    ssim: float | None
    consistency: float | None
    frames: list[FrameMetrics] = field(default_factory=list)
    lpips: None = None

    def to_csv(self) -> str:
        lines = ["frame,psnr,ssim,consistency"]
        for fm in self.frames:
            cells = [str(fm.index)] + [
                "" if value is None else f"{value:.6f}"
                for value in (fm.psnr, fm.ssim, fm.consistency)
            ]
            lines.append(",".join(cells))
        mean_cells = [
            "" if value is None else f"{value:.6f}"
            for value in (self.psnr, self.ssim, self.consistency)
        ]
        lines.append(",".join(["mean"] + mean_cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = []
        for fm in self.frames:
            parts = [f"frame {fm.index:4d}"]
            if fm.psnr is not None:
                parts.append(f"psnr {fm.psnr:7.3f}")
            if fm.ssim is not None:
                parts.append(f"ssim {fm.ssim:6.4f}")
            if fm.consistency is not None:
                parts.append(f"consistency {fm.consistency:7.4f}")
            lines.append("  ".join(parts))
        summary = ["mean      "]
        if self.psnr is not None:
            summary.append(f"psnr {self.psnr:7.3f}")
        if self.ssim is not None:
            summary.append(f"ssim {self.ssim:6.4f}")
        if self.consistency is not None:
            summary.append(f"consistency {self.consistency:7.4f}")
        lines.append("  ".join(summary))
        lines.append("lpips unavailable (no perceptual model bundled)")
        return "\n".join(lines) + "\n"


def evaluate_sequence(
    predicted: list[np.ndarray],
    reference: list[np.ndarray] | None = None,
    depths: list[np.ndarray] | None = None,
    poses: list[CameraPose] | None = None,
    intrinsics: CameraIntrinsics | None = None,
    which: tuple[str, ...] = ("psnr", "ssim", "consistency"),
) -> MetricsReport:
    """Score a frame sequence.

    PSNR/SSIM need ``reference`` frames; consistency needs per-frame
    ``depths``, ``poses``, and ``intrinsics``. Consistency for frame t
    warps frame t+1 back through the relative pose step.
    """
    from .camera import relative_pose  # local import to keep module load light

    unknown = set(which) - {"psnr", "ssim", "consistency"}
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    want_fidelity = bool({"psnr", "ssim"} & set(which))
    if want_fidelity and reference is None:
        raise ValueError("psnr/ssim need reference frames")
    if reference is not None and len(reference) != len(predicted):
        raise ValueError("predicted and reference sequences differ in length")
    want_consistency = "consistency" in which
    if want_consistency:
        if depths is None or poses is None or intrinsics is None:
            raise ValueError("consistency needs depths, poses, and intrinsics")
        if len(depths) != len(predicted) or len(poses) != len(predicted):
            raise ValueError("depths/poses must align with predicted frames")

    frames: list[FrameMetrics] = []
    for t, pred in enumerate(predicted):
        frame_psnr = frame_ssim = frame_consistency = None
        if reference is not None and "psnr" in which:
            frame_psnr = psnr(pred, reference[t])
        if reference is not None and "ssim" in which:
            frame_ssim = ssim(pred, reference[t])
        if want_consistency and t + 1 < len(predicted):
            step = relative_pose(poses[t], poses[t + 1])
            frame_consistency = photometric_consistency(
                pred, predicted[t + 1], depths[t], step, intrinsics
            )
        frames.append(
            FrameMetrics(index=t, psnr=frame_psnr, ssim=frame_ssim, consistency=frame_consistency)
        )

    def mean_of(values: list[float | None]) -> float | None:
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present else None

    return MetricsReport(
        psnr=mean_of([f.psnr for f in frames]),
        ssim=mean_of([f.ssim for f in frames]),
        consistency=mean_of([f.consistency for f in frames]),
        frames=frames,
    )
