"""Command-line entry points.

Subcommands: ``synth`` builds a procedural scene bundle, ``layer`` runs
depth clustering and writes per-layer assets, ``animate`` renders the full
animated sequence for a bundle, ``render`` does the same with motion
forced off (the camera-only pass used for consistency scoring), and
``eval`` scores rendered frames. Exit codes: 0 on success, 1 on runtime
errors (single machine-parsable line on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .assets import SceneAssets, format_manifest, load_bundle, parse_manifest, save_bundle
from .animation import EulerianFlow
from .camera import (
    AutocruiseConfig,
    CameraIntrinsics,
    CameraPose,
    Trajectory,
    autocruise_end_pose,
    build_trajectory,
    load_trajectory,
    render_intrinsics,
    save_trajectory,
)
from .codecs import read_pfm, read_png, write_pfm, write_png
from .layering import LayerConfig, build_layer_stack, cluster_depth
from .metrics import evaluate_sequence
from .pointcloud import lift_layers, save_ply
from .renderer import SplatConfig, render_sequence
from .synthetic import PRESETS, SyntheticConfig, generate_scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for a render run."""

    bundle: Path
    out_dir: Path
    frames: int = 50
    trajectory_file: Path | None = None
    advance: float = 0.5
    flow_scale: float = 1.0
    layers: int | None = 3
    splat: SplatConfig = SplatConfig()
    write_depth: bool = False
    dump_cloud: bool = False
    prompt: str | None = None

    def __post_init__(self) -> None:
        if self.frames < 2:
            raise ValueError(f"need at least 2 frames, got {self.frames}")
        if self.flow_scale < 0.0:
            raise ValueError("flow scale must be >= 0")
        if not self.bundle.is_dir():
            raise ValueError(f"bundle directory {self.bundle} does not exist")
        if self.trajectory_file is not None and not self.trajectory_file.is_file():
            raise ValueError(f"trajectory file {self.trajectory_file} does not exist")


def _intrinsics_for(assets: SceneAssets) -> CameraIntrinsics:
    width, height = assets.outpainted.width, assets.outpainted.height
    if assets.intrinsics_hint is not None:
        fx, fy, cx, cy = assets.intrinsics_hint
        return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)
    return CameraIntrinsics.default_for(width, height)


def _build_stack(assets: SceneAssets, layers: int | None):
    config = LayerConfig(target_layers=layers)
    if assets.inpainted_layers is not None and layers is not None:
        # Honor the bundle's own layering when it disagrees with the request.
        if len(assets.inpainted_layers) != layers:
            config = LayerConfig(target_layers=len(assets.inpainted_layers))
    intervals = cluster_depth(assets.depth, config)
    return build_layer_stack(assets, intervals)


def _run_pipeline(config: RunConfig, animate: bool) -> int:
    """Shared load -> layer -> lift -> trajectory -> render chain."""
    assets = load_bundle(config.bundle)
    if config.prompt is not None:
        _record_prompt(config.bundle, config.prompt)

    stack = _build_stack(assets, config.layers)
    if not stack.inpainted:
        logger.warning("rendering without inpainted layers; expect holes at disocclusions")

    lift_intr = _intrinsics_for(assets)
    start = CameraPose.identity()
    cloud = lift_layers(stack, lift_intr, start)
    if config.dump_cloud:
        config.out_dir.mkdir(parents=True, exist_ok=True)
        save_ply(cloud, config.out_dir / "cloud.ply")

    out_intr = render_intrinsics(
        lift_intr, assets.outpaint_margin, assets.original.width, assets.original.height
    )
    if config.trajectory_file is not None:
        trajectory = load_trajectory(config.trajectory_file, out_intr)
    else:
        end = autocruise_end_pose(
            cloud.positions, lift_intr, start, AutocruiseConfig(advance_fraction=config.advance)
        )
        trajectory = build_trajectory(start, end, config.frames, out_intr)

    flow: EulerianFlow | None = None
    if animate and config.flow_scale > 0.0:
        flow = EulerianFlow(assets.flow).scaled(config.flow_scale)

    fractions = render_sequence(
        cloud, flow, trajectory, config.out_dir, config.splat, write_depth=config.write_depth
    )
    save_trajectory(trajectory, config.out_dir / "trajectory.txt")
    print(f"rendered {len(trajectory)} frames to {config.out_dir}")
    print(f"mean hole fraction {float(np.mean(fractions)):.6f}")
    return 0


def _record_prompt(bundle: Path, prompt: str) -> None:
    """Store the prompt in the bundle manifest; the engine never reads it back."""
    manifest_path = bundle / "manifest.txt"
    entries = parse_manifest(manifest_path.read_text(encoding="utf-8"), str(manifest_path))
    entries["prompt"] = " ".join(prompt.split())
    manifest_path.write_text(format_manifest(entries), encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_synth(args: argparse.Namespace) -> int:
    config = SyntheticConfig(
        width=args.width,
        height=args.height,
        margin=args.margin,
        layer_count=args.layers,
        gt_view_count=args.gt_views,
    )
    scene = generate_scene(args.preset, args.seed, config)
    out = Path(args.out)
    save_bundle(scene.assets, out)
    if args.prompt is not None:
        _record_prompt(out, args.prompt)

    gt_dir = out / "gt"
    gt_dir.mkdir(exist_ok=True)
    np.savetxt(gt_dir / "intervals.txt", scene.intervals.boundaries, fmt="%.9g")
    write_png(gt_dir / "fluid_mask.png", scene.fluid_mask.astype(np.float64))
    for layer in scene.stack.layers:
        write_pfm(gt_dir / f"layer_{layer.index}_depth.pfm", layer.depth.data)
    for i, view in enumerate(scene.gt_views):
        write_png(gt_dir / f"view_{i}.png", np.clip(view.color, 0.0, 1.0))
        write_pfm(gt_dir / f"view_{i}_depth.pfm", view.depth)
        write_png(gt_dir / f"view_{i}_exclude.png", view.disocclusion.astype(np.float64))
    if scene.gt_views:
        poses = Trajectory([(view.pose, scene.intrinsics) for view in scene.gt_views])
        save_trajectory(poses, gt_dir / "view_poses.txt")

    print(f"wrote {args.preset} scene (seed {args.seed}) to {out}")
    return 0


def _cmd_layer(args: argparse.Namespace) -> int:
    assets = load_bundle(Path(args.bundle))
    layers = None if args.layers == "auto" else int(args.layers)
    stack = _build_stack(assets, layers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "intervals.txt", stack.intervals.boundaries, fmt="%.9g")
    for layer in stack.layers:
        write_png(out / f"layer_{layer.index}_color.png", layer.color.data)
        write_png(out / f"layer_{layer.index}_mask.png", layer.mask.astype(np.float64))
        write_png(out / f"layer_{layer.index}_validity.png", layer.validity.astype(np.float64))
        write_pfm(out / f"layer_{layer.index}_depth.pfm", layer.depth.data)
    print(f"wrote {len(stack)} layers to {out} (inpainted={stack.inpainted})")
    return 0


def _splat_config(args: argparse.Namespace) -> SplatConfig:
    return SplatConfig(
        radius=args.radius,
        gamma=args.gamma,
        alpha_threshold=args.alpha_threshold,
        max_points_per_pixel=args.max_per_pixel,
        depth_adaptive=args.depth_adaptive,
    )


def _cmd_animate(args: argparse.Namespace, animate: bool = True) -> int:
    config = RunConfig(
        bundle=Path(args.bundle),
        out_dir=Path(args.out),
        frames=args.frames,
        trajectory_file=Path(args.trajectory) if args.trajectory != "auto" else None,
        advance=args.advance,
        flow_scale=args.flow_scale if animate else 0.0,
        layers=None if args.layers == "auto" else int(args.layers),
        splat=_splat_config(args),
        write_depth=args.write_depth,
        dump_cloud=args.dump_cloud,
        prompt=getattr(args, "prompt", None),
    )
    return _run_pipeline(config, animate)


def _cmd_render(args: argparse.Namespace) -> int:
    return _cmd_animate(args, animate=False)


def _cmd_eval(args: argparse.Namespace) -> int:
    which = tuple(name.strip() for name in args.metrics.split(",") if name.strip())
    pred_dir = Path(args.pred)
    pred_paths = sorted(pred_dir.glob("frame_*.png"))
    if not pred_paths:
        raise ValueError(f"no frame_*.png files under {pred_dir}")
    predicted = [read_png(p) for p in pred_paths]

    reference = None
    if args.gt is not None:
        gt_paths = sorted(Path(args.gt).glob("frame_*.png"))
        if len(gt_paths) != len(pred_paths):
            raise ValueError(
                f"prediction has {len(pred_paths)} frames but ground truth has {len(gt_paths)}"
            )
        reference = [read_png(p) for p in gt_paths]

    depths = None
    poses = None
    intrinsics = None
    if "consistency" in which:
        depth_dir = Path(args.depth) if args.depth else pred_dir
        depth_paths = sorted(depth_dir.glob("depth_*.pfm"))
        if len(depth_paths) != len(pred_paths):
            raise ValueError(
                f"need one depth_*.pfm per frame, found {len(depth_paths)} for {len(pred_paths)}"
            )
        depths = [read_pfm(p) for p in depth_paths]
        poses_file = Path(args.poses) if args.poses else pred_dir / "trajectory.txt"
        trajectory = load_trajectory(poses_file)
        if len(trajectory) != len(pred_paths):
            raise ValueError(
                f"trajectory has {len(trajectory)} poses for {len(pred_paths)} frames"
            )
        poses = [pose for pose, _ in trajectory.frames]
        intrinsics = trajectory.frames[0][1]

    report = evaluate_sequence(predicted, reference, depths, poses, intrinsics, which)
    if args.csv is not None:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    print(report.to_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_render_flags(parser: argparse.ArgumentParser, with_flow: bool) -> None:
    parser.add_argument("--bundle", required=True, help="scene bundle directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--frames", type=int, default=50, help="frame count for auto trajectories")
    parser.add_argument(
        "--trajectory", default="auto", help="'auto' or a trajectory file (overrides autocruise)"
    )
    parser.add_argument("--advance", type=float, default=0.5, help="autocruise advance fraction")
    parser.add_argument("--layers", default="3", help="layer count or 'auto'")
    if with_flow:
        parser.add_argument("--flow-scale", type=float, default=1.0, help="motion scale factor")
        parser.add_argument("--prompt", default=None, help="text recorded in the bundle manifest")
    parser.add_argument("--radius", type=float, default=1.0, help="splat radius in pixels")
    parser.add_argument("--gamma", type=float, default=1.0, help="splat falloff rate")
    parser.add_argument("--alpha-threshold", type=float, default=0.05, help="hole coverage cutoff")
    parser.add_argument("--max-per-pixel", type=int, default=8, help="per-pixel compositing budget")
    parser.add_argument("--depth-adaptive", action="store_true", help="scale splats by depth")
    parser.add_argument("--write-depth", action="store_true", help="also write depth_*.pfm")
    parser.add_argument("--dump-cloud", action="store_true", help="also write cloud.ply")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldi4d",
        description="Turn a still image bundle into a camera-consistent animated sequence.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p_synth.add_argument("--preset", choices=PRESETS, default="planes")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--width", type=int, default=160)
    p_synth.add_argument("--height", type=int, default=160)
    p_synth.add_argument("--margin", type=int, default=48)
    p_synth.add_argument("--layers", type=int, default=3)
    p_synth.add_argument("--gt-views", type=int, default=0)
    p_synth.add_argument("--prompt", default=None)
    p_synth.set_defaults(func=_cmd_synth)

    p_layer = sub.add_parser("layer", help="cluster depth and write per-layer assets")
    p_layer.add_argument("--bundle", required=True)
    p_layer.add_argument("--out", required=True)
    p_layer.add_argument("--layers", default="3", help="layer count or 'auto'")
    p_layer.set_defaults(func=_cmd_layer)

    p_animate = sub.add_parser("animate", help="render the full animated sequence")
    _add_render_flags(p_animate, with_flow=True)
    p_animate.set_defaults(func=_cmd_animate)

    p_render = sub.add_parser("render", help="render with motion forced off")
    _add_render_flags(p_render, with_flow=False)
    p_render.set_defaults(func=_cmd_render)

    p_eval = sub.add_parser("eval", help="score rendered frames")
    p_eval.add_argument("--pred", required=True, help="directory of frame_*.png")
    p_eval.add_argument("--gt", default=None, help="directory of reference frame_*.png")
    p_eval.add_argument("--depth", default=None, help="directory of depth_*.pfm (default: pred)")
    p_eval.add_argument("--poses", default=None, help="trajectory file (default: pred/trajectory.txt)")
    p_eval.add_argument("--metrics", default="psnr,ssim,consistency")
    p_eval.add_argument("--csv", default=None, help="also write a CSV report here")
    p_eval.set_defaults(func=_cmd_eval)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse arguments and execute; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        # One line per failure, prefixed with the raising class so scripts
        # can route on it (BundleError, CodecError, LayeringError, ...).
        message = " ".join(str(exc).split()) or "unspecified failure"
        print(f"error: {exc.__class__.__name__}: {message}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
