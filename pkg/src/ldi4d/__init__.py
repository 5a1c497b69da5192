"""Layered-depth-image scene engine.

Builds a layered point cloud from a single image bundle (color, depth,
per-layer inpainting, motion field) and renders camera trajectories
through it with looped Eulerian motion.
"""

__version__ = "0.1.0"

from .assets import BundleError, ImageBuffer, SceneAssets, load_bundle, save_bundle
from .animation import EulerianFlow, displace_cloud, symmetric_clouds
from .camera import (
    CameraIntrinsics,
    CameraPose,
    Trajectory,
    autocruise_end_pose,
    build_trajectory,
    interpolate_pose,
    load_trajectory,
    relative_pose,
    render_intrinsics,
    save_trajectory,
)
from .codecs import CodecError, read_flo, read_pfm, read_png, write_flo, write_pfm, write_png
from .layering import (
    DepthIntervals,
    Layer,
    LayerConfig,
    LayerStack,
    LayeringError,
    assign_layers,
    build_layer_stack,
    cluster_depth,
    composite_overlay,
    remap_layer_depth,
)
from .metrics import MetricsReport, evaluate_sequence, photometric_consistency, psnr, ssim
from .pointcloud import FeaturePointCloud, lift_layers, save_ply
from .renderer import Framebuffer, SplatConfig, render_frame, render_sequence, splat
from .synthetic import PRESETS, SyntheticConfig, SyntheticScene, generate_scene

__all__ = [
    "BundleError",
    "CameraIntrinsics",
    "CameraPose",
    "CodecError",
    "DepthIntervals",
    "EulerianFlow",
    "FeaturePointCloud",
    "Framebuffer",
    "ImageBuffer",
    "Layer",
    "LayerConfig",
    "LayerStack",
    "LayeringError",
    "MetricsReport",
    "PRESETS",
    "SceneAssets",
    "SplatConfig",
    "SyntheticConfig",
    "SyntheticScene",
    "Trajectory",
    "assign_layers",
    "autocruise_end_pose",
    "build_layer_stack",
    "build_trajectory",
    "cluster_depth",
    "composite_overlay",
    "displace_cloud",
    "evaluate_sequence",
    "generate_scene",
    "interpolate_pose",
    "lift_layers",
    "load_bundle",
    "load_trajectory",
    "photometric_consistency",
    "psnr",
    "read_flo",
    "read_pfm",
    "read_png",
    "relative_pose",
    "remap_layer_depth",
    "render_frame",
    "render_intrinsics",
    "render_sequence",
    "save_bundle",
    "save_ply",
    "save_trajectory",
    "splat",
    "ssim",
    "symmetric_clouds",
    "write_flo",
    "write_pfm",
    "write_png",
]
