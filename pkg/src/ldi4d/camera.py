"""Pinhole camera model, world-to-camera poses, and trajectory tools.

Conventions: world space equals the first camera's frame (x right, y down,
z forward), so the starting pose is the identity. A pose maps world points
into camera space as ``x_cam = R @ X + t`` with the rotation stored as a
unit quaternion in (w, x, y, z) order. Pixel coordinates put integer
positions at sample centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MIN_PROJECT_DEPTH = 1e-6
UNIT_NORM_TOL = 1e-9
DEFAULT_FOCAL_FACTOR = 0.8


class BehindCameraError(ValueError):
    """Raised when a point sits at or behind the camera plane."""


# ---------------------------------------------------------------------------
# Quaternion helpers (w, x, y, z)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ValueError("zero quaternion")
    return q / norm


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Convert a unit quaternion to a 3x3 rotation matrix."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Convert a rotation matrix to a unit quaternion with w >= 0."""
    m = np.asarray(m, dtype=np.float64)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0.0:
        s = np.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_slerp(q0: np.ndarray, q1: np.ndarray, s: float) -> np.ndarray:
    """Shortest-arc spherical interpolation between two unit quaternions.

    The endpoints are returned verbatim at s = 0 and s = 1 so trajectory
    ends stay bit-exact.
    """
    if s == 0.0:
        return np.array(q0, dtype=np.float64)
    if s == 1.0:
        return np.array(q1, dtype=np.float64)
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-9:
        return quat_normalize((1.0 - s) * q0 + s * q1)
    sin_theta = np.sin(theta)
    blended = (np.sin((1.0 - s) * theta) * q0 + np.sin(s * theta) * q1) / sin_theta
    return quat_normalize(blended)


# ---------------------------------------------------------------------------
# Core types


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics over a specific sample grid."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError(f"non-positive focal length ({self.fx}, {self.fy})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"empty image plane {self.width}x{self.height}")

    @classmethod
    def default_for(cls, width: int, height: int) -> "CameraIntrinsics":
        """Default intrinsics: focal 0.8 * max(width, height), centered."""
        focal = DEFAULT_FOCAL_FACTOR * max(width, height)
        return cls(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: ``x_cam = R(quaternion) @ X + translation``."""

    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4).copy()
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"quaternion norm {norm!r} is not 1 within {UNIT_NORM_TOL}")
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_quat(cls, quaternion: np.ndarray, translation: np.ndarray) -> "CameraPose":
        """Build a pose, normalizing the quaternion first."""
        return cls(quat_normalize(quaternion), np.asarray(translation, dtype=np.float64))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation().T @ self.translation

    def inverse(self) -> "CameraPose":
        rot = self.rotation().T
        return CameraPose(matrix_to_quat(rot), -rot @ self.translation)


def relative_pose(from_pose: CameraPose, to_pose: CameraPose) -> CameraPose:
    """Transform taking points in ``from_pose`` camera space into ``to_pose``'s."""
    r_from = from_pose.rotation()
    r_to = to_pose.rotation()
    r_rel = r_to @ r_from.T
    t_rel = to_pose.translation - r_rel @ from_pose.translation
    return CameraPose(matrix_to_quat(r_rel), t_rel)


# ---------------------------------------------------------------------------
# Projection


def project(point: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose) -> tuple[float, float, float]:
    """Project one world point to (u, v, camera depth).

    Raises:
        BehindCameraError: if the camera-space depth is <= 1e-6.
    """
    cam = pose.rotation() @ np.asarray(point, dtype=np.float64) + pose.translation
    z = float(cam[2])
    if z <= MIN_PROJECT_DEPTH:
        raise BehindCameraError(f"point depth {z!r} is behind the camera")
    u = intrinsics.fx * float(cam[0]) / z + intrinsics.cx
    v = intrinsics.fy * float(cam[1]) / z + intrinsics.cy
    return u, v, z


def unproject(u: float, v: float, depth: float, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """Lift pixel (u, v) at camera depth ``depth`` back to a world point."""
    if depth <= 0.0:
        raise ValueError(f"non-positive depth {depth!r}")
    x = (u - intrinsics.cx) / intrinsics.fx * depth
    y = (v - intrinsics.cy) / intrinsics.fy * depth
    cam = np.array([x, y, depth], dtype=np.float64)
    return pose.rotation().T @ (cam - pose.translation)


def project_points(
    points: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection.

    Returns:
        (uv, z, valid) where ``uv`` is (N, 2), ``z`` is (N,) camera depth,
        and ``valid`` flags points in front of the camera.
    """
    pts = np.asarray(points, dtype=np.float64)
    cam = pts @ pose.rotation().T + pose.translation
    z = cam[:, 2]
    valid = z > MIN_PROJECT_DEPTH
    safe_z = np.where(valid, z, 1.0)
    uv = np.empty((pts.shape[0], 2), dtype=np.float64)
    uv[:, 0] = intrinsics.fx * cam[:, 0] / safe_z + intrinsics.cx
    uv[:, 1] = intrinsics.fy * cam[:, 1] / safe_z + intrinsics.cy
    return uv, z, valid


def unproject_grid(
    us: np.ndarray, vs: np.ndarray, depths: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose
) -> np.ndarray:
    """Vectorized unprojection of pixel arrays to (N, 3) world points."""
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    cam = np.stack(
        [
            (us - intrinsics.cx) / intrinsics.fx * depths,
            (vs - intrinsics.cy) / intrinsics.fy * depths,
            depths,
        ],
        axis=-1,
    )
    return (cam - pose.translation) @ pose.rotation()


# ---------------------------------------------------------------------------
# Pose interpolation and trajectories


def interpolate_pose(start: CameraPose, end: CameraPose, s: float) -> CameraPose:
    """Blend two poses: linear translation, shortest-arc slerp rotation.

    s = 0 and s = 1 reproduce the endpoints exactly.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation parameter {s!r} outside [0, 1]")
    quat = quat_slerp(start.quaternion, end.quaternion, s)
    trans = (1.0 - s) * start.translation + s * end.translation
    return CameraPose(quat, trans)


@dataclass(frozen=True)
class Trajectory:
    """A camera path: one (pose, intrinsics) pair per output frame."""

    frames: list[tuple[CameraPose, CameraIntrinsics]]

    def __post_init__(self) -> None:
        if len(self.frames) < 1:
            raise ValueError("trajectory needs at least one frame")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def loop_length(self) -> int:
        """Number of animation steps spanned by the path (frames - 1)."""
        return max(len(self.frames) - 1, 1)


def build_trajectory(
    start: CameraPose, end: CameraPose, frame_count: int, intrinsics: CameraIntrinsics
) -> Trajectory:
    """Interpolate ``frame_count`` poses from start to end at fixed intrinsics."""
    if frame_count < 2:
        raise ValueError(f"trajectory needs at least 2 frames, got {frame_count}")
    frames = []
    for i in range(frame_count):
        s = i / (frame_count - 1)
        frames.append((interpolate_pose(start, end, s), intrinsics))
    return Trajectory(frames)


def render_intrinsics(
    outpainted: CameraIntrinsics, margin: tuple[int, int, int, int], width: int, height: int
) -> CameraIntrinsics:
    """Intrinsics for rendering at the original frame size.

    The outpainted principal point shifts by the left/top margins; focal
    lengths carry over unchanged.
    """
    left, _, top, _ = margin
    return CameraIntrinsics(
        fx=outpainted.fx,
        fy=outpainted.fy,
        cx=outpainted.cx - left,
        cy=outpainted.cy - top,
        width=width,
        height=height,
    )


def look_at(position: np.ndarray, target: np.ndarray, up: np.ndarray | None = None) -> CameraPose:
    """World-to-camera pose at ``position`` with +z toward ``target``."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up_hint = np.array([0.0, 1.0, 0.0]) if up is None else np.asarray(up, dtype=np.float64)

    forward = target - position
    norm = float(np.linalg.norm(forward))
    if norm < 1e-12:
        raise ValueError("look-at target coincides with the camera position")
    forward = forward / norm
    right = np.cross(up_hint, forward)
    if float(np.linalg.norm(right)) < 1e-9:
        # Degenerate up direction; fall back to the world x axis.
        right = np.cross(np.array([1.0, 0.0, 0.0]), forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return CameraPose(matrix_to_quat(rotation), -rotation @ position)


@dataclass(frozen=True)
class AutocruiseConfig:
    """Settings for the automatic dolly move toward the scene's far region."""

    advance_fraction: float = 0.5
    far_percentile: float = 0.95

    def __post_init__(self) -> None:
        if not 0.0 <= self.advance_fraction < 1.0:
            raise ValueError(f"advance_fraction {self.advance_fraction!r} outside [0, 1)")
        if not 0.0 < self.far_percentile < 1.0:
            raise ValueError(f"far_percentile {self.far_percentile!r} outside (0, 1)")


def autocruise_end_pose(
    positions: np.ndarray,
    intrinsics: CameraIntrinsics,
    start: CameraPose,
    config: AutocruiseConfig | None = None,
) -> CameraPose:
    """Pick an end pose that advances toward the far part of the scene.

    The target is the centroid of points whose depth (seen from ``start``)
    reaches the far percentile, restricted to the central third of the
    image horizontally. The camera advances ``advance_fraction`` of the
    median scene depth toward it and re-orients to look at it with up
    along world +y. An empty far set falls back to a straight-ahead
    advance that keeps the starting orientation.
    """
    config = config or AutocruiseConfig()
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] == 0:
        raise ValueError(f"need an (N, 3) point array, got shape {positions.shape}")

    uv, z, valid = project_points(positions, intrinsics, start)
    if not np.any(valid):
        raise ValueError("no scene points in front of the starting camera")
    z_valid = z[valid]
    median_depth = float(np.median(z_valid))
    advance = config.advance_fraction * median_depth

    far_cut = float(np.quantile(z_valid, config.far_percentile))
    central = (uv[:, 0] >= intrinsics.width / 3.0) & (uv[:, 0] <= 2.0 * intrinsics.width / 3.0)
    far_set = valid & central & (z >= far_cut)

    position = start.center()
    rotation = start.rotation()
    if not np.any(far_set):
        forward = rotation.T @ np.array([0.0, 0.0, 1.0])
        new_position = position + advance * forward
        return CameraPose(start.quaternion, -rotation @ new_position)

    target = positions[far_set].mean(axis=0)
    direction = target - position
    dist = float(np.linalg.norm(direction))
    if dist < 1e-9:
        return start
    new_position = position + advance * direction / dist
    return look_at(new_position, target)


# ---------------------------------------------------------------------------
# Trajectory files


def save_trajectory(trajectory: Trajectory, path: str | Path) -> None:
    """Write a trajectory as text: one pose per line.

    Line format: ``qw qx qy qz tx ty tz fx fy cx cy width height``.
    """
    lines = ["# ldi4d trajectory: qw qx qy qz tx ty tz fx fy cx cy width height"]
    for pose, intr in trajectory.frames:
        parts = [repr(float(v)) for v in (*pose.quaternion, *pose.translation)]
        parts += [repr(float(v)) for v in (intr.fx, intr.fy, intr.cx, intr.cy)]
        parts += [str(intr.width), str(intr.height)]
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_trajectory(path: str | Path, default_intrinsics: CameraIntrinsics | None = None) -> Trajectory:
    """Read a trajectory file written by :func:`save_trajectory`.

    Lines with only seven fields (pose alone) take ``default_intrinsics``;
    a file that needs them when none are supplied is an error.
    """
    path = Path(path)
    frames: list[tuple[CameraPose, CameraIntrinsics]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) not in (7, 13):
            raise ValueError(f"{path}:{lineno}: expected 7 or 13 fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields[:11]]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed number ({exc})") from None
        pose = CameraPose.from_quat(np.array(values[:4]), np.array(values[4:7]))
        if len(fields) == 13:
            intr = CameraIntrinsics(
                fx=values[7], fy=values[8], cx=values[9], cy=values[10],
                width=int(fields[11]), height=int(fields[12]),
            )
        elif default_intrinsics is not None:
            intr = default_intrinsics
        else:
            raise ValueError(f"{path}:{lineno}: pose line lacks intrinsics and no default given")
        frames.append((pose, intr))
    if not frames:
        raise ValueError(f"{path}: no poses found")
    return Trajectory(frames)
