"""Per-frame and per-window kinematic quantities behind every constraint
check: linear velocity and acceleration from finite differences, rotation
statistics around a mean orientation, durations, and scalar series
reductions.

Derivatives use the true (possibly non-uniform) timestamps: second-order
central stencils on interior frames, one-sided stencils at range
boundaries, no smoothing, so genuine velocity spikes in teleoperation logs
are never masked. Statistics are population statistics (1/n) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InsufficientFramesError
from .trajectory import Episode, orientation_matrix

FrameRange = tuple[int, int]  # inclusive on both ends


@dataclass(frozen=True)
class SeriesStats:
    max: float
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class AngularStats:
    mean_deviation: float
    per_axis_std: tuple[float, float, float]
    variance: float


def _resolve_range(ep: Episode, rng: FrameRange | None, minimum: int) -> tuple[int, int]:
    n = len(ep.frames)
    a, b = (0, n - 1) if rng is None else rng
    if not (0 <= a <= b < n):
        raise InsufficientFramesError(f"frame range [{a}, {b}] invalid for {n} frames")
    if b - a + 1 < minimum:
        raise InsufficientFramesError(f"range [{a}, {b}] has {b - a + 1} frames, need >= {minimum}")
    return a, b


def timestamps(ep: Episode, rng: FrameRange | None = None) -> np.ndarray:
    a, b = _resolve_range(ep, rng, 1)
    return np.array([f.timestamp for f in ep.frames[a : b + 1]], dtype=float)


def arm_positions(ep: Episode, arm: str, rng: FrameRange | None = None) -> np.ndarray:
    a, b = _resolve_range(ep, rng, 1)
    return np.array([getattr(f, arm).position for f in ep.frames[a : b + 1]], dtype=float)


def arm_grippers(ep: Episode, arm: str, rng: FrameRange | None = None) -> np.ndarray:
    a, b = _resolve_range(ep, rng, 1)
    return np.array([getattr(f, arm).gripper for f in ep.frames[a : b + 1]], dtype=float)


def arm_rotations(ep: Episode, arm: str, rng: FrameRange | None = None) -> np.ndarray:
    a, b = _resolve_range(ep, rng, 1)
    return np.stack([orientation_matrix(getattr(f, arm).orientation) for f in ep.frames[a : b + 1]])


def linear_velocity(
    ep: Episode, arm: str, rng: FrameRange | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Velocity of one arm over a frame range.

    Returns (speeds, vectors): per-frame speed in m/s and the 3-vector
    derivative. Interior frames use the quadratic-fit central difference
    for non-uniform spacing; the range's end frames use the one-sided
    two-point difference. Requires at least two frames.
    """
    a, b = _resolve_range(ep, rng, 2)
    pos = arm_positions(ep, arm, (a, b))
    t = timestamps(ep, (a, b))
    vec = np.gradient(pos, t, axis=0, edge_order=1)
    return np.linalg.norm(vec, axis=1), vec


def linear_acceleration(ep: Episode, arm: str, rng: FrameRange | None = None) -> np.ndarray:
    """Acceleration magnitude of one arm over a frame range.

    Interior frames use the exact-for-quadratics three-point second
    difference with true time steps:

        f'' ~ 2 * (h2*f[i-1] - (h1+h2)*f[i] + h1*f[i+1]) / (h1*h2*(h1+h2))

    The two end frames reuse the stencil of their adjacent interior frame
    (the one-sided quadratic fit through the first/last three samples).
    Requires at least three frames.
    """
    a, b = _resolve_range(ep, rng, 3)
    pos = arm_positions(ep, arm, (a, b))
    t = timestamps(ep, (a, b))
    h1 = (t[1:-1] - t[:-2])[:, None]
    h2 = (t[2:] - t[1:-1])[:, None]
    interior = 2.0 * (h2 * pos[:-2] - (h1 + h2) * pos[1:-1] + h1 * pos[2:]) / (h1 * h2 * (h1 + h2))
    acc = np.vstack([interior[0], interior, interior[-1]])
    return np.linalg.norm(acc, axis=1)


def geodesic_angle(r_a: np.ndarray, r_b: np.ndarray) -> float:
    """Geodesic distance on SO(3) between two rotation matrices, radians."""
    cos = (np.trace(r_a.T @ r_b) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def mean_rotation(rotations: np.ndarray) -> np.ndarray:
    """Chordal mean: average the matrices, project back to SO(3) via
    orthogonal Procrustes (SVD with determinant correction)."""
    m = np.mean(rotations, axis=0)
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def angular_stats(
    ep: Episode, arm: str, rng: FrameRange | None = None, reference: str = "mean"
) -> AngularStats:
    """Rotation statistics of one arm over a frame range.

    The reference pose is the range's chordal-mean rotation by default
    (``reference="first"`` uses the first frame instead). Outputs:

    - mean_deviation: mean geodesic angle from the reference, radians;
    - per_axis_std: population std of the rotation-vector components of
      log(R_ref^T R_i), expressed in the reference frame, radians;
    - variance: population variance of the geodesic-angle series, rad^2.
    """
    a, b = _resolve_range(ep, rng, 2)
    rotations = arm_rotations(ep, arm, (a, b))
    if reference == "first":
        ref = rotations[0]
    else:
        ref = mean_rotation(rotations)
    relative = np.einsum("ji,njk->nik", ref, rotations)
    angles = np.array([geodesic_angle(ref, r) for r in rotations])
    rotvecs = Rotation.from_matrix(relative).as_rotvec()
    std = np.std(rotvecs, axis=0)
    return AngularStats(
        mean_deviation=float(np.mean(angles)),
        per_axis_std=(float(std[0]), float(std[1]), float(std[2])),
        variance=float(np.var(angles)),
    )


def duration(ep: Episode, rng: FrameRange | None = None) -> float:
    """Elapsed time over the range; zero for a single-frame range."""
    a, b = _resolve_range(ep, rng, 1)
    return ep.frames[b].timestamp - ep.frames[a].timestamp


def series_stats(values: Sequence[float] | np.ndarray) -> SeriesStats:
    """Exact max / mean / population std of a non-empty scalar series."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InsufficientFramesError("series is empty")
    return SeriesStats(
        max=float(arr.max()),
        mean=float(arr.mean()),
        std=float(arr.std()),
        n=int(arr.size),
    )
