"""Coordinate frames, gaze vectors and spherical conversions.

World (camera-rig) frame convention: the camera sits at the origin, the
third coordinate is "up", and the ground is the horizontal plane spanned
by the first two axes.  The eye frame is roll-free: its x-axis lies in
the horizontal plane, its z-axis points from the camera origin toward
the eye, so a subject looking straight at the camera has gaze (0,0,-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import CoincidentTargetAndEye, DegenerateEyePosition

WORLD_UP = np.array([0.0, 0.0, 1.0])

# Minimum horizontal distance (m) of the eye from the vertical camera axis.
MIN_HORIZONTAL_DIST = 1e-6
# Minimum eye-to-target separation (m).
MIN_GAZE_RANGE = 1e-6


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / n


@dataclass(frozen=True)
class EyeFrame:
    """Roll-free orthonormal frame anchored at the eye midpoint.

    Rows (ex, ey, ez) form a right-handed basis; ex is horizontal.
    """

    origin: np.ndarray
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """Rows are the basis vectors; multiplying a world vector gives eye coords."""
        return np.stack([self.ex, self.ey, self.ez])


@dataclass(frozen=True)
class SphericalGaze:
    """Gaze as (yaw, pitch) in radians, with an optional quantile offset sigma.

    yaw in (-pi, pi], pitch in [-pi/2, pi/2], sigma >= 0 when present.
    Poles (|pitch| = pi/2) are strictly vertical gaze.
    """

    yaw: float
    pitch: float
    sigma: Optional[float] = None

    def __post_init__(self):
        if not (-np.pi < self.yaw <= np.pi + 1e-12):
            raise ValueError(f"yaw {self.yaw} outside (-pi, pi]")
        if not (-np.pi / 2 - 1e-12 <= self.pitch <= np.pi / 2 + 1e-12):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def build_eye_frame(p_e: np.ndarray) -> EyeFrame:
    """Construct the roll-free eye frame for an eye midpoint p_e.

    ez points from the camera origin toward the eye; ex = up x ez
    normalized (horizontal by construction); ey completes the
    right-handed basis.  Raises DegenerateEyePosition when the eye is
    (nearly) directly above or below the camera, where "no roll" is
    ill-defined.
    """
    p_e = np.asarray(p_e, dtype=float)
    horiz = math.hypot(p_e[0], p_e[1])
    if horiz <= MIN_HORIZONTAL_DIST:
        raise DegenerateEyePosition(
            f"eye at {p_e} is on the vertical axis through the camera"
        )
    ez = normalize(p_e)
    # up x ez lies in the ground plane: (-ez_y, ez_x, 0); spelling the two
    # cross products out keeps this hot path cheap for per-frame callers
    ex = np.array([-ez[1], ez[0], 0.0]) / math.hypot(ez[0], ez[1])
    ey = np.array(
        [
            ez[1] * ex[2] - ez[2] * ex[1],
            ez[2] * ex[0] - ez[0] * ex[2],
            ez[0] * ex[1] - ez[1] * ex[0],
        ]
    )
    return EyeFrame(origin=p_e, ex=ex, ey=ey, ez=ez)


def gaze_in_eye_coords(p_t: np.ndarray, p_e: np.ndarray) -> np.ndarray:
    """Unit gaze direction from eye p_e to target p_t, in the eye frame.

    Looking directly at the camera origin yields exactly (0, 0, -1),
    independent of where the subject stands.
    """
    p_t = np.asarray(p_t, dtype=float)
    p_e = np.asarray(p_e, dtype=float)
    g_world = p_t - p_e
    r = np.linalg.norm(g_world)
    if r <= MIN_GAZE_RANGE:
        raise CoincidentTargetAndEye(f"target {p_t} coincides with eye {p_e}")
    frame = build_eye_frame(p_e)
    u = g_world / r
    return np.array([frame.ex @ u, frame.ey @ u, frame.ez @ u])


def to_spherical(g: np.ndarray) -> SphericalGaze:
    """Spherical angles of a unit gaze vector.

    pitch = arcsin(g_y); yaw = atan2(g_x, -g_z), which matches
    -arctan(g_x / g_z) on the frontal hemisphere (g_z < 0) and extends
    continuously over the full 360 degree yaw circle.  At the poles yaw
    is undefined and 0 is returned.
    """
    g = np.asarray(g, dtype=float)
    pitch = math.asin(min(1.0, max(-1.0, g[1])))
    yaw = math.atan2(g[0], -g[2])
    return SphericalGaze(yaw=yaw, pitch=pitch)


def from_spherical(s: SphericalGaze) -> np.ndarray:
    """Unit gaze vector for spherical angles (inverse of to_spherical)."""
    cp = math.cos(s.pitch)
    return np.array([cp * math.sin(s.yaw), math.sin(s.pitch), -cp * math.cos(s.yaw)])


def angular_error(g1: np.ndarray, g2: np.ndarray) -> float:
    """Angle between two unit vectors, in degrees (symmetric, in [0, 180])."""
    d = float(np.clip(np.dot(g1, g2), -1.0, 1.0))
    return float(np.degrees(np.arccos(d)))


def angular_error_spherical(a: SphericalGaze, b: SphericalGaze) -> float:
    """Angle in degrees between the directions of two spherical gazes."""
    return angular_error(from_spherical(a), from_spherical(b))


def mirror_gaze(s: SphericalGaze) -> SphericalGaze:
    """Left-right mirror: negate yaw, keep pitch and sigma. An involution."""
    yaw = -s.yaw
    if yaw <= -np.pi:  # keep yaw in (-pi, pi] when s.yaw == pi
        yaw += 2 * np.pi
    return replace(s, yaw=yaw)
