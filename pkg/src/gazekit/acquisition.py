"""Recover eye and target positions from detections and label gaze.

Detections arrive as calibrated per-pixel rays in the world frame; the
only missing quantity is range.  Range is fixed by the measured camera
height above a flat ground plane: the feet ray is intersected with the
ground, the eye must sit on the vertical line through that ground point.
When the feet are out of frame, a hip ray plus average standing body
proportions substitute for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry
from .errors import NoBodyRay, RayAboveHorizon
from .geometry import SphericalGaze

# Average standing proportions: eye / hip height as a fraction of stature.
DEFAULT_EYE_HEIGHT_RATIO = 0.936
DEFAULT_HIP_HEIGHT_RATIO = 0.530


@dataclass(frozen=True)
class PixelRay:
    """A unit viewing ray in the world frame, as provided by the rig."""

    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if not np.isclose(n, 1.0, atol=1e-6):
            raise ValueError(f"ray direction must be unit norm, got {n}")
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class SubjectDetection:
    eye_ray: PixelRay
    feet_ray: Optional[PixelRay] = None
    hip_ray: Optional[PixelRay] = None
    subject_id: str = ""

    def __post_init__(self):
        if self.feet_ray is None and self.hip_ray is None:
            raise NoBodyRay("detection needs a feet ray or a hip ray")


@dataclass(frozen=True)
class MarkerObservation:
    """6-DoF pose of the target board (board frame -> world)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("rotation must be orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must be proper (det +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=float)
        )


@dataclass(frozen=True)
class BoardGeometry:
    """Offset of the fixation cross from the tag origin, in the board frame."""

    cross_offset: np.ndarray = field(
        default_factory=lambda: np.array([0.3, 0.0, 0.0])
    )


@dataclass(frozen=True)
class RigConfig:
    camera_height: float = 1.6
    eye_height_ratio: float = DEFAULT_EYE_HEIGHT_RATIO
    hip_height_ratio: float = DEFAULT_HIP_HEIGHT_RATIO

    def __post_init__(self):
        if self.camera_height <= 0:
            raise ValueError("camera_height must be positive")
        if not (0 < self.hip_height_ratio < self.eye_height_ratio < 1):
            raise ValueError("need 0 < hip ratio < eye ratio < 1")


def _horizontal_norm(d: np.ndarray) -> float:
    return float(np.hypot(d[0], d[1]))


def _eye_on_vertical_line(eye_dir: np.ndarray, gx: float, gy: float) -> np.ndarray:
    # Closest point on the eye ray to the vertical line through (gx, gy);
    # for consistent azimuths this is the exact intersection.
    h2 = eye_dir[0] ** 2 + eye_dir[1] ** 2
    t = (eye_dir[0] * gx + eye_dir[1] * gy) / h2
    if t <= 0:
        raise RayAboveHorizon("eye ray points away from the subject column")
    return t * eye_dir


def recover_eye_position(det: SubjectDetection, rig: RigConfig) -> np.ndarray:
    """3D eye midpoint from the eye ray plus a feet (or hip) ray.

    Feet route: intersect the feet ray with the ground plane at height
    -camera_height, then place the eye on the vertical line through that
    ground point.  Hip route: solve stature jointly from the eye and hip
    rays using the configured body proportions, which again pins the
    subject's horizontal range.
    """
    e = det.eye_ray.direction
    if det.feet_ray is not None:
        f = det.feet_ray.direction
        if f[2] >= 0:
            raise RayAboveHorizon("feet ray has non-negative elevation")
        scale = rig.camera_height / (-f[2])
        ground = scale * f
        return _eye_on_vertical_line(e, ground[0], ground[1])

    hip = det.hip_ray.direction
    # tan of elevation for each ray (vertical over horizontal component)
    eh, hh = _horizontal_norm(e), _horizontal_norm(hip)
    if eh < 1e-9 or hh < 1e-9:
        raise RayAboveHorizon("vertical body ray cannot fix the range")
    tan_e, tan_h = e[2] / eh, hip[2] / hh
    h = rig.camera_height
    re, rh = rig.eye_height_ratio, rig.hip_height_ratio
    # Eye height above ground: rho*tan_e + h = H*re; hip: rho*tan_h + h = H*rh
    denom = rh * tan_e - re * tan_h
    if denom <= 0:
        raise RayAboveHorizon("hip/eye rays inconsistent with a standing subject")
    rho = h * (re - rh) / denom
    if rho <= 0:
        raise RayAboveHorizon("hip ray never meets a plausible hip plane")
    az = np.array([hip[0], hip[1]]) / hh
    return _eye_on_vertical_line(e, rho * az[0], rho * az[1])


def cross_position(m: MarkerObservation, b: BoardGeometry) -> np.ndarray:
    """World position of the fixation cross given the board pose."""
    return m.rotation @ np.asarray(b.cross_offset, dtype=float) + m.translation


@dataclass(frozen=True)
class GazeLabel:
    eye_position: np.ndarray
    gaze: np.ndarray  # unit vector in the eye frame
    spherical: SphericalGaze


def label_gaze(
    det: SubjectDetection,
    m: MarkerObservation,
    b: BoardGeometry,
    rig: RigConfig,
) -> GazeLabel:
    """Ground-truth gaze label for one frame: eye position, gaze vector, angles."""
    p_e = recover_eye_position(det, rig)
    p_t = cross_position(m, b)
    g = geometry.gaze_in_eye_coords(p_t, p_e)
    return GazeLabel(eye_position=p_e, gaze=g, spherical=geometry.to_spherical(g))
