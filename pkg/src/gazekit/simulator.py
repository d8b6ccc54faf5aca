"""Synthetic capture sessions: board trajectory, fixating subjects,
noisy detections and a low-dimensional observation model standing in
for head-crop images.

Reproducibility: all randomness comes from numpy's PCG64 generators.
A session seeds one `SeedSequence`; per-subject child streams are
spawned from it, so the frame stream for a given config (including
seed) is identical across runs and platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import acquisition, geometry
from .acquisition import (
    BoardGeometry,
    MarkerObservation,
    PixelRay,
    RigConfig,
    SubjectDetection,
)
from .errors import ConfigError, TooFewSubjects
from .geometry import SphericalGaze

FEATURE_DIM = 8
# Feature layout produced by observe():
#   0 head yaw, 1 head pitch, 2 eye-cue yaw, 3 eye-cue pitch,
#   4 eye visibility flag, 5 sin(head yaw), 6 cos(head yaw), 7 blur proxy
# Channels that flip sign under a horizontal mirror of the scene:
MIRROR_NEGATE_CHANNELS = (0, 2, 5)

EYE_IN_HEAD_YAW_LIMIT = np.radians(50.0)

# Board motion constants (the capture protocol fixes the shape, not the pace)
BOARD_SPEED = 0.5  # m/s along the path
OSCILLATION_AMPLITUDE = 0.8  # m, vertical sinusoid
OSCILLATION_PERIOD = 6.0  # s
INNER_PASS_DISTANCE = 0.7  # m, closest approach of the inner chord
INNER_PASS_HALF_LENGTH = 1.2  # m
HEAD_LAG_TAU = 0.5  # s, first-order head tracking time constant


@dataclass(frozen=True)
class NoiseConfig:
    marker_rot_deg: float = 0.0
    marker_trans_m: float = 0.0
    keypoint_deg: float = 0.0
    obs_base_deg: float = 0.0
    obs_yaw_gain: float = 0.0  # extra obs noise (deg) per radian of |head yaw|
    occlusion_yaw_deg: float = 140.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v < 0:
                raise ConfigError(f"noise field {name} must be >= 0")


# Defaults calibrated so the control experiment lands at a few degrees of
# label error; see control_experiment().
DEFAULT_LABEL_NOISE = NoiseConfig(
    marker_rot_deg=4.0, marker_trans_m=0.08, keypoint_deg=3.0
)


@dataclass(frozen=True)
class SessionConfig:
    n_subjects: int = 4
    subject_distance_range: Tuple[float, float] = (1.0, 3.0)
    loop_radius_range: Tuple[float, float] = (2.0, 5.0)
    camera_height: float = 1.6
    fps: float = 8.0
    move_freeze_period: float = 4.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ConfigError("need at least one subject")
        for name in ("subject_distance_range", "loop_radius_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} must be positive and ordered")
        if self.fps <= 0 or self.camera_height <= 0 or self.move_freeze_period <= 0:
            raise ConfigError("fps, camera_height and move_freeze_period must be > 0")

    @staticmethod
    def from_json(path) -> "SessionConfig":
        with open(path) as f:
            raw = json.load(f)
        if "noise" in raw:
            raw["noise"] = NoiseConfig(**raw["noise"])
        for name in ("subject_distance_range", "loop_radius_range"):
            if name in raw:
                raw[name] = tuple(raw[name])
        return SessionConfig(**raw)


@dataclass
class SubjectState:
    position: np.ndarray
    head_yaw: float = 0.0
    head_pitch: float = 0.0
    eye_in_head_yaw: float = 0.0
    eye_in_head_pitch: float = 0.0
    frozen: bool = False


@dataclass(frozen=True)
class FrameRecord:
    session_id: str
    subject_id: str
    frame_index: int
    timestamp: float
    detection: SubjectDetection
    marker: MarkerObservation
    features: np.ndarray
    gt_gaze: SphericalGaze
    gt_head: Tuple[float, float]

    @property
    def visible(self) -> bool:
        return self.features[4] > 0.5


@dataclass
class DatasetSplit:
    """Subject-disjoint train/val/test windows of consecutive frames."""

    train: List[Tuple[FrameRecord, ...]]
    val: List[Tuple[FrameRecord, ...]]
    test: List[Tuple[FrameRecord, ...]]


def _wrap_angle(a: float) -> float:
    return float(np.arctan2(np.sin(a), np.cos(a)))


@dataclass(frozen=True)
class BoardTrajectory:
    times: np.ndarray
    positions: np.ndarray  # (T, 3) tag origin in the world frame
    rotations: np.ndarray  # (T, 3, 3) board frame -> world
    cross_positions: np.ndarray  # (T, 3)


def _facing_rotation(board_pos: np.ndarray) -> np.ndarray:
    """Board rotation whose z-axis points from the board toward the camera."""
    bz = geometry.normalize(-board_pos)
    bx = np.cross(geometry.WORLD_UP, bz)
    n = np.linalg.norm(bx)
    if n < 1e-9:  # board directly above camera; pick an arbitrary horizontal x
        bx = np.array([1.0, 0.0, 0.0])
    else:
        bx = bx / n
    by = np.cross(bz, bx)
    return np.stack([bx, by, bz], axis=1)


def generate_trajectory(
    cfg: SessionConfig, rng: Optional[np.random.Generator] = None
) -> BoardTrajectory:
    """Board path: one full loop around the scene, then an inner pass
    between camera and subjects, with a vertical sinusoid superimposed.
    The board always faces the camera."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    radius = rng.uniform(*cfg.loop_radius_range)
    start_angle = rng.uniform(0.0, 2 * np.pi)

    loop_duration = 2 * np.pi * radius / BOARD_SPEED
    inner_duration = 2 * INNER_PASS_HALF_LENGTH / BOARD_SPEED
    total = loop_duration + inner_duration
    times = np.arange(0.0, total, 1.0 / cfg.fps)

    positions = np.empty((len(times), 3))
    for i, t in enumerate(times):
        if t < loop_duration:
            ang = start_angle + 2 * np.pi * t / loop_duration
            x, y = radius * np.cos(ang), radius * np.sin(ang)
        else:
            s = (t - loop_duration) / inner_duration  # 0..1 along the chord
            x = -INNER_PASS_HALF_LENGTH + 2 * INNER_PASS_HALF_LENGTH * s
            y = INNER_PASS_DISTANCE
        z = OSCILLATION_AMPLITUDE * np.sin(2 * np.pi * t / OSCILLATION_PERIOD)
        positions[i] = (x, y, z)

    rotations = np.stack([_facing_rotation(p) for p in positions])
    board = BoardGeometry()
    cross = np.stack(
        [r @ board.cross_offset + p for r, p in zip(rotations, positions)]
    )
    return BoardTrajectory(times, positions, rotations, cross)


def _perturb_ray(d: np.ndarray, sigma_deg: float, rng) -> np.ndarray:
    """Rotate a unit vector by a random angle ~N(0, sigma) about a random
    perpendicular axis."""
    if sigma_deg == 0.0:
        return d
    axis = np.cross(d, rng.normal(size=3))
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return d
    axis /= n
    ang = np.radians(rng.normal(0.0, sigma_deg))
    return d * np.cos(ang) + np.cross(axis, d) * np.sin(ang)


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = geometry.normalize(axis)
    k = np.array(
        [
            [0, -axis[2], axis[1]],
            [axis[2], 0, -axis[0]],
            [-axis[1], axis[0], 0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def observe(
    state: SubjectState,
    gt: SphericalGaze,
    noise: NoiseConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Appearance-proxy feature vector for one frame.

    Eye-cue channels carry the true gaze angles with heteroscedastic
    noise that grows with |head yaw|; beyond the occlusion yaw limit the
    eye cues are zeroed and the visibility flag drops to 0.
    """
    base = np.radians(noise.obs_base_deg)
    eye_sigma = base + np.radians(noise.obs_yaw_gain) * abs(state.head_yaw)

    head_yaw = state.head_yaw + rng.normal(0.0, base) if base > 0 else state.head_yaw
    head_pitch = (
        state.head_pitch + rng.normal(0.0, base) if base > 0 else state.head_pitch
    )
    visible = abs(gt.yaw) <= np.radians(noise.occlusion_yaw_deg)
    if visible:
        eye_yaw = gt.yaw + (rng.normal(0.0, eye_sigma) if eye_sigma > 0 else 0.0)
        eye_pitch = gt.pitch + (rng.normal(0.0, eye_sigma) if eye_sigma > 0 else 0.0)
    else:
        eye_yaw = 0.0
        eye_pitch = 0.0
    blur = rng.uniform(0.0, 1.0)
    return np.array(
        [
            head_yaw,
            head_pitch,
            eye_yaw,
            eye_pitch,
            1.0 if visible else 0.0,
            np.sin(head_yaw),
            np.cos(head_yaw),
            blur,
        ]
    )


def mirror_features(x: np.ndarray) -> np.ndarray:
    """Feature-space analog of horizontally flipping the scene."""
    out = np.array(x, dtype=float, copy=True)
    out[..., list(MIRROR_NEGATE_CHANNELS)] *= -1.0
    return out


def _simulate_subject(
    cfg: SessionConfig,
    session_id: str,
    subject_id: str,
    traj: BoardTrajectory,
    rng: np.random.Generator,
) -> List[FrameRecord]:
    rig = RigConfig(camera_height=cfg.camera_height)
    dist = rng.uniform(*cfg.subject_distance_range)
    azimuth = rng.uniform(0.0, 2 * np.pi)
    stature = float(np.clip(rng.normal(1.70, 0.07), 1.45, 1.95))
    eye_z = stature * rig.eye_height_ratio - cfg.camera_height
    hip_z = stature * rig.hip_height_ratio - cfg.camera_height
    px, py = dist * np.cos(azimuth), dist * np.sin(azimuth)
    p_e = np.array([px, py, eye_z])
    p_hip = np.array([px, py, hip_z])
    p_feet = np.array([px, py, -cfg.camera_height])

    g0 = geometry.to_spherical(geometry.gaze_in_eye_coords(traj.cross_positions[0], p_e))
    state = SubjectState(position=p_e, head_yaw=g0.yaw, head_pitch=g0.pitch)

    frames: List[FrameRecord] = []
    dt = 1.0 / cfg.fps
    lag = 1.0 - np.exp(-dt / HEAD_LAG_TAU)
    noise = cfg.noise
    for i, t in enumerate(traj.times):
        p_t = traj.cross_positions[i]
        gt = geometry.to_spherical(geometry.gaze_in_eye_coords(p_t, p_e))

        state.frozen = int(t / cfg.move_freeze_period) % 2 == 1
        if not state.frozen:
            state.head_yaw = _wrap_angle(
                state.head_yaw + _wrap_angle(gt.yaw - state.head_yaw) * lag
            )
            state.head_pitch += (gt.pitch - state.head_pitch) * lag
        state.eye_in_head_yaw = float(
            np.clip(
                _wrap_angle(gt.yaw - state.head_yaw),
                -EYE_IN_HEAD_YAW_LIMIT,
                EYE_IN_HEAD_YAW_LIMIT,
            )
        )
        state.eye_in_head_pitch = gt.pitch - state.head_pitch

        eye_ray = PixelRay(_perturb_ray(geometry.normalize(p_e), noise.keypoint_deg, rng))
        feet_ray = PixelRay(
            _perturb_ray(geometry.normalize(p_feet), noise.keypoint_deg, rng)
        )
        hip_ray = PixelRay(
            _perturb_ray(geometry.normalize(p_hip), noise.keypoint_deg, rng)
        )
        detection = SubjectDetection(
            eye_ray=eye_ray, feet_ray=feet_ray, hip_ray=hip_ray, subject_id=subject_id
        )

        rot = traj.rotations[i]
        if noise.marker_rot_deg > 0:
            axis = rng.normal(size=3)
            ang = np.radians(rng.normal(0.0, noise.marker_rot_deg))
            rot = _axis_angle_matrix(axis, ang) @ rot
        trans = traj.positions[i]
        if noise.marker_trans_m > 0:
            trans = trans + rng.normal(0.0, noise.marker_trans_m, size=3)
        marker = MarkerObservation(rotation=rot, translation=trans)

        features = observe(state, gt, noise, rng)
        frames.append(
            FrameRecord(
                session_id=session_id,
                subject_id=subject_id,
                frame_index=i,
                timestamp=float(t),
                detection=detection,
                marker=marker,
                features=features,
                gt_gaze=gt,
                gt_head=(state.head_yaw, state.head_pitch),
            )
        )
    return frames


def simulate_session(cfg: SessionConfig) -> List[FrameRecord]:
    """All frames of one session; subjects fixate the cross every frame,
    so ground-truth gaze is exact by construction."""
    root = np.random.SeedSequence(cfg.seed)
    traj_rng = np.random.default_rng(root.spawn(1)[0])
    traj = generate_trajectory(cfg, traj_rng)
    session_id = f"session{cfg.seed}"
    frames: List[FrameRecord] = []
    subject_seeds = root.spawn(cfg.n_subjects + 1)[1:]
    for k in range(cfg.n_subjects):
        rng = np.random.default_rng(subject_seeds[k])
        frames.extend(
            _simulate_subject(cfg, session_id, f"{session_id}_subj{k}", traj, rng)
        )
    return frames


def control_experiment(cfg: SessionConfig, n_runs: int = 3) -> dict:
    """Label frames from their noisy detections and compare against the
    simulated ground truth.  Reports the mean and 95th-percentile angular
    error plus a per-noise-source breakdown (each source acting alone)."""
    board = BoardGeometry()

    def run(noise: NoiseConfig) -> np.ndarray:
        errs = []
        rig = RigConfig(camera_height=cfg.camera_height)
        for r in range(n_runs):
            c = SessionConfig(
                **{
                    **asdict_config(cfg),
                    "noise": noise,
                    "seed": cfg.seed + r,
                }
            )
            for fr in simulate_session(c):
                label = acquisition.label_gaze(fr.detection, fr.marker, board, rig)
                errs.append(
                    geometry.angular_error_spherical(label.spherical, fr.gt_gaze)
                )
        return np.array(errs)

    full = run(cfg.noise)
    breakdown = {}
    for source in ("marker_rot_deg", "marker_trans_m", "keypoint_deg"):
        iso = NoiseConfig(
            **{
                "marker_rot_deg": 0.0,
                "marker_trans_m": 0.0,
                "keypoint_deg": 0.0,
                source: getattr(cfg.noise, source),
                "occlusion_yaw_deg": cfg.noise.occlusion_yaw_deg,
            }
        )
        breakdown[source] = float(run(iso).mean())
    return {
        "mean_label_error_deg": float(full.mean()),
        "p95_label_error_deg": float(np.percentile(full, 95)),
        "n_frames": int(full.size),
        "per_noise_mean_deg": breakdown,
    }


def asdict_config(cfg: SessionConfig) -> dict:
    d = asdict(cfg)
    d["noise"] = cfg.noise
    return d


def _windows(frames: Sequence[FrameRecord], width: int = 7):
    out = []
    for start in range(len(frames) - width + 1):
        out.append(tuple(frames[start : start + width]))
    return out


def split_by_subject(
    frames: Iterable[FrameRecord],
    ratios: Tuple[float, float, float] = (0.75, 0.10, 0.15),
    window: int = 7,
) -> DatasetSplit:
    """Group frames into per-subject sliding windows and split subjects
    (deterministically, by sorted id) into train/val/test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    by_subject: dict = {}
    for fr in frames:
        by_subject.setdefault(fr.subject_id, []).append(fr)
    subjects = sorted(by_subject)
    if len(subjects) < 3:
        raise TooFewSubjects(f"need >= 3 subjects, got {len(subjects)}")
    n = len(subjects)
    n_train = max(1, round(ratios[0] * n))
    n_val = max(1, round(ratios[1] * n))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)
    groups = {
        "train": subjects[:n_train],
        "val": subjects[n_train : n_train + n_val],
        "test": subjects[n_train + n_val :],
    }
    out = {}
    for name, subj in groups.items():
        wins = []
        for s in subj:
            fs = sorted(by_subject[s], key=lambda f: f.frame_index)
            wins.extend(_windows(fs, window))
        out[name] = wins
    return DatasetSplit(train=out["train"], val=out["val"], test=out["test"])


def frame_to_json(fr: FrameRecord) -> dict:
    det = fr.detection
    d = {
        "eye_ray": det.eye_ray.direction.tolist(),
        "marker_rotation": fr.marker.rotation.reshape(-1).tolist(),
        "marker_translation": fr.marker.translation.tolist(),
    }
    if det.feet_ray is not None:
        d["feet_ray"] = det.feet_ray.direction.tolist()
    if det.hip_ray is not None:
        d["hip_ray"] = det.hip_ray.direction.tolist()
    return {
        "session_id": fr.session_id,
        "subject_id": fr.subject_id,
        "frame_index": fr.frame_index,
        "t": fr.timestamp,
        "features": fr.features.tolist(),
        "gt_yaw": fr.gt_gaze.yaw,
        "gt_pitch": fr.gt_gaze.pitch,
        "head_yaw": fr.gt_head[0],
        "head_pitch": fr.gt_head[1],
        "visible": 1 if fr.visible else 0,
        "detections": d,
    }


def frame_from_json(raw: dict) -> FrameRecord:
    d = raw["detections"]
    detection = SubjectDetection(
        eye_ray=PixelRay(np.array(d["eye_ray"])),
        feet_ray=PixelRay(np.array(d["feet_ray"])) if "feet_ray" in d else None,
        hip_ray=PixelRay(np.array(d["hip_ray"])) if "hip_ray" in d else None,
        subject_id=raw["subject_id"],
    )
    marker = MarkerObservation(
        rotation=np.array(d["marker_rotation"]).reshape(3, 3),
        translation=np.array(d["marker_translation"]),
    )
    return FrameRecord(
        session_id=raw["session_id"],
        subject_id=raw["subject_id"],
        frame_index=raw["frame_index"],
        timestamp=raw["t"],
        detection=detection,
        marker=marker,
        features=np.array(raw["features"]),
        gt_gaze=SphericalGaze(yaw=raw["gt_yaw"], pitch=raw["gt_pitch"]),
        gt_head=(raw["head_yaw"], raw["head_pitch"]),
    )


def export_dataset(
    sessions: Sequence[Sequence[FrameRecord]],
    ratios: Tuple[float, float, float],
    out_path,
    window: int = 7,
) -> DatasetSplit:
    """Write subject-disjoint train/val/test JSONL files and return the
    in-memory windowed split.  Deterministic for a given input."""
    import os

    frames = [fr for sess in sessions for fr in sess]
    split = split_by_subject(frames, ratios, window)
    os.makedirs(out_path, exist_ok=True)
    for name in ("train", "val", "test"):
        wins = getattr(split, name)
        seen = set()
        path = os.path.join(out_path, f"{name}.jsonl")
        with open(path, "w") as f:
            for win in wins:
                for fr in win:
                    key = (fr.subject_id, fr.frame_index)
                    if key in seen:
                        continue
                    seen.add(key)
                    f.write(json.dumps(frame_to_json(fr)) + "\n")
    return split


def load_dataset(path, window: int = 7) -> DatasetSplit:
    """Read train/val/test JSONL files written by export_dataset."""
    import os

    parts = {}
    for name in ("train", "val", "test"):
        frames = []
        with open(os.path.join(path, f"{name}.jsonl")) as f:
            for line in f:
                frames.append(frame_from_json(json.loads(line)))
        by_subject: dict = {}
        for fr in frames:
            by_subject.setdefault(fr.subject_id, []).append(fr)
        wins = []
        for s in sorted(by_subject):
            fs = sorted(by_subject[s], key=lambda fr: fr.frame_index)
            wins.extend(_windows(fs, window))
        parts[name] = wins
    return DatasetSplit(train=parts["train"], val=parts["val"], test=parts["test"])


def windows_to_arrays(windows) -> Tuple[np.ndarray, np.ndarray]:
    """(N, window, F) feature tensor and (N, 2) central-frame gaze targets."""
    X = np.stack([[fr.features for fr in win] for win in windows])
    centers = [win[len(win) // 2] for win in windows]
    Y = np.array([[fr.gt_gaze.yaw, fr.gt_gaze.pitch] for fr in centers])
    return X, Y
