"""Evaluation metrics, distribution maps and the shelf-attention application."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import geometry
from .errors import (
    DegeneratePlane,
    LengthMismatch,
    MissingSigma,
    NoConvergence,
    TooFewSamples,
)
from .geometry import SphericalGaze

FRONT_180_DEG = 90.0
FRONT_FACING_DEG = 20.0


@dataclass
class MetricsReport:
    mean_err_all: float
    mean_err_front180: float
    mean_err_frontfacing: float
    uncert_spearman: Optional[float] = None
    coverage80: Optional[float] = None
    yaw_bins: Optional[List[dict]] = None

    def to_dict(self) -> dict:
        return {
            "mean_err_all": self.mean_err_all,
            "mean_err_front180": self.mean_err_front180,
            "mean_err_frontfacing": self.mean_err_frontfacing,
            "uncert_spearman": self.uncert_spearman,
            "coverage80": self.coverage80,
            "yaw_bins": self.yaw_bins,
        }


def _errors_deg(preds: Sequence[SphericalGaze], gts: Sequence[SphericalGaze]) -> np.ndarray:
    return np.array(
        [geometry.angular_error_spherical(p, g) for p, g in zip(preds, gts)]
    )


def subset_errors(
    preds: Sequence[SphericalGaze], gts: Sequence[SphericalGaze]
) -> MetricsReport:
    """Mean angular error over all samples and over the subsets whose
    ground truth lies within 90 and 20 degrees of the camera direction."""
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gts)} labels")
    errs = _errors_deg(preds, gts)
    camera = np.array([0.0, 0.0, -1.0])
    gt_angle = np.array(
        [geometry.angular_error(geometry.from_spherical(g), camera) for g in gts]
    )

    def mean_within(limit: float) -> float:
        mask = gt_angle <= limit
        return float(errs[mask].mean()) if mask.any() else float("nan")

    return MetricsReport(
        mean_err_all=float(errs.mean()),
        mean_err_front180=mean_within(FRONT_180_DEG),
        mean_err_frontfacing=mean_within(FRONT_FACING_DEG),
    )


def spearman(sigmas: Sequence[float], errors: Sequence[float]) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    if len(sigmas) != len(errors):
        raise LengthMismatch(f"{len(sigmas)} sigmas vs {len(errors)} errors")
    if len(sigmas) < 3:
        raise TooFewSamples("need at least 3 samples")
    rho = stats.spearmanr(sigmas, errors).statistic
    return float(rho)


def coverage(
    preds: Sequence[SphericalGaze], gts: Sequence[SphericalGaze]
) -> Dict[str, float]:
    """Fraction of samples whose ground-truth angles fall inside the
    predicted quantile interval [angle - sigma, angle + sigma].

    Returns per-angle coverage (primary: mean of the yaw and pitch
    fractions) plus the joint fraction where both angles are inside.
    """
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gts)} labels")
    if any(p.sigma is None for p in preds):
        raise MissingSigma("coverage requires predictions with sigma")
    yaw_in = np.array(
        [abs(_wrap(p.yaw - g.yaw)) <= p.sigma for p, g in zip(preds, gts)]
    )
    pitch_in = np.array(
        [abs(p.pitch - g.pitch) <= p.sigma for p, g in zip(preds, gts)]
    )
    return {
        "yaw": float(yaw_in.mean()),
        "pitch": float(pitch_in.mean()),
        "per_angle": float((yaw_in.mean() + pitch_in.mean()) / 2.0),
        "joint": float((yaw_in & pitch_in).mean()),
    }


def _wrap(a: float) -> float:
    return float(np.arctan2(np.sin(a), np.cos(a)))


def yaw_curve(
    preds: Sequence[SphericalGaze],
    gts: Sequence[SphericalGaze],
    bin_width_deg: float = 15.0,
) -> List[dict]:
    """Per-|gaze yaw| bin mean error and mean predicted sigma.

    Rows: {bin_center_deg, mean_error_deg, mean_sigma_deg, n}; empty
    bins are omitted.
    """
    errs = _errors_deg(preds, gts)
    yaws = np.degrees(np.abs([g.yaw for g in gts]))
    sigmas = np.array(
        [np.degrees(p.sigma) if p.sigma is not None else np.nan for p in preds]
    )
    rows = []
    edges = np.arange(0.0, 180.0 + bin_width_deg, bin_width_deg)
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (yaws >= lo) & (yaws < hi)
        if not mask.any():
            continue
        rows.append(
            {
                "bin_center_deg": float((lo + hi) / 2),
                "mean_error_deg": float(errs[mask].mean()),
                "mean_sigma_deg": float(np.nanmean(sigmas[mask]))
                if not np.all(np.isnan(sigmas[mask]))
                else float("nan"),
                "n": int(mask.sum()),
            }
        )
    return rows


def write_yaw_curve_csv(rows: List[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(
            f, fieldnames=["bin_center_deg", "mean_error_deg", "mean_sigma_deg", "n"]
        )
        w.writeheader()
        for r in rows:
            w.writerow(r)


def mollweide_project(yaw: float, pitch: float) -> Tuple[float, float]:
    """Equal-area Mollweide projection of spherical gaze angles.

    Solves 2a + sin(2a) = pi * sin(pitch) by Newton iteration, then
    x = (2 sqrt(2) / pi) * yaw * cos(a), y = sqrt(2) * sin(a).
    """
    s = np.sin(pitch)
    if abs(abs(s) - 1.0) < 1e-12:
        alpha = np.copysign(np.pi / 2, s)
    else:
        target = np.pi * s

        def resid(a):
            return 2 * a + np.sin(2 * a) - target

        alpha = float(np.arcsin(s))
        for _ in range(50):
            f = resid(alpha)
            fp = 2 + 2 * np.cos(2 * alpha)
            if abs(fp) < 1e-15:
                break
            alpha -= f / fp
            if abs(f) < 1e-12:
                break
        if abs(resid(alpha)) > 1e-10:
            # Newton stalls near the poles where the derivative vanishes;
            # the residual is monotone in alpha, so bisect instead
            lo, hi = -np.pi / 2, np.pi / 2
            for _ in range(200):
                alpha = 0.5 * (lo + hi)
                if resid(alpha) < 0:
                    lo = alpha
                else:
                    hi = alpha
                if hi - lo < 1e-15:
                    break
        if abs(resid(alpha)) > 1e-10:
            raise NoConvergence("Mollweide quadrature angle did not converge")
    x = (2 * np.sqrt(2) / np.pi) * yaw * np.cos(alpha)
    y = np.sqrt(2) * np.sin(alpha)
    return float(x), float(y)


def export_distribution_map(
    samples: Sequence[SphericalGaze], out_path, bins: int = 60
) -> None:
    """2D histogram of gaze directions in Mollweide coordinates with
    logarithmic intensity, written as an SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import LogNorm

    if not samples:
        raise ValueError("no samples to plot")
    xy = np.array([mollweide_project(s.yaw, s.pitch) for s in samples])
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.hist2d(
        xy[:, 0],
        xy[:, 1],
        bins=bins,
        range=[[-2 * np.sqrt(2), 2 * np.sqrt(2)], [-np.sqrt(2), np.sqrt(2)]],
        norm=LogNorm(),
        cmap="viridis",
    )
    ax.set_xlabel("yaw (Mollweide x)")
    ax.set_ylabel("pitch (Mollweide y)")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


@dataclass(frozen=True)
class AttentionGrid:
    """A planar shelf split into rows x cols cells.

    The grid is centered at `point`; cell axes are the horizontal
    direction within the plane and its in-plane complement.
    """

    point: np.ndarray
    normal: np.ndarray
    rows: int = 4
    cols: int = 6
    cell_height: float = 0.25
    cell_width: float = 0.25

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise DegeneratePlane("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        u = np.cross(geometry.WORLD_UP, self.normal)
        if np.linalg.norm(u) < 1e-9:  # horizontal shelf plane
            u = np.array([1.0, 0.0, 0.0])
        else:
            u = u / np.linalg.norm(u)
        v = np.cross(self.normal, u)
        return u, v


@dataclass
class AttentionResult:
    counts: np.ndarray  # (rows, cols) hit histogram
    hits: List[Optional[Tuple[int, int]]] = field(default_factory=list)
    accuracy: Optional[float] = None


def attention_map(
    origins: Sequence[np.ndarray],
    directions: Sequence[np.ndarray],
    grid: AttentionGrid,
    labels: Optional[Sequence[Tuple[int, int]]] = None,
) -> AttentionResult:
    """Intersect world-frame gaze rays with the shelf plane and bin hits
    into grid cells.  Rays parallel to the plane or landing outside the
    grid count as misses; accuracy is the fraction of samples whose hit
    cell matches the label."""
    u, v = grid.axes()
    counts = np.zeros((grid.rows, grid.cols))
    hits: List[Optional[Tuple[int, int]]] = []
    half_w = grid.cols * grid.cell_width / 2.0
    half_h = grid.rows * grid.cell_height / 2.0
    for o, d in zip(origins, directions):
        o = np.asarray(o, dtype=float)
        d = np.asarray(d, dtype=float)
        denom = float(d @ grid.normal)
        if abs(denom) < 1e-12:
            hits.append(None)
            continue
        t = float((grid.point - o) @ grid.normal) / denom
        if t <= 0:
            hits.append(None)
            continue
        p = o + t * d
        rel = p - grid.point
        x, y = float(rel @ u), float(rel @ v)
        if not (-half_w <= x < half_w and -half_h <= y < half_h):
            hits.append(None)
            continue
        col = int((x + half_w) / grid.cell_width)
        row = int((y + half_h) / grid.cell_height)
        col = min(col, grid.cols - 1)
        row = min(row, grid.rows - 1)
        counts[row, col] += 1
        hits.append((row, col))
    result = AttentionResult(counts=counts, hits=hits)
    if labels is not None:
        if len(labels) != len(hits):
            raise LengthMismatch("labels and rays differ in length")
        matches = [h == tuple(l) for h, l in zip(hits, labels)]
        result.accuracy = float(np.mean(matches))
    return result
