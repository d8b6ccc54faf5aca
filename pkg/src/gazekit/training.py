"""From-scratch Adam, gradient computation and the training loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import geometry, simulator
from .errors import EmptyDataset, ShapeMismatch
from .geometry import SphericalGaze
from .losses import mse_loss_batch, pinball_loss_batch
from .models import ModelConfig, ModelParams, forward_batch, init_params, wrap_params
from .simulator import DatasetSplit, windows_to_arrays


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    loss_kind: str = "pinball"
    window: int = 7

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.window % 2 != 1:
            raise ValueError("window must be odd")
        if self.loss_kind not in ("pinball", "mse"):
            raise ValueError(f"unknown loss {self.loss_kind!r}")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: ModelParams,
    grads: Dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """One bias-corrected Adam update, in place."""
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, g in grads.items():
        p = params.arrays[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"grad for {name}: {g.shape} vs param {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m[...] = b1 * m + (1 - b1) * g
        v[...] = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**state.t)
        v_hat = v / (1 - b2**state.t)
        p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def batch_loss(
    t, X: np.ndarray, Y: np.ndarray, config: ModelConfig, loss_kind: str
):
    angles, sigma = forward_batch(t, X, config)
    if loss_kind == "pinball":
        return pinball_loss_batch(angles, sigma, Y)
    return mse_loss_batch(angles, Y)


def backward(
    params: ModelParams,
    batch: Tuple[np.ndarray, np.ndarray],
    loss_kind: str = "pinball",
) -> Dict[str, np.ndarray]:
    """Analytic gradients of the selected loss w.r.t. every parameter."""
    X, Y = batch
    t = wrap_params(params, requires_grad=True)
    loss = batch_loss(t, np.asarray(X, dtype=float), np.asarray(Y, dtype=float),
                      params.config, loss_kind)
    loss.backward()
    return {
        name: (ten.grad if ten.grad is not None else np.zeros_like(ten.data))
        for name, ten in t.items()
    }


def _model_inputs(X: np.ndarray, config: ModelConfig) -> np.ndarray:
    # temporal models consume the whole window, the static model only the
    # central frame
    if config.kind == "static" and X.ndim == 3:
        return X[:, X.shape[1] // 2, :]
    return X


def evaluate_error(params: ModelParams, X: np.ndarray, Y: np.ndarray) -> float:
    """Mean angular error (degrees) of batched predictions."""
    from .models import predict_batch

    ang, _ = predict_batch(params, _model_inputs(X, params.config))
    errs = [
        geometry.angular_error(
            geometry.from_spherical(_gaze(a)), geometry.from_spherical(_gaze(y))
        )
        for a, y in zip(ang, Y)
    ]
    return float(np.mean(errs))


def _gaze(ay: np.ndarray) -> SphericalGaze:
    yaw = float(np.arctan2(np.sin(ay[0]), np.cos(ay[0])))
    return SphericalGaze(yaw=yaw, pitch=float(np.clip(ay[1], -np.pi / 2, np.pi / 2)))


def train(
    dataset: DatasetSplit,
    cfg: TrainConfig,
    model_kind: str = "static",
    model_config: Optional[ModelConfig] = None,
) -> Tuple[ModelParams, List[dict]]:
    """Seeded mini-batch training; returns best-validation parameters and
    a per-epoch history of train loss and validation angular error."""
    if not dataset.train or not dataset.val:
        raise EmptyDataset("train and val splits must be non-empty")
    if model_config is None:
        model_config = ModelConfig(
            kind=model_kind, feature_dim=simulator.FEATURE_DIM, window=cfg.window
        )
    X_train, Y_train = windows_to_arrays(dataset.train)
    X_val, Y_val = windows_to_arrays(dataset.val)
    X_train = _model_inputs(X_train, model_config)
    X_val_in = _model_inputs(X_val, model_config)

    params = init_params(model_config, seed=cfg.seed)
    state = AdamState()
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x7EA1)))
    n = X_train.shape[0]
    best_err = np.inf
    best_params = params.copy()
    history: List[dict] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            t = wrap_params(params, requires_grad=True)
            loss = batch_loss(t, X_train[idx], Y_train[idx], model_config, cfg.loss_kind)
            loss.backward()
            grads = {k: ten.grad for k, ten in t.items() if ten.grad is not None}
            adam_step(params, grads, state, cfg)
            losses.append(float(loss.data))
        val_err = evaluate_error(params, X_val_in, Y_val)
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_error_deg": val_err}
        )
        if val_err < best_err:
            best_err = val_err
            best_params = params.copy()
    return best_params, history


def mean_baseline(train_windows) -> SphericalGaze:
    """Constant prediction: circular mean of yaw, arithmetic mean of pitch."""
    if not train_windows:
        raise EmptyDataset("empty training split")
    centers = [w[len(w) // 2].gt_gaze for w in train_windows]
    yaws = np.array([g.yaw for g in centers])
    pitches = np.array([g.pitch for g in centers])
    yaw = float(np.arctan2(np.sin(yaws).mean(), np.cos(yaws).mean()))
    return SphericalGaze(yaw=yaw, pitch=float(pitches.mean()))
