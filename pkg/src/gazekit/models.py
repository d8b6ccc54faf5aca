"""Gaze regressors: static MLP, temporal-window (TRN-style) and
bidirectional gated recurrent models, with a pinball quantile head.

All models share a feature MLP (F -> H -> D, tanh) and a dense head
producing (yaw, pitch, raw_sigma); sigma = softplus(raw_sigma) so the
quantile offset is positive by construction.  Dropout, when enabled,
acts on the head input only (used for the MC-dropout baseline).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DropoutDisabled, ShapeMismatch
from .geometry import SphericalGaze

MODEL_KINDS = ("static", "trn", "lstm")
TRN_WINDOW_SIZES = (1, 3, 7)


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "static"
    feature_dim: int = 8
    hidden: int = 64
    embed: int = 32
    state: int = 32
    layers: int = 2
    window: int = 7
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.window % 2 != 1:
            raise ValueError("window must be odd")


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Seeded uniform(+-1/sqrt(fan_in)) initialization of all weights."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA11)))
    F, H, D, S = config.feature_dim, config.hidden, config.embed, config.state
    a: Dict[str, np.ndarray] = {}
    a["mlp.W1"] = _uniform(rng, F, (F, H))
    a["mlp.b1"] = np.zeros(H)
    a["mlp.W2"] = _uniform(rng, H, (H, D))
    a["mlp.b2"] = np.zeros(D)
    if config.kind == "static":
        a["head.W"] = _uniform(rng, D, (D, 3))
        a["head.b"] = np.zeros(3)
    elif config.kind == "trn":
        for k in TRN_WINDOW_SIZES:
            a[f"trn.head{k}.W"] = _uniform(rng, k * D, (k * D, 3))
            a[f"trn.head{k}.b"] = np.zeros(3)
    else:  # bidirectional recurrent
        for layer in range(config.layers):
            in_dim = D if layer == 0 else 2 * S
            for d in ("f", "b"):
                p = f"gru{layer}{d}"
                for gate in ("z", "r", "h"):
                    a[f"{p}.W{gate}"] = _uniform(rng, in_dim, (in_dim, S))
                    a[f"{p}.U{gate}"] = _uniform(rng, S, (S, S))
                    a[f"{p}.b{gate}"] = np.zeros(S)
        a["head.W"] = _uniform(rng, 2 * S, (2 * S, 3))
        a["head.b"] = np.zeros(3)
    return ModelParams(config=config, arrays=a)


def wrap_params(params: ModelParams, requires_grad: bool = False) -> Dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in params.arrays.items()}


def _embed(t: Dict[str, Tensor], x: Tensor) -> Tensor:
    h = ad.tanh(x @ t["mlp.W1"] + t["mlp.b1"])
    return ad.tanh(h @ t["mlp.W2"] + t["mlp.b2"])


def _gru_cell(t: Dict[str, Tensor], prefix: str, x: Tensor, h: Tensor) -> Tensor:
    z = ad.sigmoid(x @ t[f"{prefix}.Wz"] + h @ t[f"{prefix}.Uz"] + t[f"{prefix}.bz"])
    r = ad.sigmoid(x @ t[f"{prefix}.Wr"] + h @ t[f"{prefix}.Ur"] + t[f"{prefix}.br"])
    cand = ad.tanh(
        x @ t[f"{prefix}.Wh"] + (r * h) @ t[f"{prefix}.Uh"] + t[f"{prefix}.bh"]
    )
    one = Tensor(1.0)
    return (one - z) * h + z * cand


def _recurrent_features(
    t: Dict[str, Tensor], steps, config: ModelConfig
) -> Tensor:
    """Run the stacked bidirectional recurrent layers over a list of
    (B, D) timestep tensors; returns concat of the top layer's final
    forward and backward states, (B, 2S)."""
    B = steps[0].shape[0]
    S = config.state
    inputs = steps
    last_f = last_b = None
    for layer in range(config.layers):
        hf = Tensor(np.zeros((B, S)))
        fwd = []
        for x in inputs:
            hf = _gru_cell(t, f"gru{layer}f", x, hf)
            fwd.append(hf)
        hb = Tensor(np.zeros((B, S)))
        bwd = [None] * len(inputs)
        for i in range(len(inputs) - 1, -1, -1):
            hb = _gru_cell(t, f"gru{layer}b", inputs[i], hb)
            bwd[i] = hb
        inputs = [ad.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]
        last_f, last_b = fwd[-1], bwd[0]
    return ad.concat([last_f, last_b], axis=-1)


def forward_batch(
    t: Dict[str, Tensor],
    X: np.ndarray,
    config: ModelConfig,
    dropout_rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Tensor]:
    """Batched forward pass.

    X is (B, F) for the static model or (B, window, F) for temporal
    models.  Returns (angles (B, 2), sigma (B, 1)).  Dropout on the head
    input is applied only when a generator is passed.
    """
    cfg = config

    def maybe_drop(h: Tensor) -> Tensor:
        if dropout_rng is not None and cfg.dropout_rate > 0:
            return ad.dropout(h, cfg.dropout_rate, dropout_rng)
        return h

    if cfg.kind == "static":
        if X.ndim != 2 or X.shape[1] != cfg.feature_dim:
            raise ShapeMismatch(f"static model expects (B, {cfg.feature_dim}), got {X.shape}")
        h = maybe_drop(_embed(t, Tensor(X)))
        out = h @ t["head.W"] + t["head.b"]
        return out[:, 0:2], ad.softplus(out[:, 2:3])

    if X.ndim != 3 or X.shape[1] != cfg.window or X.shape[2] != cfg.feature_dim:
        raise ShapeMismatch(
            f"{cfg.kind} model expects (B, {cfg.window}, {cfg.feature_dim}), got {X.shape}"
        )
    steps = [_embed(t, Tensor(X[:, i, :])) for i in range(cfg.window)]
    center = cfg.window // 2

    if cfg.kind == "trn":
        ang_sum = None
        sig_sum = None
        for k in TRN_WINDOW_SIZES:
            half = k // 2
            feats = ad.concat(steps[center - half : center + half + 1], axis=-1)
            out = maybe_drop(feats) @ t[f"trn.head{k}.W"] + t[f"trn.head{k}.b"]
            ang, sig = out[:, 0:2], ad.softplus(out[:, 2:3])
            ang_sum = ang if ang_sum is None else ang_sum + ang
            sig_sum = sig if sig_sum is None else sig_sum + sig
        n = float(len(TRN_WINDOW_SIZES))
        return ang_sum * (1.0 / n), sig_sum * (1.0 / n)

    feats = maybe_drop(_recurrent_features(t, steps, cfg))
    out = feats @ t["head.W"] + t["head.b"]
    return out[:, 0:2], ad.softplus(out[:, 2:3])


def _wrap_yaw(yaw: float) -> float:
    y = float(np.arctan2(np.sin(yaw), np.cos(yaw)))
    return np.pi if abs(y + np.pi) < 1e-15 else y


def _to_prediction(ang: np.ndarray, sig: np.ndarray) -> SphericalGaze:
    return SphericalGaze(
        yaw=_wrap_yaw(float(ang[0])),
        pitch=float(np.clip(ang[1], -np.pi / 2, np.pi / 2)),
        sigma=float(sig[0]),
    )


def forward_static(params: ModelParams, x: np.ndarray) -> SphericalGaze:
    """Deterministic single-sample prediction of the static model."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.config.feature_dim,):
        raise ShapeMismatch(f"expected ({params.config.feature_dim},), got {x.shape}")
    t = wrap_params(params)
    ang, sig = forward_batch(t, x[None, :], params.config)
    return _to_prediction(ang.data[0], sig.data[0])


def forward_sequence(params: ModelParams, X: np.ndarray) -> SphericalGaze:
    """Prediction for the central frame of a window (recurrent model)."""
    X = np.asarray(X, dtype=float)
    cfg = params.config
    if X.shape != (cfg.window, cfg.feature_dim):
        raise ShapeMismatch(f"expected ({cfg.window}, {cfg.feature_dim}), got {X.shape}")
    t = wrap_params(params)
    ang, sig = forward_batch(t, X[None], cfg)
    return _to_prediction(ang.data[0], sig.data[0])


def forward_trn(params: ModelParams, X: np.ndarray) -> SphericalGaze:
    """Prediction averaging the fixed 1/3/7-frame sub-window heads."""
    return forward_sequence(params, X)


def predict_batch(params: ModelParams, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Inference for many samples; returns (angles (N, 2), sigmas (N,))."""
    t = wrap_params(params)
    ang, sig = forward_batch(t, np.asarray(X, dtype=float), params.config)
    return ang.data, sig.data[:, 0]


def mc_dropout_uncertainty(
    params: ModelParams, X: np.ndarray, n: int = 5, seed: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """Uncertainty from n stochastic forward passes with head-input dropout.

    Returns (mean angles (N, 2), sigma_hat (N,)) where sigma_hat is the
    square root of the per-angle prediction variance averaged over yaw
    and pitch.  Deterministic given the seed.
    """
    if params.config.dropout_rate <= 0:
        raise DropoutDisabled("model has dropout_rate == 0")
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD0)))
    t = wrap_params(params)
    passes = []
    for _ in range(n):
        ang, _sig = forward_batch(t, X, params.config, dropout_rng=rng)
        passes.append(ang.data)
    stack = np.stack(passes)  # (n, N, 2)
    mean = stack.mean(axis=0)
    var = stack.var(axis=0)  # population variance; 0 for n == 1
    sigma_hat = np.sqrt(var.mean(axis=-1))
    return mean, sigma_hat
