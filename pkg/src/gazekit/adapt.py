"""Self-supervised domain adaptation: a feature-domain discriminator
coupled through gradient reversal, plus a left-right mirror-consistency
loss on unlabeled target data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyBatch, EmptyDataset
from .losses import pinball_loss_batch
from .models import ModelParams, _embed, forward_batch, wrap_params
from .simulator import DatasetSplit, FrameRecord, mirror_features, windows_to_arrays
from .training import AdamState, TrainConfig, adam_step, _model_inputs


@dataclass(frozen=True)
class AdaptConfig:
    alpha: float = 60.0
    beta: float = 3.0
    disc_lr: float = 1e-3
    model_lr: float = 1e-3
    grad_reversal_scale: float = 0.1
    batch_size: int = 64
    epochs: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be > 0")


@dataclass
class DiscriminatorParams:
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "DiscriminatorParams":
        return DiscriminatorParams({k: v.copy() for k, v in self.arrays.items()})


def init_discriminator(embed_dim: int, hidden: int = 16, seed: int = 0) -> DiscriminatorParams:
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xD15C)))
    b1 = 1.0 / np.sqrt(embed_dim)
    b2 = 1.0 / np.sqrt(hidden)
    return DiscriminatorParams(
        {
            "disc.W1": rng.uniform(-b1, b1, (embed_dim, hidden)),
            "disc.b1": np.zeros(hidden),
            "disc.W2": rng.uniform(-b2, b2, (hidden, 1)),
            "disc.b2": np.zeros(1),
        }
    )


def _disc_logits(t: Dict[str, Tensor], feats: Tensor) -> Tensor:
    h = ad.tanh(feats @ t["disc.W1"] + t["disc.b1"])
    return h @ t["disc.W2"] + t["disc.b2"]


def _bce_with_logits(logits: Tensor, label: float) -> Tensor:
    # -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    return (ad.softplus(logits) - logits * label).mean()


def discriminator_loss_graph(
    disc_t: Dict[str, Tensor], feats_src: Tensor, feats_tgt: Tensor
) -> Tensor:
    if feats_src.data.shape[0] == 0 or feats_tgt.data.shape[0] == 0:
        raise EmptyBatch("discriminator needs non-empty source and target batches")
    return (
        _bce_with_logits(_disc_logits(disc_t, feats_src), 1.0)
        + _bce_with_logits(_disc_logits(disc_t, feats_tgt), 0.0)
    ) * 0.5


def discriminator_loss(
    disc: DiscriminatorParams, feats_src: np.ndarray, feats_tgt: np.ndarray
) -> float:
    """Binary cross-entropy of the domain classifier (source=1, target=0)."""
    t = {k: Tensor(v) for k, v in disc.arrays.items()}
    return float(
        discriminator_loss_graph(t, Tensor(np.atleast_2d(feats_src)),
                                 Tensor(np.atleast_2d(feats_tgt))).data
    )


def symmetry_loss_graph(
    t: Dict[str, Tensor], X: np.ndarray, X_mirr: np.ndarray, config
) -> Tensor:
    """Mirror-consistency pinball loss, symmetrized over the pair.

    Each prediction is scored against the (detached) horizontally
    mirrored prediction from the other input; averaging both directions
    makes the loss invariant to swapping the pair then mirroring.
    """
    ang_a, sig_a = forward_batch(t, X, config)
    ang_b, sig_b = forward_batch(t, X_mirr, config)
    # mirror of a spherical prediction: negate yaw, keep pitch
    flip = np.array([-1.0, 1.0])
    tgt_for_a = ang_b.data * flip
    tgt_for_b = ang_a.data * flip
    return (
        pinball_loss_batch(ang_a, sig_a, tgt_for_a)
        + pinball_loss_batch(ang_b, sig_b, tgt_for_b)
    ) * 0.5


def symmetry_loss(params: ModelParams, X: np.ndarray, X_mirr: np.ndarray) -> float:
    """Scalar mirror-consistency loss of a model on a feature pair."""
    t = wrap_params(params)
    return float(symmetry_loss_graph(t, np.asarray(X, dtype=float),
                                     np.asarray(X_mirr, dtype=float),
                                     params.config).data)


def _target_inputs(frames: List[FrameRecord], config) -> np.ndarray:
    if config.kind == "static":
        return np.stack([fr.features for fr in frames])
    by_subject: Dict[str, List[FrameRecord]] = {}
    for fr in frames:
        by_subject.setdefault(fr.subject_id, []).append(fr)
    wins = []
    w = config.window
    for s in sorted(by_subject):
        fs = sorted(by_subject[s], key=lambda f: f.frame_index)
        for start in range(len(fs) - w + 1):
            wins.append([f.features for f in fs[start : start + w]])
    return np.asarray(wins)


def _central_features(X: np.ndarray, config) -> np.ndarray:
    return X if X.ndim == 2 else X[:, X.shape[1] // 2, :]


def adapt_train(
    params: ModelParams,
    labeled_src: DatasetSplit,
    unlabeled_tgt: List[FrameRecord],
    cfg: AdaptConfig,
) -> ModelParams:
    """Fine-tune a pretrained model on mixed source/target batches.

    Minimizes alpha * supervised pinball (source only) + discriminator
    BCE (adversarial via gradient reversal) + beta * mirror consistency
    (target only).  Returns the adapted model parameters.
    """
    if not labeled_src.train or not unlabeled_tgt:
        raise EmptyDataset("need labeled source windows and unlabeled target frames")
    config = params.config
    X_src, Y_src = windows_to_arrays(labeled_src.train)
    X_src = _model_inputs(X_src, config)
    X_tgt = _target_inputs(unlabeled_tgt, config)

    adapted = params.copy()
    disc = init_discriminator(config.embed, seed=cfg.seed)
    opt_cfg = TrainConfig(lr=cfg.model_lr, batch_size=cfg.batch_size, seed=cfg.seed)
    disc_cfg = TrainConfig(lr=cfg.disc_lr, batch_size=cfg.batch_size, seed=cfg.seed)
    m_state, d_state = AdamState(), AdamState()
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xADA)))
    n_steps = max(1, min(len(X_src), len(X_tgt)) // cfg.batch_size)
    for _epoch in range(cfg.epochs):
        for _step in range(n_steps):
            si = rng.integers(0, len(X_src), size=cfg.batch_size)
            ti = rng.integers(0, len(X_tgt), size=cfg.batch_size)
            xb_s, yb_s = X_src[si], Y_src[si]
            xb_t = X_tgt[ti]

            t = wrap_params(adapted, requires_grad=True)
            d = {k: Tensor(v, requires_grad=True) for k, v in disc.arrays.items()}

            ang_s, sig_s = forward_batch(t, xb_s, config)
            sup = pinball_loss_batch(ang_s, sig_s, yb_s)

            emb_s = _embed(t, Tensor(_central_features(xb_s, config)))
            emb_t = _embed(t, Tensor(_central_features(xb_t, config)))
            disc_loss = discriminator_loss_graph(
                d,
                ad.grad_reverse(emb_s, cfg.grad_reversal_scale),
                ad.grad_reverse(emb_t, cfg.grad_reversal_scale),
            )

            sym = symmetry_loss_graph(t, xb_t, mirror_features(xb_t), config)

            total = sup * cfg.alpha + disc_loss + sym * cfg.beta
            total.backward()

            adam_step(
                adapted,
                {k: ten.grad for k, ten in t.items() if ten.grad is not None},
                m_state,
                opt_cfg,
            )
            d_grads = {k: ten.grad for k, ten in d.items() if ten.grad is not None}
            # reuse adam_step via a params-like shim
            _disc_adam(disc, d_grads, d_state, disc_cfg)
    return adapted


def _disc_adam(disc: DiscriminatorParams, grads, state: AdamState, cfg: TrainConfig):
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for name, g in grads.items():
        p = disc.arrays[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m[...] = b1 * m + (1 - b1) * g
        v[...] = b2 * v + (1 - b2) * g * g
        p -= cfg.lr * (m / (1 - b1**state.t)) / (np.sqrt(v / (1 - b2**state.t)) + cfg.adam_eps)
