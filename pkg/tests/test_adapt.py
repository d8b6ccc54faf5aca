import numpy as np
import pytest

from gazekit import simulator as S
from gazekit.adapt import (
    AdaptConfig,
    DiscriminatorParams,
    adapt_train,
    discriminator_loss,
    init_discriminator,
    symmetry_loss,
)
from gazekit.autodiff import Tensor
from gazekit.errors import EmptyBatch
from gazekit.models import ModelConfig, init_params
from gazekit.simulator import mirror_features


def make_params(seed=0):
    return init_params(ModelConfig(kind="static", feature_dim=8, hidden=8, embed=4),
                       seed=seed)


class TestSymmetryLoss:
    def test_constant_model_residual_is_sigma_term(self):
        p = make_params()
        for k in p.arrays:
            p.arrays[k][:] = 0.0
        p.arrays["head.b"][2] = 0.7
        sigma0 = float(np.log1p(np.exp(0.7)))
        X = np.random.default_rng(0).normal(size=(5, 8))
        # predictions are (0, 0, sigma0) on both inputs: the angle error is
        # zero and only the quantile-offset terms remain (0.1 * sigma each
        # side of the average)
        assert symmetry_loss(p, X, mirror_features(X)) == pytest.approx(0.1 * sigma0)

    def test_negating_yaw_path_weights_preserves_loss(self):
        p = make_params(seed=1)
        X = np.random.default_rng(1).normal(size=(6, 8))
        base = symmetry_loss(p, X, mirror_features(X))
        q = p.copy()
        q.arrays["mlp.W1"][list(S.MIRROR_NEGATE_CHANNELS), :] *= -1.0
        assert symmetry_loss(q, X, mirror_features(X)) == pytest.approx(base, abs=1e-12)

    def test_swap_invariance(self):
        p = make_params(seed=2)
        X = np.random.default_rng(2).normal(size=(4, 8))
        Xm = mirror_features(X)
        assert symmetry_loss(p, X, Xm) == pytest.approx(
            symmetry_loss(p, Xm, X), abs=1e-12
        )


class TestDiscriminatorLoss:
    def test_uninformative_disc_gives_ln2(self):
        d = DiscriminatorParams(
            {
                "disc.W1": np.zeros((4, 16)),
                "disc.b1": np.zeros(16),
                "disc.W2": np.zeros((16, 1)),
                "disc.b2": np.zeros(1),
            }
        )
        rng = np.random.default_rng(0)
        loss = discriminator_loss(d, rng.normal(size=(10, 4)), rng.normal(size=(10, 4)))
        assert loss == pytest.approx(np.log(2))

    def test_separable_features_trainable_to_zero(self):
        from gazekit.adapt import _disc_adam, discriminator_loss_graph
        from gazekit.training import AdamState, TrainConfig

        rng = np.random.default_rng(1)
        src = rng.normal(loc=3.0, size=(64, 4))
        tgt = rng.normal(loc=-3.0, size=(64, 4))
        disc = init_discriminator(4, seed=0)
        st = AdamState()
        cfg = TrainConfig(lr=5e-2)
        for _ in range(200):
            d = {k: Tensor(v, requires_grad=True) for k, v in disc.arrays.items()}
            loss = discriminator_loss_graph(d, Tensor(src), Tensor(tgt))
            loss.backward()
            _disc_adam(disc, {k: t.grad for k, t in d.items()}, st, cfg)
        assert discriminator_loss(disc, src, tgt) < 0.05

    def test_matched_distributions_stay_near_ln2(self):
        from gazekit.adapt import _disc_adam, discriminator_loss_graph
        from gazekit.training import AdamState, TrainConfig

        rng = np.random.default_rng(2)
        disc = init_discriminator(4, seed=0)
        st = AdamState()
        cfg = TrainConfig(lr=1e-2)
        for _ in range(100):
            src = rng.normal(size=(64, 4))
            tgt = rng.normal(size=(64, 4))
            d = {k: Tensor(v, requires_grad=True) for k, v in disc.arrays.items()}
            loss = discriminator_loss_graph(d, Tensor(src), Tensor(tgt))
            loss.backward()
            _disc_adam(disc, {k: t.grad for k, t in d.items()}, st, cfg)
        held_src = rng.normal(size=(2000, 4))
        held_tgt = rng.normal(size=(2000, 4))
        assert discriminator_loss(disc, held_src, held_tgt) > 0.6

    def test_empty_batch(self):
        d = init_discriminator(4)
        with pytest.raises(EmptyBatch):
            discriminator_loss(d, np.zeros((0, 4)), np.zeros((3, 4)))


def _toy_split(seed=0, noise=None):
    noise = noise or S.NoiseConfig(obs_base_deg=3.0, obs_yaw_gain=6.0)
    cfg = S.SessionConfig(
        n_subjects=4, seed=seed, loop_radius_range=(2.0, 2.0), noise=noise
    )
    return S.split_by_subject(S.simulate_session(cfg), (0.5, 0.25, 0.25))


class TestAdaptTrain:
    def test_runs_and_stays_finite(self):
        from gazekit.training import TrainConfig, train

        split = _toy_split()
        params, _ = train(split, TrainConfig(lr=3e-3, epochs=5, seed=0), "static")
        tgt_frames = [fr for win in _toy_split(seed=7).train for fr in win]
        cfg = AdaptConfig(epochs=1, seed=0, batch_size=32)
        adapted = adapt_train(params, split, tgt_frames, cfg)
        for v in adapted.arrays.values():
            assert np.isfinite(v).all()

    def test_total_loss_decreases_over_first_epoch(self):
        from gazekit.adapt import symmetry_loss_graph, discriminator_loss_graph
        from gazekit.losses import pinball_loss_batch
        from gazekit.models import forward_batch, wrap_params, _embed
        from gazekit.simulator import windows_to_arrays
        from gazekit.training import TrainConfig, train, _model_inputs

        split = _toy_split()
        params, _ = train(split, TrainConfig(lr=3e-3, epochs=3, seed=0), "static")
        tgt_frames = [fr for win in _toy_split(seed=7).train for fr in win]
        X_t = np.stack([fr.features for fr in tgt_frames])
        X_s, Y_s = windows_to_arrays(split.train)
        X_s = _model_inputs(X_s, params.config)
        cfg = AdaptConfig(epochs=1, seed=0, batch_size=32)

        def total_loss(p):
            t = wrap_params(p)
            ang, sig = forward_batch(t, X_s, p.config)
            sup = float(pinball_loss_batch(ang, sig, Y_s).data)
            sym = float(
                symmetry_loss_graph(t, X_t, mirror_features(X_t), p.config).data
            )
            return cfg.alpha * sup + cfg.beta * sym

        before = total_loss(params)
        adapted = adapt_train(params, split, tgt_frames, cfg)
        after = total_loss(adapted)
        assert after < before
