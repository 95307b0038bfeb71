"""Optimizer arithmetic, training-loop determinism, and toy convergence."""

import numpy as np
import pytest

from sparsebeam.denoiser import ConvDenoiser
from sparsebeam.errors import ConfigurationError, ShapeError, TrainingDivergenceError
from sparsebeam.layers import default_descriptor
from sparsebeam.schedule import linear_schedule
from sparsebeam.training import (AdamW, GaussianPairSampler, TrainConfig,
                                 VolumePairSampler, suggest_data_scale, train)

TOY = default_descriptor(base_width=8, level2_width=16, temb_width=16)


class TestAdamW:
    def test_single_step_hand_arithmetic(self):
        opt = AdamW(1, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.1)
        theta = np.array([1.0])
        new = opt.step(theta, np.array([0.5]), lr=0.1)
        # independent route: spell the update out by hand
        m_hat = (0.1 * 0.5) / (1 - 0.9)
        v_hat = (0.001 * 0.25) / (1 - 0.999)
        expected = 1.0 - 0.1 * (m_hat / (np.sqrt(v_hat) + 1e-8) + 0.1 * 1.0)
        assert new[0] == pytest.approx(expected, rel=1e-14)

    def test_weight_decay_is_decoupled(self):
        # with zero gradient the moments stay zero and only decay acts
        opt = AdamW(1, weight_decay=0.5)
        new = opt.step(np.array([2.0]), np.array([0.0]), lr=0.1)
        assert new[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0, rel=1e-14)

    def test_two_steps_accumulate_moments(self):
        opt = AdamW(1, weight_decay=0.0)
        theta = opt.step(np.array([0.0]), np.array([1.0]), lr=0.01)
        theta2 = opt.step(theta, np.array([1.0]), lr=0.01)
        m2 = 0.9 * 0.1 + 0.1 * 1.0
        v2 = 0.999 * 0.001 + 0.001 * 1.0
        m_hat = m2 / (1 - 0.9 ** 2)
        v_hat = v2 / (1 - 0.999 ** 2)
        expected = theta[0] - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert theta2[0] == pytest.approx(expected, rel=1e-12)


class TestSamplers:
    def test_volume_pair_sampler_alignment(self):
        clean = np.arange(24 ** 3, dtype=np.float32).reshape(24, 24, 24)
        cond = clean + 100.0
        sampler = VolumePairSampler([(clean, cond)], block_size=(8, 8, 8))
        g = np.random.default_rng(0)
        a, b = sampler.draw_batch(g, 5)
        assert a.shape == (5, 8, 8, 8)
        np.testing.assert_array_equal(b - a, np.full_like(a, 100.0))
        # reproducible given the same generator state
        a2, b2 = sampler.draw_batch(np.random.default_rng(0), 5)
        np.testing.assert_array_equal(a, a2)

    def test_volume_pair_sampler_validation(self):
        f = np.zeros((8, 8, 8))
        with pytest.raises(ShapeError):
            VolumePairSampler([(f, np.zeros((9, 8, 8)))])
        with pytest.raises(ShapeError):
            VolumePairSampler([(f, f)], block_size=(16, 16, 16))
        with pytest.raises(ConfigurationError):
            VolumePairSampler([])

    def test_suggest_data_scale(self):
        f = np.full((10, 10, 10), -2.0)
        assert suggest_data_scale([f]) == pytest.approx(2.0)
        assert suggest_data_scale([np.zeros((4, 4, 4))]) == 1.0


class TestTrainLoop:
    def test_zero_iterations_is_a_no_op(self):
        den = ConvDenoiser(TOY, seed=3)
        before = den.get_flat().copy()
        log = train(den, GaussianPairSampler(), linear_schedule(T=50),
                    TrainConfig(iterations=0))
        assert log.losses == [] and log.lrs == []
        np.testing.assert_array_equal(den.get_flat(), before)

    def test_training_is_deterministic(self):
        sched = linear_schedule(T=50)
        cfg = TrainConfig(iterations=5, batch_size=2, seed=12)
        runs = []
        for _ in range(2):
            den = ConvDenoiser(TOY, seed=3)
            train(den, GaussianPairSampler(), sched, cfg)
            runs.append(den.get_flat())
        np.testing.assert_array_equal(runs[0], runs[1])
        den = ConvDenoiser(TOY, seed=3)
        train(den, GaussianPairSampler(), sched, TrainConfig(iterations=5,
                                                             batch_size=2, seed=13))
        assert not np.array_equal(den.get_flat(), runs[0])

    def test_lr_decays_linearly(self):
        den = ConvDenoiser(TOY, seed=3)
        log = train(den, GaussianPairSampler(), linear_schedule(T=50),
                    TrainConfig(iterations=5, batch_size=2, lr_start=1e-4, lr_end=1e-5))
        assert log.lrs[0] == pytest.approx(1e-4)
        assert log.lrs[-1] == pytest.approx(1e-5)
        steps = np.diff(log.lrs)
        np.testing.assert_allclose(steps, steps[0], rtol=1e-10)

    def test_divergence_reports_iteration(self):
        class NaNSampler:
            def draw_batch(self, gen, n):
                bad = np.full((n, 8, 8, 8), np.nan, dtype=np.float32)
                return bad, bad

        den = ConvDenoiser(TOY, seed=3)
        with pytest.raises(TrainingDivergenceError, match="iteration 0"):
            train(den, NaNSampler(), linear_schedule(T=50), TrainConfig(iterations=3))

    def test_toy_dataset_loss_halves(self):
        # constant-mean blocks conditioned on themselves: after 2000 iterations
        # the trailing-100 mean loss drops below half the initial-100 mean.
        sched = linear_schedule(T=200)
        den = ConvDenoiser(TOY, seed=0)
        cfg = TrainConfig(iterations=2000, batch_size=4, lr_start=1e-3, lr_end=1e-4,
                          seed=7)
        log = train(den, GaussianPairSampler(block_size=(8, 8, 8)), sched, cfg)
        initial = float(np.mean(log.losses[:100]))
        trailing = float(np.mean(log.losses[-100:]))
        assert trailing < 0.5 * initial, f"initial {initial:.3f}, trailing {trailing:.3f}"
