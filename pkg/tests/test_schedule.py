"""Schedule construction, identities, endpoint values, and serialization."""

import json

import mpmath
import numpy as np
import pytest

from sparsebeam.errors import ConfigurationError, StepError
from sparsebeam.schedule import NoiseSchedule, linear_schedule, load_schedule, save_schedule


class TestLinearRamp:
    def test_endpoints_and_monotonicity(self):
        sched = linear_schedule(T=1000, beta_start=1e-4, beta_end=2e-2)
        assert sched.beta(1) == pytest.approx(1e-4, rel=0, abs=0)
        assert sched.beta(1000) == pytest.approx(2e-2, rel=0, abs=0)
        assert np.all(np.diff(sched.betas) > 0)
        # interior point from the explicit ramp formula
        k = 137
        expected = 1e-4 + (k - 1) * (2e-2 - 1e-4) / 999
        assert sched.beta(k) == pytest.approx(expected, rel=1e-13)

    def test_alpha_identities(self):
        sched = linear_schedule(T=50)
        assert sched.alpha_bar(0) == 1.0
        assert sched.alpha_bar(1) == pytest.approx(sched.alpha(1), rel=0)
        for t in (1, 7, 50):
            assert sched.alpha(t) == pytest.approx(1.0 - sched.beta(t), rel=0)
        # alpha_bar is the running product and strictly decreasing
        prod = 1.0
        for t in range(1, 51):
            prod *= sched.alpha(t)
            assert sched.alpha_bar(t) == pytest.approx(prod, rel=1e-12)
        assert np.all(np.diff(sched.alpha_bars) < 0)

    def test_final_alpha_bar_against_extended_precision_product(self):
        # Independent route: the same ramp evaluated termwise at 50 digits.
        sched = linear_schedule(T=1000, beta_start=1e-4, beta_end=2e-2)
        with mpmath.workdps(50):
            start, end = mpmath.mpf("1e-4"), mpmath.mpf("2e-2")
            prod = mpmath.mpf(1)
            for k in range(1, 1001):
                beta_k = start + (k - 1) * (end - start) / 999
                prod *= 1 - beta_k
            oracle = float(prod)
        assert oracle < 1e-4
        assert sched.alpha_bar(1000) == pytest.approx(oracle, rel=1e-10)

    def test_sigma_rule(self):
        sched = linear_schedule(T=10)
        assert sched.sigma(1) == 0.0
        for t in range(2, 11):
            assert sched.sigma(t) == pytest.approx(np.sqrt(sched.beta(t)), rel=0)

    def test_reverse_lead_toggle(self):
        a = linear_schedule(T=5, reverse_coeff="alpha")
        ab = linear_schedule(T=5, reverse_coeff="alpha_bar")
        t = 4
        assert a.reverse_lead(t) == pytest.approx(1.0 / np.sqrt(a.alpha(t)), rel=1e-15)
        assert ab.reverse_lead(t) == pytest.approx(1.0 / np.sqrt(ab.alpha_bar(t)), rel=1e-15)
        assert ab.reverse_lead(t) > a.reverse_lead(t)

    def test_single_step_schedule(self):
        sched = linear_schedule(T=1, beta_start=1e-4)
        assert sched.beta(1) == pytest.approx(1e-4)
        assert sched.sigma(1) == 0.0
        assert sched.alpha_bar(1) == pytest.approx(1.0 - 1e-4)


class TestValidation:
    @pytest.mark.parametrize("t", [0, -3, 1001, 5000])
    def test_step_out_of_range(self, t):
        sched = linear_schedule(T=1000)
        with pytest.raises(StepError):
            sched.beta(t)

    def test_alpha_bar_allows_zero_only(self):
        sched = linear_schedule(T=10)
        assert sched.alpha_bar(0) == 1.0
        with pytest.raises(StepError):
            sched.alpha_bar(-1)
        with pytest.raises(StepError):
            sched.alpha_bar(11)

    def test_non_integer_step(self):
        sched = linear_schedule(T=10)
        with pytest.raises(StepError):
            sched.beta(2.5)

    @pytest.mark.parametrize("kwargs", [
        dict(T=0),
        dict(T=-1),
        dict(T=10.5),
        dict(beta_start=0.0),
        dict(beta_start=-1e-4),
        dict(beta_end=1.0),
        dict(beta_start=0.5, beta_end=0.1),
    ])
    def test_bad_construction(self, kwargs):
        base = dict(T=100, beta_start=1e-4, beta_end=2e-2)
        base.update(kwargs)
        with pytest.raises(ConfigurationError):
            NoiseSchedule(**base)

    def test_bad_tokens(self):
        with pytest.raises(ConfigurationError):
            NoiseSchedule(T=10, beta_start=1e-4, beta_end=2e-2, variant="cosine")
        with pytest.raises(ConfigurationError):
            NoiseSchedule(T=10, beta_start=1e-4, beta_end=2e-2, reverse_coeff="foo")
        with pytest.raises(ConfigurationError):
            NoiseSchedule(T=10, beta_start=1e-4, beta_end=2e-2, sigma_rule="zero")


class TestSerialization:
    def test_round_trip(self, tmp_path):
        sched = linear_schedule(T=123, beta_start=2e-4, beta_end=1e-2,
                                reverse_coeff="alpha_bar")
        path = tmp_path / "schedule.json"
        save_schedule(sched, path)
        doc = json.loads(path.read_text())
        assert doc == {"T": 123, "beta_start": 2e-4, "beta_end": 1e-2,
                       "variant": "linear", "sigma_rule": "beta",
                       "reverse_coeff": "alpha_bar"}
        back = load_schedule(path)
        assert back.to_dict() == sched.to_dict()
        np.testing.assert_array_equal(back.betas, sched.betas)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigurationError):
            NoiseSchedule.from_dict({"T": 10, "beta_start": 1e-4, "beta_end": 2e-2,
                                     "warmup": 5})

    def test_missing_keys_rejected(self):
        with pytest.raises(ConfigurationError):
            NoiseSchedule.from_dict({"T": 10, "beta_start": 1e-4})

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_schedule(path)
