import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import as_updates
from lpsketch.lpsampler import REASONS, LpSampler, SamplerConfig, counter_bits, first_accept
from lpsketch.oracle import exact_lp_distribution, lp_norm, tv_distance
from lpsketch.results import Verdict

updates = st.lists(st.tuples(st.integers(1, 64), st.integers(-20, 20)), max_size=20)


def batch(x, p=1.0, eps=0.25, rounds=500, seed=0, **kw):
    n = kw.pop("n", len(x))
    return LpSampler(p=p, eps=eps, delta=0.1, n=n, seed=seed, n_rounds=rounds, **kw).fit(as_updates(x))


def padded(values, n):
    x = np.zeros(n, dtype=np.int64)
    x[: len(values)] = values
    return x


class TestConfig:
    def test_p_1_5(self):
        cfg = SamplerConfig.from_params(1.5, 0.1, 0.1, 1024)
        assert cfg.k == 20
        assert cfg.beta == pytest.approx(0.4642, abs=1e-4)
        assert cfg.m == 40 * math.ceil(0.1**-0.5)

    def test_p_0_5(self):
        cfg = SamplerConfig.from_params(0.5, 0.1, 0.1, 1024)
        assert (cfg.k, cfg.m) == (20, 40)
        assert cfg.beta == pytest.approx(10.0)

    def test_p_1(self):
        cfg = SamplerConfig.from_params(1.0, 1 / 16, 0.1, 1024)
        assert cfg.k == cfg.m == 16
        assert cfg.beta == 1.0

    def test_rounds(self):
        cfg = SamplerConfig.from_params(1.0, 0.25, 0.1, 1024)
        assert cfg.v == math.ceil(2 * math.log(10) / 0.25)
        assert cfg.l == 4 * 10

    @pytest.mark.parametrize("p", [0.0, 2.0, 2.5, -1.0])
    def test_p_rejected(self, p):
        with pytest.raises(ValueError):
            SamplerConfig.from_params(p, 0.25, 0.1, 64)

    @pytest.mark.parametrize("eps, delta", [(0, 0.1), (1, 0.1), (0.25, 0), (0.25, 1)])
    def test_eps_delta_rejected(self, eps, delta):
        with pytest.raises(ValueError):
            LpSampler(p=1, eps=eps, delta=delta, n=64).fit([])

    def test_many_rounds_warns(self):
        with pytest.warns(RuntimeWarning):
            LpSampler(p=1, eps=0.25, delta=0.1, n=16, seed=0).fit([])

    def test_few_rounds_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            LpSampler(p=1, eps=0.25, delta=0.1, n=1024, seed=0).fit([])


class TestSpace:
    def test_counters_formula(self):
        s = LpSampler(p=1.5, eps=0.25, delta=0.1, n=1024, seed=0).fit([])
        cfg = s.config_
        assert s.counters_used == cfg.v * (6 * cfg.m * cfg.l + cfg.norm_rows_x + cfg.norm_rows_z)
        assert s.counters_used == s.counters_.size + s.xrows_.size + s.zrows_.size

    def test_per_round_bound(self):
        """Counters per round are O(m log n) with a fixed constant."""
        for n in (256, 1024, 4096, 16384):
            cfg = SamplerConfig.from_params(1.0, 0.25, 0.1, n)
            assert cfg.counters_per_round <= 30 * cfg.m * math.log2(n)

    def test_counter_bits(self):
        assert counter_bits(1024, 1.0) == math.ceil(10 + 20 + 20) + 1
        s = LpSampler(p=1, eps=0.25, delta=0.1, n=1024, seed=0).fit([])
        assert s.space_bits == s.counters_used * counter_bits(1024, 1.0)


class TestUpdates:
    def test_inverse_restores_empty_state(self):
        s = LpSampler(p=1.5, eps=0.25, n=64, seed=3, n_rounds=4).fit([(5, 9)])
        s.partial_fit([(5, -9)])
        assert not s.counters_.any() and not s.xrows_.any() and not s.zrows_.any()

    def test_replay_determinism(self):
        X = [(1, 4), (30, -2), (7, 1)]
        a = LpSampler(p=0.5, n=64, seed=8, n_rounds=3).fit(X)
        b = LpSampler(p=0.5, n=64, seed=8, n_rounds=3).fit(X)
        assert a.to_bytes() == b.to_bytes()

    def test_double_update(self):
        a = LpSampler(p=1, n=64, seed=2, n_rounds=3).fit([(9, 2)])
        b = LpSampler(p=1, n=64, seed=2, n_rounds=3).fit([(9, 1)]).partial_fit([(9, 1)])
        np.testing.assert_allclose(a.counters_, b.counters_, rtol=1e-12)
        np.testing.assert_allclose(a.zrows_, b.zrows_, rtol=1e-12)

    @given(updates, updates)
    def test_merge_is_concatenation(self, X, Y):
        fit = lambda U: LpSampler(p=1.5, n=64, seed=5, n_rounds=2).fit(U)
        merged = fit(X) + fit(Y)
        whole = fit(X + Y)
        np.testing.assert_allclose(merged.counters_, whole.counters_, atol=1e-6)
        np.testing.assert_allclose(merged.xrows_, whole.xrows_, atol=1e-6)

    def test_merge_mismatch(self):
        with pytest.raises(ValueError):
            LpSampler(n=64, seed=1, n_rounds=2).fit([]).merge(LpSampler(n=64, seed=2, n_rounds=2).fit([]))

    def test_magnitude_bound(self):
        with pytest.raises(OverflowError):
            LpSampler(n=8, seed=1, n_rounds=1).fit([(1, 65)])
        LpSampler(n=8, seed=1, n_rounds=1, max_magnitude=100).fit([(1, 65)])

    def test_index_range(self):
        with pytest.raises(IndexError):
            LpSampler(n=8, seed=1, n_rounds=1).fit([(9, 1)])


class TestSerialisation:
    def test_roundtrip(self):
        s = LpSampler(p=1.5, eps=0.25, n=64, seed=12, n_rounds=5).fit([(3, 7), (60, -4)])
        back = LpSampler.from_bytes(s.to_bytes())
        assert back.to_bytes() == s.to_bytes()
        for key, val in s.round_results().items():
            np.testing.assert_array_equal(back.round_results()[key], val)

    def test_malformed(self):
        with pytest.raises(ValueError):
            LpSampler.from_bytes(b"junk")
        blob = LpSampler(n=64, seed=1, n_rounds=2).fit([]).to_bytes()
        with pytest.raises(ValueError):
            LpSampler.from_bytes(blob[:-8])


class TestRecovery:
    def test_zero_vector_fails(self):
        s = LpSampler(p=1, n=64, seed=0, n_rounds=10).fit([])
        res = s.round_results()
        assert not res["accepted"].any()
        assert np.all(res["reason"] == REASONS.index("zero"))
        assert s.sample().verdict is Verdict.FAIL

    def test_one_sparse(self):
        res = batch(padded([0, 0, 7], 64), rounds=2000).round_results()
        acc = res["accepted"]
        assert acc.any()
        assert np.all(res["index"][acc] == 3)
        assert np.all(np.abs(res["estimate"][acc] - 7) <= 0.25 * 7)

    def test_two_equal_coordinates(self):
        """Accepted samples split evenly between two equal entries."""
        counts = np.zeros(2)
        for seed in range(10):
            res = batch(padded([1, 1], 16), rounds=10**4, seed=seed).round_results()
            counts += np.bincount(res["index"][res["accepted"]] - 1, minlength=16)[:2]
        assert abs(counts[0] / counts.sum() - 0.5) <= 0.02

    def test_clamp_flag_fails_round(self):
        s = LpSampler(p=1, n=64, seed=0, n_rounds=4).fit([(1, 1)])
        s.clamped_[:] = [True, False, True, False]
        res = s.round_results()
        assert np.all(res["reason"][[0, 2]] == REASONS.index("clamp"))

    @pytest.mark.parametrize("p", [0.5, 1.0, 1.5])
    def test_acceptance_and_tail_rates(self, p):
        """Per-round acceptance is at least eps/2^p - 0.02 and the tail test
        rarely fires."""
        eps = 0.25
        x = np.random.default_rng(int(10 * p)).integers(-10, 11, 64)
        res = batch(x, p=p, eps=eps, rounds=2000, seed=1).round_results()
        assert res["accepted"].mean() >= eps / 2**p - 0.02
        assert np.mean(res["reason"] == REASONS.index("tail")) <= eps

    def test_distribution_small_vector(self):
        x = padded([8, 4, 2, 1, 1], 64)
        res = batch(x, rounds=6000, seed=4).round_results()
        idx = res["index"][res["accepted"]]
        freq = np.bincount(idx - 1, minlength=64) / idx.size
        assert tv_distance(exact_lp_distribution(x, 1.0), freq) <= 0.25 + 0.05

    def test_estimates_close(self):
        x = np.random.default_rng(7).integers(-10, 11, 64)
        res = batch(x, p=1.0, rounds=3000, seed=2).round_results()
        acc = res["accepted"]
        truth = x[res["index"][acc] - 1]
        assert np.mean(np.abs(res["estimate"][acc] - truth) <= 0.25 * np.abs(truth)) >= 0.99

    def test_r_sandwich(self):
        x = np.random.default_rng(3).integers(-10, 11, 64)
        r = batch(x, p=1.5, rounds=500, seed=3).round_results()["r"]
        norm = lp_norm(x, 1.5)
        assert np.mean((norm <= r) & (r <= 2 * norm)) >= 0.95


class TestWrapper:
    def test_first_accept(self):
        np.testing.assert_array_equal(first_accept([[False, True, True], [False, False, False]]), [1, -1])
        assert first_accept([True, False]) == 0

    def test_sample_is_first_accepted_round(self):
        x = padded([8, 4, 2, 1, 1], 64)
        s = LpSampler(p=1, eps=0.25, delta=0.1, n=64, seed=21).fit(as_updates(x))
        res = s.round_results()
        j = int(first_accept(res["accepted"]))
        out = s.sample()
        assert out.accepted and out.info["round"] == j
        assert out.index == res["index"][j]
        assert out.estimate == pytest.approx(res["estimate"][j])

    def test_all_fail(self):
        assert LpSampler(n=64, seed=0, n_rounds=3).fit([]).sample().verdict is Verdict.FAIL

    def test_wrapper_failure_rate(self):
        x = np.random.default_rng(5).integers(-10, 11, 64)
        fails = sum(
            not LpSampler(p=1, eps=0.25, delta=0.1, n=64, seed=t).fit(as_updates(x)).sample().accepted
            for t in range(100)
        )
        assert fails <= 0.1 * 100 + 8
