"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test appends a ``CRITERION k ... PASS|FAIL`` line that is printed in
the terminal summary.  Run on its own with ``pytest tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, as_updates, random_sparse
from lpsketch.cli import _fit_exponent, bench_rows
from lpsketch.countsketch import CountSketch
from lpsketch.dupfinder import find_duplicate_full, find_duplicate_short
from lpsketch.l0sampler import L0Sampler
from lpsketch.lpsampler import LpSampler
from lpsketch.normest import NormEstimator
from lpsketch.oracle import err2m, exact_lp_distribution, lp_norm, tv_distance
from lpsketch.results import Verdict
from lpsketch.sparserecovery import SparseRecovery
from lpsketch.universal import ur_one_round, ur_symmetrize

pytestmark = pytest.mark.acceptance

EPS, DELTA = 0.25, 0.1
ROUNDS_PER_BATCH = 5000


def report(k, ok, text):
    ACCEPTANCE_LINES.append(f"CRITERION {k:>2} {'PASS' if ok else 'FAIL'}  {text}")
    assert ok, text


def collect_rounds(x, p, target, seed0=0):
    """Evaluate independent sampler rounds on ``x`` until ``target`` of them
    accept; returns the concatenated per-round results."""
    parts = []
    accepted = 0
    seed = seed0
    while accepted < target:
        s = LpSampler(p=p, eps=EPS, delta=DELTA, n=x.size, seed=seed, n_rounds=ROUNDS_PER_BATCH)
        res = s.fit(as_updates(x)).round_results()
        parts.append(res)
        accepted += int(res["accepted"].sum())
        seed += 1
    out = {k: np.concatenate([r[k] for r in parts]) for k in parts[0]}
    # trim to exactly ``target`` accepted rounds
    last = int(np.flatnonzero(out["accepted"])[target - 1]) + 1
    return {k: v[:last] for k, v in out.items()}


def accepted_distribution(res, n):
    idx = res["index"][res["accepted"]]
    return np.bincount(idx - 1, minlength=n) / idx.size


@pytest.fixture(scope="module")
def skewed():
    x = np.zeros(64, dtype=np.int64)
    x[:5] = [8, 4, 2, 1, 1]
    start = time.perf_counter()
    res = collect_rounds(x, 1.0, 2 * 10**4)
    return x, res, time.perf_counter() - start


@pytest.fixture(scope="module")
def random_vectors():
    out = {}
    for p in (0.5, 1.5):
        x = np.random.default_rng(int(10 * p)).integers(-10, 11, 64)
        out[p] = (x, collect_rounds(x, p, 10**4, seed0=1000))
    return out


def test_criterion_1_distribution(skewed, random_vectors):
    x, res, elapsed = skewed
    freq = accepted_distribution(res, 64)
    tv = tv_distance(exact_lp_distribution(x, 1.0), freq)
    parts = [f"p=1 TV={tv:.4f} (<=0.27) f1={freq[0]:.4f} in [0.45,0.55] {elapsed:.1f}s (<60s)"]
    ok = tv <= 0.27 and 0.45 <= freq[0] <= 0.55 and elapsed < 60
    for p, (xr, rr) in random_vectors.items():
        tv_p = tv_distance(exact_lp_distribution(xr, p), accepted_distribution(rr, 64))
        parts.append(f"p={p} TV={tv_p:.4f} (<={EPS + 0.02:.2f})")
        ok &= tv_p <= EPS + 0.02
    report(1, ok, "; ".join(parts))


def test_criterion_2_estimates(skewed, random_vectors):
    parts, ok = [], True
    runs = [(1.0, skewed[0], skewed[1])] + [(p, xr, rr) for p, (xr, rr) in random_vectors.items()]
    for p, x, res in runs:
        acc = res["accepted"]
        truth = x[res["index"][acc] - 1].astype(np.float64)
        rel = np.abs(res["estimate"][acc] - truth) / np.abs(truth)
        rate = float(np.mean(rel <= EPS))
        parts.append(f"p={p} within-eps={rate:.4f} of {acc.sum()}")
        ok &= rate >= 0.99 and acc.sum() >= 10**4
    report(2, ok, "; ".join(parts) + " (>=0.99)")


def test_criterion_3_rates(skewed, random_vectors):
    parts, ok = [], True
    runs = [(1.0, skewed[1])] + [(p, rr) for p, (_, rr) in random_vectors.items()]
    for p, res in runs:
        rate = float(res["accepted"].mean())
        bound = EPS / 2**p - 0.02
        parts.append(f"p={p} round-accept={rate:.4f} (>={bound:.4f})")
        ok &= rate >= bound
    x = skewed[0]
    trials = 1000
    fails = sum(
        not LpSampler(p=1.0, eps=EPS, delta=DELTA, n=64, seed=10**6 + t).fit(as_updates(x)).sample().accepted
        for t in range(trials)
    )
    parts.append(f"wrapper FAIL={fails / trials:.4f} over {trials} (<={DELTA + 0.02:.2f})")
    ok &= fails / trials <= DELTA + 0.02
    report(3, ok, "; ".join(parts))


def test_criterion_4_countsketch():
    rng = np.random.default_rng(4)
    bad = bad_trials = 0
    trials, n, m = 1000, 256, 8
    for t in range(trials):
        x = rng.integers(-10, 11, n)
        cs = CountSketch(m=m, n=n, seed=t).fit(as_updates(x))
        count = int(np.count_nonzero(np.abs(cs.estimate_all() - x) > err2m(x, m) / math.sqrt(m)))
        bad += count
        bad_trials += count > 0
    rate = bad / (trials * n)
    report(
        4, rate <= 0.01,
        f"violation rate={rate:.5f} over {trials}x{n} pairs (<=0.01); trials with any violation={bad_trials}",
    )


def test_criterion_5_norm_sandwich():
    rng = np.random.default_rng(5)
    vectors = [rng.integers(-10, 11, 256) for _ in range(1000)]
    parts, ok = [], True
    for p in (0.5, 1.0, 1.5, 2.0):
        hits = 0
        for t, x in enumerate(vectors):
            r = NormEstimator(p=p, n=256, seed=t).fit(as_updates(x)).estimate()
            norm = lp_norm(x, p)
            hits += norm <= r <= 2 * norm
        parts.append(f"p={p}: {hits / 1000:.3f}")
        ok &= hits / 1000 >= 0.95
    report(5, ok, "sandwich rate " + ", ".join(parts) + " (>=0.95)")


def test_criterion_6_sparse_recovery():
    rng = np.random.default_rng(6)
    trials, n, s = 10**4, 4096, 10
    exact = wrong = 0
    for t in range(trials):
        x = random_sparse(rng, n, s)
        out = SparseRecovery(s=s, n=n, seed=t).fit(as_updates(x)).recover()
        if out is Verdict.DENSE:
            continue
        truth = {int(i) + 1: int(x[i]) for i in np.flatnonzero(x)}
        exact += out == truth
        wrong += out != truth
    ones = np.ones(n, dtype=np.int64)
    dense = sum(
        SparseRecovery(s=s, n=n, seed=t).fit(as_updates(ones)).recover() is Verdict.DENSE
        for t in range(1000)
    )
    ok = exact / trials >= 0.999 and wrong == 0 and dense / 1000 >= 0.99
    report(6, ok, f"exact={exact / trials:.4f} (>=0.999) wrong={wrong} all-ones DENSE={dense / 1000:.3f} (>=0.99)")


def test_criterion_7_l0_uniformity():
    rng = np.random.default_rng(7)
    n = 1000
    support = np.sort(rng.choice(n, size=10, replace=False) + 1)
    values = rng.integers(1, 20, size=10) * rng.choice([-1, 1], size=10)
    parts, ok = [], True
    for delta, trials in ((0.1, 10**4), (0.5, 1000)):
        counts = dict.fromkeys(support.tolist(), 0)
        fails = outside = 0
        for t in range(trials):
            res = L0Sampler(n=n, delta=delta, seed=t).fit((support, values)).sample()
            if not res.accepted:
                fails += 1
            elif res.index in counts:
                counts[res.index] += 1
            else:
                outside += 1
        part = f"delta={delta}: FAIL={fails / trials:.4f} outside={outside}"
        ok &= fails / trials <= delta + 0.02 and outside == 0
        if delta == 0.1:
            freq = np.array(list(counts.values())) / trials
            part += f" freq in [{freq.min():.4f}, {freq.max():.4f}] (0.1+-0.02)"
            ok &= bool(np.all(np.abs(freq - 0.1) <= 0.02))
        parts.append(part)
    report(7, ok, "; ".join(parts))


def test_criterion_8_duplicates():
    rng = np.random.default_rng(8)
    n, trials = 1023, 1000
    wrong = fails = 0
    for t in range(trials):
        a = rng.integers(1, n + 1, size=n + 1)
        res = find_duplicate_full(a, n, delta=DELTA, seed=t)
        if res.kind is Verdict.FAIL:
            fails += 1
        elif np.count_nonzero(a == res.index) < 2:
            wrong += 1
    recovered = no_dup = 0
    for t in range(200):
        a = rng.choice(n, size=n - 10, replace=False) + 1
        res = find_duplicate_short(a, n, 10, delta=DELTA, seed=t)
        if res.info["path"] == "recovery":
            recovered += 1
            no_dup += res.kind is Verdict.NO_DUPLICATE
    ok = wrong / trials <= 0.01 and fails / trials <= 0.10 and recovered > 0 and no_dup == recovered
    report(
        8, ok,
        f"full: non-duplicate={wrong / trials:.4f} (<=0.01) FAIL={fails / trials:.4f} (<=0.10); "
        f"short duplicate-free: NO-DUPLICATE in {no_dup}/{recovered} recovery successes",
    )


def test_criterion_9_space_scaling():
    ns = [2**k for k in range(8, 15)]
    rows = bench_rows(ns, 1.0, EPS, DELTA, 0)
    bits = _fit_exponent(ns, [r["space_bits"] for r in rows])
    counters = _fit_exponent(ns, [r["counters_used"] for r in rows])
    ur = _fit_exponent(ns, [r["ur_transcript_bytes"] for r in rows])
    ok = abs(bits - 2.0) <= 0.3 and abs(ur - 2.0) <= 0.3
    report(
        9, ok,
        f"log-exponent: sampler bits={bits:.3f}, one-round UR bytes={ur:.3f} (2+-0.3); "
        f"sampler counters={counters:.3f}",
    )


def test_criterion_10_universal_relation():
    rng = np.random.default_rng(10)
    n, trials = 4096, 1000
    ok_runs = 0
    for t in range(trials):
        x = rng.integers(0, 2, n)
        y = x.copy()
        d = int(np.exp(rng.uniform(0, math.log(n))))
        y[rng.choice(n, size=d, replace=False)] ^= 1
        res = ur_one_round(x, y, delta=DELTA, seed=t)
        ok_runs += res.verdict is Verdict.ACCEPT and x[res.index - 1] != y[res.index - 1]
    wrapped = ur_symmetrize(ur_one_round)
    counts = np.zeros(5)
    sym_trials = 10**4
    for t in range(sym_trials):
        res = wrapped([1, 0, 1, 0], [0, 1, 0, 1], delta=DELTA, seed=t)
        if res.verdict is Verdict.ACCEPT:
            counts[res.index] += 1
    freq = counts[1:] / sym_trials
    ok = ok_runs / trials >= 1 - DELTA and bool(np.all(np.abs(freq - 0.25) <= 0.03))
    report(
        10, ok,
        f"one-round success={ok_runs / trials:.4f} (>={1 - DELTA}); "
        f"symmetrized 1010/0101 freq={np.round(freq, 4).tolist()} (0.25+-0.03)",
    )
