"""Brute-force ground truth: the dense vector behind a stream and exact
distributions / error terms computed from it."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ._validation import check_updates
from .results import Verdict

__all__ = [
    "DenseReference",
    "exact_lp_distribution",
    "err2m",
    "tv_distance",
    "empirical_distribution",
    "chi_square_pvalue",
    "lp_norm",
]


class DenseReference:
    """The exact vector ``x`` defined by an update stream (1-based indices)."""

    def __init__(self, n):
        self.n = int(n)
        self.x = np.zeros(self.n, dtype=np.int64)

    def update(self, i, delta):
        if not 1 <= i <= self.n:
            raise IndexError(f"index out of range [1, {self.n}]")
        self.x[i - 1] += int(delta)
        return self

    def replay(self, X):
        idx, delta = check_updates(X, self.n)
        np.add.at(self.x, idx - 1, delta)
        return self

    @classmethod
    def from_updates(cls, X, n):
        return cls(n).replay(X)

    def __getitem__(self, i):
        return int(self.x[i - 1])

    def support(self):
        return np.flatnonzero(self.x) + 1

    def norm(self, p):
        return lp_norm(self.x, p)


def lp_norm(x, p):
    x = np.abs(np.asarray(x, dtype=np.float64))
    if p == 0:
        return float(np.count_nonzero(x))
    return float(np.sum(x**p) ** (1.0 / p))


def exact_lp_distribution(x, p):
    """Probability of each index under the L_p distribution of ``x``.

    For ``p == 0`` this is uniform on the support.  Returns
    :data:`Verdict.ZERO` for the zero vector.
    """
    a = np.abs(np.asarray(x, dtype=np.float64))
    if not a.any():
        return Verdict.ZERO
    if p == 0:
        w = (a != 0).astype(np.float64)
    else:
        # scale first so that large entries do not overflow a**p
        w = (a / a.max()) ** p
    return w / w.sum()


def err2m(x, m):
    """L2 distance from ``x`` to its best m-sparse approximation."""
    a = np.sort(np.abs(np.asarray(x, dtype=np.float64)))
    if m < 0:
        raise ValueError("m must be non-negative")
    tail = a[: max(a.size - m, 0)]
    return float(np.sqrt(np.sum(tail**2)))


def tv_distance(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same length")
    for d in (p, q):
        if abs(d.sum() - 1.0) > 1e-9:
            raise ValueError("distribution does not sum to 1")
    return 0.5 * float(np.abs(p - q).sum())


def empirical_distribution(samples, n):
    """Frequencies of 1-based ``samples`` over ``[n]``."""
    samples = np.asarray(samples, dtype=np.int64)
    counts = np.bincount(samples - 1, minlength=n).astype(np.float64)
    if counts.sum() == 0:
        raise ValueError("no samples")
    return counts / counts.sum()


def chi_square_pvalue(counts, probs=None):
    """Pearson goodness-of-fit p-value of ``counts`` against ``probs``
    (uniform if omitted); cells with zero expected mass are dropped."""
    counts = np.asarray(counts, dtype=np.float64)
    if probs is None:
        probs = np.full(counts.shape, 1.0 / counts.size)
    probs = np.asarray(probs, dtype=np.float64)
    keep = probs > 0
    if np.any(counts[~keep] > 0):
        return 0.0
    expected = probs[keep] * counts.sum()
    return float(stats.chisquare(counts[keep], expected).pvalue)
