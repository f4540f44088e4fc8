"""Count-sketch: signed bucket sums with row-wise median point estimates.

Row ``j`` keeps ``y[j, b] = sum_{i : h_j(i) = b} g_j(i) * x_i`` over ``6m``
buckets, with pairwise independent ``h_j`` and ``g_j``.  The estimate of
``x_i`` is the median over rows of ``g_j(i) * y[j, h_j(i)]``.

The module-level functions work on counter arrays with arbitrary leading
batch dimensions; :class:`CountSketch` wraps a single sketch in the
estimator API and :mod:`lpsketch.lpsampler` drives stacked sketches directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import ceil_log2, check_updates, derive_seed, resolve_seed
from .hashing import MERSENNE_31, KWiseHash

__all__ = [
    "CountSketch",
    "TopM",
    "n_rows",
    "make_hashes",
    "columns",
    "scatter",
    "point_estimates",
    "estimate_all",
    "top_m",
]

# cap on elements materialised per vectorised step
_CHUNK_ELEMENTS = 1 << 22


def n_rows(n, rows_per_log):
    return max(1, int(rows_per_log) * ceil_log2(n))


def make_hashes(n, m, rows, seed, shape=()):
    """Bucket hashes ``[n] -> [6m]`` and sign hashes for ``rows`` rows."""
    # pairwise families over 2^31 - 1: exact independence, cheap reduction
    shape = tuple(shape) + (rows,)
    buckets = KWiseHash(2, n, 6 * m, derive_seed(seed, 1), shape=shape, prime=MERSENNE_31)
    signs = KWiseHash(2, n, 2, derive_seed(seed, 2), shape=shape, prime=MERSENNE_31)
    return buckets, signs


def columns(bucket_hash, sign_hash, idx):
    """Buckets and signs of indices ``idx``; both shaped ``(*batch, rows, u)``."""
    return bucket_hash(idx).astype(np.int64), sign_hash.signs(idx)


def scatter(counters, buckets, values):
    """Add ``values`` (broadcast to ``buckets.shape``) into ``counters`` in place."""
    width = counters.shape[-1]
    lead = counters.shape[:-1]
    values = np.broadcast_to(values, buckets.shape)
    offsets = np.arange(math.prod(lead), dtype=np.int64).reshape(lead + (1,)) * width
    flat = (buckets + offsets).ravel()
    np.add.at(counters.reshape(-1), flat, values.ravel().astype(counters.dtype, copy=False))


def point_estimates(counters, buckets, signs):
    """Median-of-rows estimates; ``counters`` is ``(*batch, rows, W)``."""
    vals = np.take_along_axis(counters, buckets, axis=-1) * signs
    return np.median(vals, axis=-2)


def estimate_all(counters, bucket_hash, sign_hash, n):
    """Estimates for every index ``1..n``; shape ``(*batch, n)``."""
    lead = counters.shape[:-2]
    rows = counters.shape[-2]
    step = max(1, _CHUNK_ELEMENTS // max(1, math.prod(lead) * rows))
    out = np.empty(lead + (n,), dtype=np.float64)
    for start in range(0, n, step):
        idx = np.arange(start + 1, min(n, start + step) + 1)
        b, g = columns(bucket_hash, sign_hash, idx)
        out[..., start : start + idx.size] = point_estimates(counters, b, g)
    return out


@dataclass(frozen=True)
class TopM:
    """Best m-sparse approximation of the estimate vector.

    ``indices`` (1-based) are ordered by decreasing ``|value|`` with ties to
    the lowest index; ``argmax``/``max_value`` describe the first entry.
    """

    indices: np.ndarray
    values: np.ndarray
    argmax: int
    max_value: float

    def dense(self, n):
        out = np.zeros(n, dtype=np.float64)
        out[self.indices - 1] = self.values
        return out


def top_m(estimates, m):
    """Order of the ``m`` largest ``|estimates|`` along the last axis.

    Returns 0-based positions, ties broken by the lowest position.
    """
    order = np.argsort(-np.abs(estimates), axis=-1, kind="stable")
    return order[..., : min(m, estimates.shape[-1])]


class CountSketch(BaseEstimator):
    """Count-sketch over turnstile updates to ``x in Z^n``.

    Parameters
    ----------
    m : int
        Sparsity parameter; each row has ``6 m`` buckets.
    n : int
        Dimension; indices are ``1..n``.
    rows_per_log : int, default=4
        Rows ``l = rows_per_log * ceil(log2 n)``.
    dtype : {"int64", "float64"}, default="int64"
        Counter type.  Integer counters are exact and linear bit-for-bit.
    max_magnitude : int or None
        Largest accepted ``|delta|``; defaults to ``n ** 2``.
    seed : int or None
        Seed for the row hash functions.

    Examples
    --------
    >>> cs = CountSketch(m=1, n=16, seed=3).fit([(5, 7)])
    >>> float(cs.estimate(5))
    7.0
    """

    def __init__(self, m=8, n=1024, rows_per_log=4, dtype="int64", max_magnitude=None, seed=None):
        self.m = m
        self.n = n
        self.rows_per_log = rows_per_log
        self.dtype = dtype
        self.max_magnitude = max_magnitude
        self.seed = seed

    # -- state -----------------------------------------------------------------

    def _init_state(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.dtype not in ("int64", "float64"):
            raise ValueError("dtype must be 'int64' or 'float64'")
        self.seed_ = resolve_seed(self.seed)
        self.n_rows_ = n_rows(self.n, self.rows_per_log)
        self.width_ = 6 * self.m
        self.bucket_hash_, self.sign_hash_ = make_hashes(self.n, self.m, self.n_rows_, self.seed_)
        self.counters_ = np.zeros((self.n_rows_, self.width_), dtype=self.dtype)

    @property
    def _bound(self):
        return self.n**2 if self.max_magnitude is None else self.max_magnitude

    def fit(self, X, y=None):
        """Reset and consume the update batch ``X`` of ``(index, delta)`` rows."""
        self._init_state()
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "counters_"):
            self._init_state()
        idx, delta = check_updates(X, self.n, max_magnitude=self._bound)
        if idx.size:
            b, g = columns(self.bucket_hash_, self.sign_hash_, idx)
            scatter(self.counters_, b, g * delta)
        return self

    def update(self, i, delta):
        return self.partial_fit([(i, delta)])

    # -- queries ---------------------------------------------------------------

    def estimate(self, i):
        """Point estimate ``x*_i`` (scalar for scalar ``i``)."""
        check_is_fitted(self, "counters_")
        idx = np.atleast_1d(np.asarray(i))
        b, g = columns(self.bucket_hash_, self.sign_hash_, idx)
        est = point_estimates(self.counters_, b, g)
        return est[0] if np.ndim(i) == 0 else est

    def estimate_all(self):
        check_is_fitted(self, "counters_")
        return estimate_all(self.counters_, self.bucket_hash_, self.sign_hash_, self.n)

    def top_m(self, m=None):
        """The m-sparse vector best approximating the estimates."""
        est = self.estimate_all()
        pos = top_m(est, self.m if m is None else m)
        return TopM(
            indices=pos + 1,
            values=est[pos],
            argmax=int(pos[0]) + 1,
            max_value=float(est[pos[0]]),
        )

    def heavy_hitters(self, phi, p, r):
        """Indices with ``|x*_i| >= 0.75 * phi * r``.

        ``r`` must be a norm estimate with ``||x||_p <= r <= 2 ||x||_p``; the
        sketch needs ``m >= ceil(phi ** -p)``.
        """
        if not 0 < phi < 1:
            raise ValueError("phi must lie in (0, 1)")
        need = math.ceil(phi ** (-p) - 1e-12)
        if self.m < need:
            raise ValueError(f"m={self.m} too small for phi={phi}, p={p}; need m >= {need}")
        if r <= 0:
            return np.zeros(0, dtype=np.int64)
        est = self.estimate_all()
        return np.flatnonzero(np.abs(est) >= 0.75 * phi * r) + 1

    # -- linearity -------------------------------------------------------------

    def _check_compatible(self, other):
        check_is_fitted(self, "counters_")
        check_is_fitted(other, "counters_")
        mine = (self.seed_, self.m, self.n_rows_, self.n)
        theirs = (other.seed_, other.m, other.n_rows_, other.n)
        if mine != theirs:
            raise ValueError(f"incompatible sketches: {mine} vs {theirs}")

    def merge(self, other):
        """A new sketch of ``x_self + x_other``."""
        self._check_compatible(other)
        out = CountSketch(**self.get_params())
        out._init_state()
        out.seed_ = self.seed_
        out.bucket_hash_, out.sign_hash_ = self.bucket_hash_, self.sign_hash_
        out.counters_ = self.counters_ + other.counters_
        return out

    __add__ = merge
