"""Zero relative error L_0 sampling.

Level 0 runs exact sparse recovery on all of ``x``; level ``k >= 1`` runs it
on ``x`` restricted to a pseudo-random subset ``I_k`` that contains each
index independently with probability ``2**k / n``.  Scanning the levels, the
first one whose recovery returns a nonzero vector yields a uniformly random
coordinate of that vector.  Because the subsets treat all indices alike,
every support element is returned with exactly the same probability.

With ``s = ceil(4 log2(1/delta))``, some level keeps between 1 and ``s``
support elements with probability at least ``1 - delta``.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _blob
from ._validation import aggregate_updates, check_updates, derive_seed, resolve_seed
from .hashing import MERSENNE_61, mix64
from .results import SampleResult, Verdict
from .sparserecovery import RecoveryBank

__all__ = ["L0Sampler", "level_count", "sparsity_budget"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ORDERS = ("increasing", "decreasing")


def sparsity_budget(delta):
    return math.ceil(4 * math.log2(1.0 / delta))


def level_count(n):
    return int(math.floor(math.log2(n))) + 1


class L0Sampler(BaseEstimator):
    """Uniform sample from the support of a turnstile vector.

    Parameters
    ----------
    n : int
        Dimension; indices are ``1..n``.
    delta : float, default=0.1
        Failure probability bound.
    seed : int or None
    level_order : {"increasing", "decreasing"}
        Scan the full set first and then ever larger subsets
        (``"increasing"``), or the full set first and then ever smaller ones.

    Examples
    --------
    >>> L0Sampler(n=100, seed=0).fit([(42, -3)]).sample().index
    42
    """

    def __init__(self, n=1024, delta=0.1, seed=None, level_order="increasing"):
        self.n = n
        self.delta = delta
        self.seed = seed
        self.level_order = level_order

    def _init_state(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.level_order not in _ORDERS:
            raise ValueError(f"level_order must be one of {_ORDERS}")
        self.seed_ = resolve_seed(self.seed)
        self.s_ = sparsity_budget(self.delta)
        self.n_levels_ = level_count(self.n)
        self.bank_ = RecoveryBank(self.n, self.s_, derive_seed(self.seed_, 20), shape=(self.n_levels_,))
        rng = np.random.default_rng(derive_seed(self.seed_, 21))
        self.level_keys_ = rng.integers(0, 2**64, size=self.n_levels_, dtype=np.uint64, endpoint=False)
        limits = [min((1 << k << 64) // self.n, 2**64 - 1) for k in range(self.n_levels_)]
        limits[0] = 2**64 - 1
        self.level_limits_ = np.array(limits, dtype=np.uint64)

    # -- subsets ---------------------------------------------------------------

    def membership(self, idx):
        """Boolean ``(K, u)`` array: ``idx[j]`` belongs to ``I_k``."""
        check_is_fitted(self, "bank_")
        h = mix64(np.asarray(idx, dtype=np.uint64) * _GOLDEN)
        z = mix64(self.level_keys_[:, None] ^ h[None, :])
        member = z < self.level_limits_[:, None]
        member[0] = True
        return member

    # -- stream processing -----------------------------------------------------

    def fit(self, X, y=None):
        self._init_state()
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "bank_"):
            self._init_state()
        idx, delta = aggregate_updates(*check_updates(X, self.n))
        if idx.size:
            self.bank_.update(idx, delta, mask=self.membership(idx))
        return self

    def update(self, i, delta):
        return self.partial_fit([(i, delta)])

    # -- sampling --------------------------------------------------------------

    def scan_order(self):
        rest = list(range(1, self.n_levels_))
        return [0] + (rest if self.level_order == "increasing" else rest[::-1])

    def sample(self):
        """A uniform support element with its exact value, ``ZERO`` or ``FAIL``.

        ``info`` lists the outcome of each scanned level (``"zero"``,
        ``"dense"`` or the number of recovered coordinates).
        """
        check_is_fitted(self, "bank_")
        outcomes = {}
        for k in self.scan_order():
            rec = self.bank_.recover((k,))
            if rec is Verdict.DENSE:
                outcomes[k] = "dense"
                continue
            if not rec:
                if k == 0:
                    return SampleResult(Verdict.ZERO, info={"levels": {0: "zero"}})
                outcomes[k] = "zero"
                continue
            outcomes[k] = len(rec)
            return self._choose(rec, k, outcomes)
        return SampleResult(Verdict.FAIL, info={"levels": outcomes})

    def _choose(self, recovered, level, outcomes):
        keys = sorted(recovered)
        rng = np.random.default_rng(derive_seed(self.seed_, 22))
        i = keys[int(rng.integers(len(keys)))]
        return SampleResult(
            Verdict.ACCEPT, index=int(i), estimate=float(recovered[i]),
            info={"level": level, "levels": outcomes},
        )

    def sample_level(self, k):
        """Sample using only level ``k`` (``FAIL`` unless it recovers a nonzero vector)."""
        check_is_fitted(self, "bank_")
        rec = self.bank_.recover((k,))
        if rec is Verdict.DENSE or not rec:
            return SampleResult(Verdict.FAIL, info={"level": k})
        return self._choose(rec, k, {k: len(rec)})

    def diagnose(self, x):
        """Split a failure into its two sources given the true dense ``x``.

        Returns ``{"support_per_level": [...], "subset_failure": bool}``;
        ``subset_failure`` means no level kept between 1 and ``s`` support
        elements, so a failure was not caused by sparse recovery.
        """
        check_is_fitted(self, "bank_")
        support = np.flatnonzero(np.asarray(x)) + 1
        sizes = self.membership(support).sum(axis=1) if support.size else np.zeros(self.n_levels_, int)
        viable = (sizes >= 1) & (sizes <= self.s_)
        return {"support_per_level": sizes.tolist(), "subset_failure": not bool(viable.any())}

    # -- protocol helpers ------------------------------------------------------

    def level_digests(self):
        """Per-level ``sum_i x_i rho_k**i`` over ``I_k`` (mod 2**61 - 1).

        Every index lands in exactly one cell of a repetition, so the
        fingerprints of repetition 0 add up to the fingerprint of the level.
        """
        check_is_fitted(self, "bank_")
        q = np.uint64(MERSENNE_61)
        acc = np.zeros(self.n_levels_, dtype=np.uint64)
        for col in self.bank_.fingerprints[:, 0, :].T:
            acc = (acc + col) % q
        return acc

    @property
    def counters_used(self):
        check_is_fitted(self, "bank_")
        return 3 * self.bank_.counts.size

    # -- serialisation ---------------------------------------------------------

    def _header(self):
        return [self.n, self.delta, _ORDERS.index(self.level_order), *_blob.split_seed(self.seed_)]

    @classmethod
    def _from_header(cls, f):
        out = cls(n=int(f[0]), delta=f[1], level_order=_ORDERS[int(f[2])], seed=_blob.join_seed(f[3], f[4]))
        out._init_state()
        return out

    def to_bytes(self):
        check_is_fitted(self, "bank_")
        return _blob.pack(_blob.KIND_L0, self._header(), list(self.bank_.state_arrays()))

    @classmethod
    def from_bytes(cls, blob):
        f, arrays = _blob.unpack(blob, _blob.KIND_L0)
        if len(f) != 5 or len(arrays) != 3:
            raise ValueError("malformed L0 sampler blob")
        out = cls._from_header(f)
        out.bank_.load_state(*arrays)
        return out

    def level_to_bytes(self, k):
        """Serialised state of level ``k`` alone."""
        check_is_fitted(self, "bank_")
        arrays = [a[k] for a in self.bank_.state_arrays()]
        return _blob.pack(_blob.KIND_L0_LEVEL, self._header() + [k], arrays)

    def add_level(self, blob):
        """Add a level state from :meth:`level_to_bytes` (of the same
        sampler parameters) into this sampler; returns the level number."""
        check_is_fitted(self, "bank_")
        f, arrays = _blob.unpack(blob, _blob.KIND_L0_LEVEL)
        if len(f) != 6 or len(arrays) != 3:
            raise ValueError("malformed level blob")
        if f[:5] != [float(v) for v in self._header()]:
            raise ValueError("level blob comes from a sampler with different parameters")
        k = int(f[5])
        if not 0 <= k < self.n_levels_ or any(a.shape != c[k].shape for a, c in zip(arrays, self.bank_.state_arrays())):
            raise ValueError("level blob does not fit this sampler")
        bank = self.bank_
        bank.counts[k] += arrays[0]
        bank.weighted[k] += arrays[1]
        bank.fingerprints[k] = (bank.fingerprints[k] + arrays[2]) % np.uint64(MERSENNE_61)
        return k
