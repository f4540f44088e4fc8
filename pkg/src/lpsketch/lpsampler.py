"""Approximate L_p sampling (0 < p < 2) by precision sampling.

One round scales every coordinate by a k-wise independent uniform
``t_i in (0, 1]``, ``z_i = x_i / t_i ** (1/p)``, and keeps three linear
sketches: a count-sketch of ``z``, a p-norm sketch of ``x`` and a 2-norm
sketch of ``z``.  At query time the round

1. finds the count-sketch estimates ``z*`` and their best m-sparse part ``zhat``;
2. estimates ``r ~ ||x||_p`` and ``s ~ ||z - zhat||_2`` (the latter by
   subtracting the sketch of ``zhat`` from the sketch of ``z``);
3. takes ``i = argmax |z*_i|`` and fails if ``s > beta sqrt(m) r`` or
   ``|z*_i| < eps ** (-1/p) r``;
4. otherwise outputs ``i`` together with ``z*_i t_i ** (1/p)`` as an
   estimate of ``x_i``.

A coordinate passes the threshold with probability about
``eps |x_i| ** p / r ** p``, which is what makes the output distribution
close to the L_p distribution.  :class:`LpSampler` runs ``v`` independent
rounds over the same stream and reports the first round that does not fail.

All ``v`` rounds live in stacked arrays with a leading round axis so one
update touches every round in a single vectorised step.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _blob
from ._validation import aggregate_updates, ceil_log2, check_updates, derive_seed, resolve_seed
from .countsketch import columns, estimate_all, make_hashes, n_rows, scatter, top_m
from .hashing import ScalingFactors
from .normest import default_rows_per_log, estimate_from_rows, row_keys, sketch_rows
from .results import SampleResult, Verdict

__all__ = ["SamplerConfig", "LpSampler", "first_accept", "counter_bits"]

# per-round failure reasons, reported in SampleResult.info
REASONS = ("ok", "zero", "clamp", "tail", "threshold")

_CHUNK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class SamplerConfig:
    """Derived parameters of the sampler.

    ``k`` is the independence of the scaling factors, ``m`` the count-sketch
    sparsity, ``l`` its row count, ``beta`` the tail tolerance and ``v`` the
    number of rounds.  ``norm_rows_x`` and ``norm_rows_z`` are the row counts
    of the p-norm and 2-norm sketches.
    """

    p: float
    eps: float
    delta: float
    n: int
    k: int
    m: int
    l: int
    beta: float
    v: int
    c: int
    C_m: int
    C_k: int
    C_l: int
    norm_rows_x: int
    norm_rows_z: int

    @classmethod
    def from_params(cls, p, eps, delta, n, *, C_m=40, C_k=4, C_l=4, c=2, norm_rows_per_log=None):
        if not 0 < p < 2:
            raise ValueError("p must lie in (0, 2); p = 2 is not supported")
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if n < 2:
            raise ValueError("n must be at least 2")
        if p == 1:
            k = m = C_k * max(1, math.ceil(math.log2(1.0 / eps)))
        else:
            k = 10 * math.ceil(1.0 / abs(p - 1.0))
            m = C_m * math.ceil(eps ** (-max(0.0, p - 1.0)) - 1e-12)
        logn = max(1, ceil_log2(n))
        per_log_x = default_rows_per_log(p) if norm_rows_per_log is None else norm_rows_per_log
        per_log_z = default_rows_per_log(2.0) if norm_rows_per_log is None else norm_rows_per_log
        return cls(
            p=float(p),
            eps=float(eps),
            delta=float(delta),
            n=int(n),
            k=int(k),
            m=int(m),
            l=n_rows(n, C_l),
            beta=eps ** (1.0 - 1.0 / p),
            v=math.ceil(2.0**p * math.log(1.0 / delta) / eps),
            c=int(c),
            C_m=int(C_m),
            C_k=int(C_k),
            C_l=int(C_l),
            norm_rows_x=per_log_x * logn,
            norm_rows_z=per_log_z * logn,
        )

    @property
    def counters_per_round(self):
        return 6 * self.m * self.l + self.norm_rows_x + self.norm_rows_z


def counter_bits(n, p, c=2, max_magnitude=None):
    """Bits for one discretised counter: ``|z_i| <= M n ** (c/p)`` summed over
    ``n`` coordinates, plus a sign bit."""
    M = n**2 if max_magnitude is None else max_magnitude
    return math.ceil(math.log2(n * M) + (c / p) * math.log2(n)) + 1


def first_accept(accepted):
    """Position of the first true entry along the last axis, ``-1`` if none."""
    accepted = np.asarray(accepted, dtype=bool)
    pos = np.argmax(accepted, axis=-1)
    return np.where(accepted.any(axis=-1), pos, -1)


def _take(hash_obj, sel):
    """Copy of a batched hash restricted to rounds ``sel``."""
    out = copy.copy(hash_obj)
    if isinstance(out, ScalingFactors):
        out._hash = _take(out._hash, sel)
    else:
        out.coefficients = out.coefficients[sel]
    out.shape = out.coefficients.shape[:-1]
    return out


class LpSampler(BaseEstimator):
    """Turnstile L_p sampler with relative error and failure probability
    controlled by ``eps`` and ``delta``.

    Parameters
    ----------
    p : float
        Order in ``(0, 2)``.
    eps : float
        Relative error of the sampling distribution and of the value estimate.
    delta : float
        Target probability that every round fails.
    n : int
        Dimension; indices are ``1..n``.
    seed : int or None
    C_m, C_k, C_l : int
        Constants behind ``m`` (p != 1), ``k = m`` (p = 1) and the
        count-sketch rows per ``log2 n``.
    c : int, default=2
        Scaling factors below ``n ** -c`` are clamped and fail their round.
    norm_rows_per_log : int or None
        Override the rows per ``log2 n`` of both norm sketches.
    n_rounds : int or None
        Override the number of rounds ``v`` (used for Monte Carlo batches).
    max_magnitude : int or None
        Largest accepted ``|delta|`` of one update; defaults to ``n ** 2``.

    Examples
    --------
    >>> s = LpSampler(p=1.0, eps=0.25, delta=0.1, n=64, seed=1).fit([(3, 7)])
    >>> res = s.sample()
    >>> res.index if res.accepted else 3
    3
    """

    def __init__(
        self,
        p=1.0,
        eps=0.25,
        delta=0.1,
        n=1024,
        seed=None,
        C_m=40,
        C_k=4,
        C_l=4,
        c=2,
        norm_rows_per_log=None,
        n_rounds=None,
        max_magnitude=None,
    ):
        self.p = p
        self.eps = eps
        self.delta = delta
        self.n = n
        self.seed = seed
        self.C_m = C_m
        self.C_k = C_k
        self.C_l = C_l
        self.c = c
        self.norm_rows_per_log = norm_rows_per_log
        self.n_rounds = n_rounds
        self.max_magnitude = max_magnitude

    # -- construction ----------------------------------------------------------

    def _init_state(self):
        cfg = SamplerConfig.from_params(
            self.p, self.eps, self.delta, self.n,
            C_m=self.C_m, C_k=self.C_k, C_l=self.C_l, c=self.c,
            norm_rows_per_log=self.norm_rows_per_log,
        )
        if self.n_rounds is not None:
            if self.n_rounds < 1:
                raise ValueError("n_rounds must be positive")
            cfg = SamplerConfig(**{**asdict(cfg), "v": int(self.n_rounds)})
        elif cfg.v >= cfg.n:
            warnings.warn(
                f"v={cfg.v} rounds is not below n={cfg.n}; storing x densely would be cheaper",
                RuntimeWarning,
                stacklevel=3,
            )
        self.config_ = cfg
        self.seed_ = seed = resolve_seed(self.seed)
        V = cfg.v
        self.scaling_ = ScalingFactors(cfg.n, cfg.k, derive_seed(seed, 10), c=cfg.c, shape=(V,))
        self.bucket_hash_, self.sign_hash_ = make_hashes(cfg.n, cfg.m, cfg.l, derive_seed(seed, 11), shape=(V,))
        self.xkeys_ = row_keys(derive_seed(seed, 12), (V, cfg.norm_rows_x))
        self.zkeys_ = row_keys(derive_seed(seed, 13), (V, cfg.norm_rows_z))
        self.counters_ = np.zeros((V, cfg.l, 6 * cfg.m), dtype=np.float64)
        self.xrows_ = np.zeros((V, cfg.norm_rows_x), dtype=np.float64)
        self.zrows_ = np.zeros((V, cfg.norm_rows_z), dtype=np.float64)
        self.clamped_ = np.zeros(V, dtype=bool)

    @property
    def _bound(self):
        return self.n**2 if self.max_magnitude is None else self.max_magnitude

    # -- stream processing -----------------------------------------------------

    def fit(self, X, y=None):
        self._init_state()
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "config_"):
            self._init_state()
        idx, delta = check_updates(X, self.n, max_magnitude=self._bound)
        idx, delta = aggregate_updates(idx, delta)
        cfg = self.config_
        # norm rows chunk themselves inside sketch_rows
        per_index = cfg.v * max(cfg.l, cfg.k)
        step = max(1, _CHUNK_ELEMENTS // per_index)
        for start in range(0, idx.size, step):
            self._apply(idx[start : start + step], delta[start : start + step])
        return self

    def update(self, i, delta):
        return self.partial_fit([(i, delta)])

    def _apply(self, idx, delta):
        p = self.config_.p
        t, clamped = self.scaling_.draw(idx)
        self.clamped_ |= clamped.any(axis=-1)
        zdelta = delta * t ** (-1.0 / p)
        b, g = columns(self.bucket_hash_, self.sign_hash_, idx)
        scatter(self.counters_, b, g * zdelta[:, None, :])
        self.xrows_ += sketch_rows(self.xkeys_, idx, delta.astype(np.float64), p)
        self.zrows_ += sketch_rows(self.zkeys_, idx, zdelta, 2.0)

    # -- recovery --------------------------------------------------------------

    def round_results(self, rounds=None):
        """Evaluate the recovery stage of the selected rounds (all by default).

        Returns a dict of arrays indexed by round: ``accepted``, ``index``
        (1-based argmax of ``|z*|``), ``estimate``, ``r``, ``s``, ``zmax`` and
        ``reason`` (an index into :data:`REASONS`).
        """
        check_is_fitted(self, "config_")
        cfg = self.config_
        sel = np.arange(cfg.v) if rounds is None else np.atleast_1d(np.asarray(rounds, dtype=np.int64))
        bh, sh = _take(self.bucket_hash_, sel), _take(self.sign_hash_, sel)
        counters = self.counters_[sel]
        xrows, zrows = self.xrows_[sel], self.zrows_[sel]

        est = estimate_all(counters, bh, sh, cfg.n)
        pos = top_m(est, cfg.m)
        vals = np.take_along_axis(est, pos, axis=-1)
        argmax = pos[:, 0] + 1
        zmax = vals[:, 0]

        r = estimate_from_rows(xrows, cfg.p)
        tail_rows = zrows - sketch_rows(self.zkeys_[sel], pos + 1, vals, 2.0)
        s = estimate_from_rows(tail_rows, 2.0)

        t, _ = _take(self.scaling_, sel).draw(argmax[:, None])
        estimate = zmax * t[:, 0] ** (1.0 / cfg.p)

        zero = ~(counters.any(axis=(1, 2)) | xrows.any(axis=1) | zrows.any(axis=1))
        clamp = self.clamped_[sel]
        tail = s > cfg.beta * math.sqrt(cfg.m) * r
        threshold = np.abs(zmax) < cfg.eps ** (-1.0 / cfg.p) * r
        reason = np.select([zero, clamp, tail, threshold], [1, 2, 3, 4], default=0)
        return {
            "accepted": reason == 0,
            "index": argmax,
            "estimate": estimate,
            "r": r,
            "s": s,
            "zmax": zmax,
            "reason": reason,
        }

    def sample(self, chunk=8):
        """First non-failing round, or ``FAIL`` if all rounds fail.

        Rounds are evaluated lazily in order, ``chunk`` at a time.  They are
        independent, so stopping at the first acceptance yields exactly the
        result of evaluating every round.
        """
        check_is_fitted(self, "config_")
        V = self.config_.v
        for start in range(0, V, chunk):
            res = self.round_results(np.arange(start, min(V, start + chunk)))
            j = int(first_accept(res["accepted"]))
            if j >= 0:
                return SampleResult(
                    Verdict.ACCEPT,
                    index=int(res["index"][j]),
                    estimate=float(res["estimate"][j]),
                    info={"round": start + j},
                )
        return SampleResult(Verdict.FAIL, info={"rounds": V})

    # -- space accounting ------------------------------------------------------

    @property
    def counters_used(self):
        """``v * (6 m l + norm rows)``: counters held by all rounds."""
        check_is_fitted(self, "config_")
        return self.config_.v * self.config_.counters_per_round

    @property
    def space_bits(self):
        """Counters times the bits of one discretised counter."""
        cfg = self.config_
        return self.counters_used * counter_bits(cfg.n, cfg.p, cfg.c, self._bound)

    # -- serialisation ---------------------------------------------------------

    def to_bytes(self):
        check_is_fitted(self, "config_")
        cfg = self.config_
        fields = [cfg.p, cfg.eps, cfg.delta, cfg.n, cfg.C_m, cfg.C_k, cfg.C_l, cfg.c, cfg.v,
                  -1 if self.norm_rows_per_log is None else self.norm_rows_per_log,
                  -1 if self.max_magnitude is None else self.max_magnitude,
                  *_blob.split_seed(self.seed_)]
        arrays = [self.counters_, self.xrows_, self.zrows_, self.clamped_]
        return _blob.pack(_blob.KIND_LP, fields, arrays)

    @classmethod
    def from_bytes(cls, blob):
        f, arrays = _blob.unpack(blob, _blob.KIND_LP)
        if len(f) != 13 or len(arrays) != 4:
            raise ValueError("malformed sampler blob")
        out = cls(
            p=f[0], eps=f[1], delta=f[2], n=int(f[3]), C_m=int(f[4]), C_k=int(f[5]),
            C_l=int(f[6]), c=int(f[7]), n_rounds=int(f[8]),
            norm_rows_per_log=None if f[9] < 0 else int(f[9]),
            max_magnitude=None if f[10] < 0 else int(f[10]),
            seed=_blob.join_seed(f[11], f[12]),
        )
        out._init_state()
        for name, arr in zip(("counters_", "xrows_", "zrows_", "clamped_"), arrays):
            current = getattr(out, name)
            if arr.shape != current.shape:
                raise ValueError(f"{name}: shape {arr.shape} does not match {current.shape}")
            setattr(out, name, arr.astype(current.dtype))
        return out

    def merge(self, other):
        """Sampler state of the concatenated stream (same parameters and seed)."""
        check_is_fitted(self, "config_")
        check_is_fitted(other, "config_")
        if self.get_params() != other.get_params() or self.seed_ != other.seed_:
            raise ValueError("incompatible samplers")
        out = LpSampler.from_bytes(self.to_bytes())
        out.counters_ += other.counters_
        out.xrows_ += other.xrows_
        out.zrows_ += other.zrows_
        out.clamped_ |= other.clamped_
        return out

    __add__ = merge
