"""Input checking shared by the estimators (in the spirit of sklearn's
``check_array``)."""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "as_index_array",
    "check_updates",
    "ceil_log2",
    "resolve_seed",
    "derive_seed",
    "aggregate_updates",
]

_SEED_MASK = (1 << 63) - 1


def resolve_seed(seed):
    """Return a concrete non-negative integer seed (fresh entropy for ``None``)."""
    if seed is None:
        return int(np.random.SeedSequence().entropy) & _SEED_MASK
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an int or None, got {type(seed).__name__}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return int(seed)


def derive_seed(seed, *keys):
    """Deterministically derive an independent child seed from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(2, dtype=np.uint64)[0]) & _SEED_MASK


def ceil_log2(n):
    return max(0, math.ceil(math.log2(n))) if n > 1 else 0


def as_index_array(i, n):
    """Validate 1-based indices against ``[1, n]``; returns an int64 array."""
    idx = np.asarray(i)
    if idx.dtype.kind not in "iu":
        if idx.size and not np.all(np.equal(np.mod(idx, 1), 0)):
            raise ValueError("indices must be integers")
        idx = idx.astype(np.int64)
    idx = idx.astype(np.int64, copy=False)
    if idx.size and (idx.min() < 1 or idx.max() > n):
        raise IndexError(f"index out of range [1, {n}]")
    return idx


def check_updates(X, n, *, max_magnitude=None):
    """Validate a batch of turnstile updates.

    ``X`` is an ``(k, 2)`` array-like of ``(index, delta)`` rows, a pair of
    equal-length sequences ``(indices, deltas)``, or empty.  Indices are
    1-based.  Returns ``(indices, deltas)`` as int64 arrays.
    """
    if isinstance(X, tuple) and len(X) == 2 and np.ndim(X[0]) == 1:
        idx = np.asarray(X[0])
        delta = np.asarray(X[1])
        if idx.shape != delta.shape:
            raise ValueError("indices and deltas must have equal length")
    else:
        arr = np.asarray(X)
        if arr.size == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        if arr.ndim == 1 and arr.shape[0] == 2:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"expected an array of shape (k, 2), got {arr.shape}")
        idx, delta = arr[:, 0], arr[:, 1]
    if delta.size and delta.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(delta, 1), 0)):
            raise ValueError("deltas must be integers")
    idx = as_index_array(idx, n)
    delta = np.asarray(delta).astype(np.int64)
    if max_magnitude is not None and delta.size and np.abs(delta).max() > max_magnitude:
        raise OverflowError(f"update magnitude exceeds bound M={max_magnitude}")
    return idx, delta


def aggregate_updates(idx, delta):
    """Sum deltas of repeated indices; drops indices whose total is zero."""
    if idx.size == 0:
        return idx, delta
    uniq, inv = np.unique(idx, return_inverse=True)
    total = np.zeros(uniq.shape, dtype=np.int64)
    np.add.at(total, inv, delta)
    keep = total != 0
    return uniq[keep], total[keep]
