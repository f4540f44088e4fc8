"""Seeded hash families over prime fields.

Three kinds of randomness are used throughout the package:

* :class:`KWiseHash` -- degree ``k - 1`` polynomials over a Mersenne prime
  field, giving exactly k-wise independent values.  Coefficient arrays may
  carry leading batch dimensions so that many independent functions (one per
  sketch row, per repetition, ...) are evaluated in one vectorised call.
* :class:`ScalingFactors` -- k-wise independent fixed-point uniforms
  ``t_i in (0, 1]`` with denominator ``n ** (c + 1)`` and a clamp at
  ``n ** -c``.
* :func:`mix64` -- a 64-bit mixing function used as a seeded pseudo-random
  function where full independence is wanted but no algebraic structure is
  needed (p-stable coefficients, subset membership).

All arithmetic is done on ``uint64`` arrays; products are reduced without
overflow by splitting operands into 32-bit halves.
"""

from __future__ import annotations

import numpy as np

from ._validation import as_index_array, resolve_seed

__all__ = [
    "MERSENNE_31",
    "MERSENNE_61",
    "KWiseHash",
    "ScalingFactors",
    "mix64",
    "mulmod",
    "powmod",
    "poly_eval",
    "uniform_from_bits",
]

MERSENNE_31 = (1 << 31) - 1
MERSENNE_61 = (1 << 61) - 1

_U = np.uint64
_M31 = _U(MERSENNE_31)
_M61 = _U(MERSENNE_61)
_MASK32 = _U(0xFFFFFFFF)
_MASK29 = _U((1 << 29) - 1)
_GOLDEN = _U(0x9E3779B97F4A7C15)
_MIX1 = _U(0xBF58476D1CE4E5B9)
_MIX2 = _U(0x94D049BB133111EB)


def _reduce31(x):
    x = (x & _M31) + (x >> _U(31))
    x = (x & _M31) + (x >> _U(31))
    return x - (x >= _M31).astype(np.uint64) * _M31


def _reduce61(x):
    x = (x & _M61) + (x >> _U(61))
    return x - (x >= _M61).astype(np.uint64) * _M61


def _mulmod61(a, b):
    a_hi, a_lo = a >> _U(32), a & _MASK32
    b_hi, b_lo = b >> _U(32), b & _MASK32
    # a*b = hh*2^64 + mid*2^32 + ll, and 2^64 = 8, 2^61 = 1 (mod 2^61 - 1)
    hh = a_hi * b_hi
    mid = a_hi * b_lo + a_lo * b_hi
    ll = a_lo * b_lo
    total = (
        (hh << _U(3))
        + (mid >> _U(29))
        + ((mid & _MASK29) << _U(32))
        + (ll & _M61)
        + (ll >> _U(61))
    )
    return _reduce61(total)


def mulmod(a, b, prime: int = MERSENNE_61):
    """Elementwise ``a * b mod prime`` for reduced ``uint64`` operands."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if prime == MERSENNE_61:
        return _mulmod61(a, b)
    if prime == MERSENNE_31:
        return _reduce31(a * b)
    raise ValueError(f"unsupported prime {prime}")


def powmod(base, exponent, prime: int = MERSENNE_61):
    """Elementwise ``base ** exponent mod prime`` by square-and-multiply."""
    base = np.asarray(base, dtype=np.uint64)
    e = np.asarray(exponent, dtype=np.uint64)
    base, e = np.broadcast_arrays(base, e)
    result = np.ones(base.shape, dtype=np.uint64)
    sq = base.copy()
    e = e.copy()
    one = _U(1)
    while e.size and e.max() > 0:
        odd = (e & one).astype(bool)
        if odd.any():
            result = np.where(odd, mulmod(result, sq, prime), result)
        e >>= one
        if e.max() > 0:
            sq = mulmod(sq, sq, prime)
    return result


def poly_eval(coefficients, x, prime: int = MERSENNE_61):
    """Evaluate polynomials at ``x`` by Horner's rule.

    ``coefficients`` has shape ``(*batch, k)`` with the leading coefficient
    first; ``x`` must broadcast against ``(*batch, u)``.  Returns an array of
    shape ``(*batch, u)`` with values in ``[0, prime)``.
    """
    c = np.asarray(coefficients, dtype=np.uint64)
    x = np.asarray(x, dtype=np.uint64) % _U(prime)
    acc = np.broadcast_to(c[..., 0, None], np.broadcast_shapes(c.shape[:-1] + (1,), x.shape))
    acc = acc.copy()
    for j in range(1, c.shape[-1]):
        acc = mulmod(acc, x, prime) + c[..., j, None]
        acc -= (acc >= _U(prime)).astype(np.uint64) * _U(prime)
    return acc


def mix64(x):
    """SplitMix64 finaliser; a bijective, well-avalanched map on ``uint64``."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    t = z >> _U(30)
    z ^= t
    z *= _MIX1
    np.right_shift(z, _U(27), out=t)
    z ^= t
    z *= _MIX2
    np.right_shift(z, _U(31), out=t)
    z ^= t
    return z


def uniform_from_bits(bits):
    """Map 64-bit words to floats strictly inside ``(0, 1)``."""
    # 52 bits keep the largest value 1 - 2**-53 exactly representable
    u = (np.asarray(bits, dtype=np.uint64) >> _U(12)).astype(np.float64)
    u += 0.5
    u *= 2.0**-52
    return u


class KWiseHash:
    """A k-wise independent hash ``[n] -> {0, ..., R-1}`` (or a batch of them).

    Values are ``poly(i) mod R`` for a uniformly random polynomial of degree
    ``k - 1`` over ``GF(prime)``; the bias of the final reduction is at most
    ``R / prime``.

    Parameters
    ----------
    k : int
        Independence degree, at least 2.
    domain_size : int
        Valid inputs are ``1..domain_size``.
    range_size : int
        Number of output values ``R``.
    seed : int or None
        Seed for the coefficients.
    shape : tuple of int
        Batch shape; ``shape=(l,)`` gives ``l`` independent functions.
    prime : int
        Field modulus, :data:`MERSENNE_61` (default) or :data:`MERSENNE_31`.
    """

    def __init__(self, k, domain_size, range_size, seed=None, *, shape=(), prime=MERSENNE_61):
        if k < 2:
            raise ValueError("k must be at least 2")
        if domain_size < 1 or domain_size >= prime:
            raise ValueError("domain_size must lie in [1, prime)")
        if range_size < 1 or range_size > prime:
            raise ValueError("range_size must lie in [1, prime]")
        self.k = int(k)
        self.domain_size = int(domain_size)
        self.range_size = int(range_size)
        self.prime = int(prime)
        self.seed = resolve_seed(seed)
        self.shape = tuple(shape)
        rng = np.random.default_rng(self.seed)
        self.coefficients = rng.integers(
            0, self.prime, size=self.shape + (self.k,), dtype=np.uint64
        )

    def field_values(self, i):
        """Raw field values ``poly(i)`` in ``[0, prime)``, shape ``(*shape, u)``."""
        idx = as_index_array(i, self.domain_size)
        return poly_eval(self.coefficients, idx.astype(np.uint64), self.prime)

    def __call__(self, i):
        return self.field_values(i) % _U(self.range_size)

    def signs(self, i):
        """Map the hash to ``{-1, +1}`` by output parity (needs ``range_size == 2``)."""
        if self.range_size != 2:
            raise ValueError("signs() needs a family with range_size=2")
        return 1 - 2 * (self.field_values(i) & _U(1)).astype(np.int64)


class ScalingFactors:
    """k-wise independent fixed-point uniforms ``t_i in (0, 1]``.

    ``t_i = N_i / D`` with ``D = n ** (c + 1)`` and ``N_i`` uniform on
    ``1..D``.  Draws below ``n ** -c`` (``N_i < n``) are raised to exactly
    ``n ** -c`` and flagged; the caller treats a flagged round as failed.
    """

    def __init__(self, n, k, seed=None, *, c=2, shape=()):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = int(n)
        self.k = int(k)
        self.c = int(c)
        self.resolution = self.n ** (self.c + 1)
        if self.resolution >= MERSENNE_61:
            raise ValueError("n ** (c + 1) must stay below 2**61 - 1")
        self.floor = self.resolution // self.n**self.c
        self._hash = KWiseHash(
            max(self.k, 2), self.n, self.resolution, seed, shape=shape, prime=MERSENNE_61
        )
        self.seed = self._hash.seed
        self.shape = self._hash.shape

    @property
    def coefficients(self):
        return self._hash.coefficients

    def numerators(self, i):
        """Unclamped integer numerators in ``1..D``."""
        return self._hash(i) + _U(1)

    def draw(self, i):
        """Return ``(t, clamped)`` for indices ``i``; ``t`` is a float64 array."""
        num = self.numerators(i)
        clamped = num < _U(self.floor)
        num = np.where(clamped, _U(self.floor), num)
        return num.astype(np.float64) / float(self.resolution), clamped
