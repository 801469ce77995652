"""Unsigned division and modulus by a fixed divisor via multiply + shift.

Index decode in the lazily-materialized convolution runs div/mod against
the same handful of divisors for every matrix element, so each divisor is
turned once into a (multiplier, shift) pair and evaluated afterwards with
integer multiplies and shifts only. The construction is the unsigned
"magic number" algorithm from Hacker's Delight (2nd ed., chapter 10,
equations 26/27): find the least p >= 32 with

    2**p > nc * (d - 1 - (2**p - 1) % d),   nc = (2**32 // d) * d - 1

and take m = (2**p + d - 1 - (2**p - 1) % d) // d. If m fits in 32 bits
the quotient is mulhi(n, m) >> (p - 32); otherwise m - 2**32 is stored and
the overflow-free add correction is used:

    t = mulhi(n, M);  q = (t + ((n - t) >> 1)) >> (p - 32 - 1)

Exact for every 32-bit numerator; verified exhaustively in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroDivisor

NUMERATOR_BITS = 32
_WORD = 1 << NUMERATOR_BITS


@dataclass(frozen=True)
class MagicDivider:
    """Precomputed multiplier/shift replacing division by a fixed divisor."""

    divisor: int
    multiplier: int
    shift: int
    add_indicator: bool

    def div(self, n):
        """floor(n / divisor) for a scalar int or an integer ndarray."""
        if isinstance(n, np.ndarray):
            if self.divisor == 1:
                return n.astype(np.int64)
            nn = n.astype(np.uint64)
            t = (nn * np.uint64(self.multiplier)) >> np.uint64(NUMERATOR_BITS)
            if self.add_indicator:
                q = (t + ((nn - t) >> np.uint64(1))) >> np.uint64(self.shift - 1)
            else:
                q = t >> np.uint64(self.shift)
            return q.astype(np.int64)
        n = int(n)
        if self.divisor == 1:
            return n
        t = (n * self.multiplier) >> NUMERATOR_BITS
        if self.add_indicator:
            return (t + ((n - t) >> 1)) >> (self.shift - 1)
        return t >> self.shift

    def mod(self, n):
        return self.div_mod(n)[1]

    def div_mod(self, n):
        q = self.div(n)
        if isinstance(n, np.ndarray):
            # keep remainder arithmetic in int64; mixing uint64 with the
            # signed quotient would promote to float64
            return q, n.astype(np.int64) - q * self.divisor
        return q, int(n) - q * self.divisor


def make_divider(d: int, width: int = NUMERATOR_BITS) -> MagicDivider:
    """Build a divider exact for all numerators in [0, 2**width).

    Only 32-bit numerators are supported; the index spaces this library
    divides over (CRS and NPQ products) stay well inside that range.
    """
    if width != NUMERATOR_BITS:
        raise ValueError("only 32-bit numerators are supported")
    d = int(d)
    if d < 1:
        raise ZeroDivisor(f"divisor must be >= 1, got {d}")
    if d == 1:
        # Degenerate: the search below yields m = 2**32 and shift 0, whose
        # add-corrected form would need a negative shift. div() special-cases.
        return MagicDivider(1, 1, 0, False)
    nc = (_WORD // d) * d - 1
    for p in range(NUMERATOR_BITS, 2 * NUMERATOR_BITS + 1):
        if (1 << p) > nc * (d - 1 - ((1 << p) - 1) % d):
            m = ((1 << p) + d - 1 - ((1 << p) - 1) % d) // d
            break
    else:  # pragma: no cover - the search always terminates for d >= 1
        raise AssertionError(f"no magic number found for d={d}")
    shift = p - NUMERATOR_BITS
    if m < _WORD:
        return MagicDivider(d, m, shift, False)
    # m needs 33 bits; shift >= 1 holds because m/2**p ~ 1/d <= 1/2.
    assert m < 2 * _WORD and shift >= 1
    return MagicDivider(d, m - _WORD, shift, True)


def div_mod(md: MagicDivider, n):
    """Quotient and remainder of n by the divider's divisor."""
    return md.div_mod(n)
