"""Extended-precision scalar support for the transform algebra.

The pole-wise representation of the transforms is exact but ill-conditioned:
for large windows its true coefficients grow combinatorially (beyond 1e30 at
window 20 in harsh rate ratios) while every evaluated quantity is O(1), so
the representation must be carried with enough precision to absorb the
cancellation.  Construction therefore runs on ``gmpy2`` floats whose
precision scales with the window size, verified after the fact against exact
normalization identities and escalated if short.  All evaluated values are
returned as ordinary floats.

Precision is a thread-local high-water mark: it is only ever raised.
"""

from __future__ import annotations

import gmpy2
from gmpy2 import mpfr

_BASE_BITS = 96
_BITS_PER_STATE = 8


def required_bits(i_max: int) -> int:
    return _BASE_BITS + _BITS_PER_STATE * i_max


def ensure_bits(bits: int) -> None:
    ctx = gmpy2.get_context()
    if ctx.precision < bits:
        ctx.precision = bits


def ensure_precision(i_max: int) -> None:
    ensure_bits(required_bits(i_max))


def extended(x) -> mpfr:
    """Exact conversion of a binary float (or int) to the extended type."""
    return mpfr(x)


def is_extended(x) -> bool:
    return isinstance(x, mpfr)
