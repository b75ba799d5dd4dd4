"""Transform recursions for the conditional component distributions.

Forward component: the law ``h(.|n)`` of the time from now until the next
informative arrival, given ``n`` non-obsolete messages in flight.  Its
transform ``f_tilde[n]`` satisfies a scalar back-substitution from the top
state down, because every transition of interest is a downward jump and the
only upward neighbour of ``n`` is ``n + 1``.

Backward component: on the time-reversed chain, the age set by an informative
arrival straddling ``n' -> n`` equals the time until the ``(n+1)``-st
single-message departure starting from state ``n'``.  Its transform
``f[n'][k]`` (``k`` departures still owed) satisfies

    f[n', k] = (lambda'_{n'} f[n'-1, k-1] + sum_{j>n'} mu'_{n',j} f[j, k])
               / (d'_{n'} + theta)

with ``f[., 0] = 1``: a departure both changes state and decrements ``k``,
while batch arrivals keep ``k``.  Sweeping ``k`` upward and states downward
makes this pure back-substitution; no matrix inversion is needed.

Construction runs in extended precision scaled to the window size (the true
pole-wise coefficients grow combinatorially with it) and is verified against
the exact normalization ``f(0) = 1``, escalating precision if short.
"""

from __future__ import annotations

from dataclasses import dataclass

from .chain import ForwardChain, ReversedChain
from .exppoly import (
    PF_ZERO,
    ExpPoly,
    PartialFraction,
    pf_divide_by_pole,
    pf_eval,
    pf_mix,
    pf_scale,
    pf_to_exppoly,
)
from .precision import ensure_bits, ensure_precision, extended, required_bits

_NORM_GUARD = 1e-11
_MAX_ESCALATIONS = 4


@dataclass(frozen=True, eq=False)
class ForwardComponents:
    """Transforms ``f_tilde[n]`` and densities ``h[n]`` of the forward component."""

    f_tilde: tuple[PartialFraction, ...]
    h: tuple[ExpPoly, ...]


@dataclass(frozen=True, eq=False)
class BackwardComponents:
    """Transforms ``f[n'][k-1]`` (k-th departure from state n') and densities ``g``.

    ``g[(n', n)]`` is the density of the age set by an informative arrival at
    a transition ``n' -> n``; its transform is ``lst(n', n + 1)``.
    """

    f: tuple[tuple[PartialFraction, ...], ...]
    g: dict[tuple[int, int], ExpPoly]

    def lst(self, n_prime: int, k: int) -> PartialFraction:
        return self.f[n_prime][k - 1]


def _forward_table(fwd: ForwardChain) -> list[PartialFraction]:
    lam, mu, imax = fwd.params.lam, fwd.params.mu, fwd.params.i_max
    d = fwd.d_tilde
    f: list[PartialFraction] = [PF_ZERO] * (imax + 1)
    f[imax] = pf_divide_by_pole(extended(imax * mu), PF_ZERO, float(d[imax]))
    lam_x = extended(lam)
    for n in range(imax - 1, -1, -1):
        f[n] = pf_divide_by_pole(extended(n * mu), pf_scale(f[n + 1], lam_x),
                                 float(d[n]))
    return f


def _backward_table(fwd: ForwardChain, rev: ReversedChain) -> list[list[PartialFraction]]:
    imax = fwd.params.i_max
    lp, mp_, d = rev.lambda_prime, rev.mu_prime, rev.d_prime
    f: list[list[PartialFraction]] = [[PF_ZERO] * imax for _ in range(imax + 1)]
    for k in range(1, imax + 1):
        for n_prime in range(imax, -1, -1):
            const = 0.0
            parts: list[tuple[float, PartialFraction]] = []
            if n_prime >= 1:
                if k == 1:
                    const = extended(float(lp[n_prime]))
                else:
                    parts.append((extended(float(lp[n_prime])), f[n_prime - 1][k - 2]))
            for j in range(n_prime + 1, imax + 1):
                parts.append((extended(float(mp_[n_prime, j])), f[j][k - 1]))
            f[n_prime][k - 1] = pf_divide_by_pole(const, pf_mix(parts),
                                                  float(d[n_prime]))
    return f


def _with_verified_precision(build, check, i_max: int):
    """Run ``build`` and escalate working precision until ``check`` passes."""
    bits = required_bits(i_max)
    for _ in range(_MAX_ESCALATIONS):
        ensure_bits(bits)
        result = build()
        if check(result):
            return result
        bits *= 2
    raise ArithmeticError(
        "transform recursion failed normalization even at "
        f"{bits // 2} bits of working precision")


def forward_lsts(fwd: ForwardChain) -> ForwardComponents:
    """Back-substitute the forward transforms from ``n = i_max`` down to 0.

    From the top state the next transition is necessarily a departure, so
    ``f_tilde[i_max]`` is a plain exponential transform.  Below it,
    ``f_tilde[n] = (n mu + lam f_tilde[n+1]) / (d_tilde[n] + s)``; the
    constant part vanishes at ``n = 0`` because state 0 must first see an
    arrival, which is not of interest.
    """
    ensure_precision(fwd.params.i_max)
    table = _with_verified_precision(
        lambda: _forward_table(fwd),
        lambda f: all(abs(pf_eval(x, 0.0) - 1.0) <= _NORM_GUARD for x in f),
        fwd.params.i_max)
    return ForwardComponents(tuple(table), tuple(pf_to_exppoly(x) for x in table))


def backward_lsts(fwd: ForwardChain, rev: ReversedChain) -> BackwardComponents:
    """Compute ``f[n'][k]`` for all ``0 <= n' <= i_max``, ``1 <= k <= i_max``."""
    ensure_precision(fwd.params.i_max)
    imax = fwd.params.i_max
    table = _with_verified_precision(
        lambda: _backward_table(fwd, rev),
        lambda f: all(abs(pf_eval(pf, 0.0) - 1.0) <= _NORM_GUARD
                      for row in f for pf in row),
        imax)
    g = {
        (n_prime, n): pf_to_exppoly(table[n_prime][n])
        for n_prime in range(1, imax + 1)
        for n in range(n_prime)
    }
    return BackwardComponents(tuple(tuple(row) for row in table), g)
