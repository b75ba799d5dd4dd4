"""Stationary age distribution at an arbitrary point in time, and metrics.

The any-time density is the arrival intensity times the mixture, over
admissible transitions ``n' -> n``, of the convolution of the just-set-age
density against the tail of the time-to-next-arrival density:

    f(x) = lambda_hat * sum w(n',n) * int_0^x g(x0|n',n) Hbar(x - x0|n) dx0.

Two independent code paths compute it: the algebraic path composes closed
forms in the exponomial algebra; the literal path evaluates the explicit
coefficient formula (binomial-expanded tail, coefficient convolution, and an
incomplete-integral bracket with a degenerate branch for coinciding exit
rates) pointwise.  They must agree; the second exists to catch transcription
errors in the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import gmpy2
import numpy as np
from scipy import integrate

from .chain import SystemParams
from .exppoly import (
    _FACT,
    EPS_POLE,
    ExpPoly,
    ep_convolve_tail_closed,
    ep_eval,
    ep_integral,
    ep_mix,
    ep_moment,
    ep_quantile,
    ep_scale,
    ep_tail_closed,
)
from .palm import components
from .precision import ensure_precision, extended

_INTEGRAL_TOL = 1e-8
_NONNEG_TOL = -1e-9
_GRID_SIZE = 512


@dataclass(frozen=True, eq=False)
class AgeDistribution:
    """Any-time age density with its normalization already validated."""

    params: SystemParams
    density: ExpPoly
    lambda_hat: float

    def validate(self) -> None:
        total = ep_integral(self.density)
        if abs(total - 1.0) > _INTEGRAL_TOL:
            raise ValueError(f"age density integrates to {total}, expected 1")
        for x in default_grid(self):
            if ep_eval(self.density, x) < _NONNEG_TOL:
                raise ValueError(f"age density negative at x = {x}")


@lru_cache(maxsize=128)
def age_density(params: SystemParams) -> AgeDistribution:
    """Assemble the any-time age density as one canonical exponomial.

    The mixture is grouped by the post-arrival state: the convolution is
    bilinear, so mixing the age densities sharing the same forward component
    first needs only ``i_max`` convolutions instead of one per transition.
    """
    ensure_precision(params.i_max)
    comp = components(params)
    lam_hat = comp.fwd.lambda_hat
    imax = params.i_max
    pieces = []
    for n in range(imax):
        g_mixed = ep_mix((comp.weights.weights[(np_, n)], comp.backward.g[(np_, n)])
                         for np_ in range(n + 1, imax + 1))
        pieces.append((1.0, ep_convolve_tail_closed(g_mixed, comp.forward.h[n])))
    dist = AgeDistribution(params, ep_scale(ep_mix(pieces), lam_hat), lam_hat)
    dist.validate()
    return dist


# ---------------------------------------------------------------------------
# Literal pointwise evaluator (independent cross-check path)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=128)
def _literal_tables(params: SystemParams):
    """Per-parameter coefficient tables for the literal evaluator.

    For each post-arrival state ``n``: the forward polynomial coefficients
    per forward rate, and the weight-mixed backward polynomial coefficients
    per backward rate (mixing over pre-arrival states is exact because the
    formula is linear in those coefficients).
    """
    comp = components(params)
    imax = params.i_max
    tables = []
    for n in range(imax):
        fwd_terms = [(dj, tuple(c)) for dj, c in comp.forward.h[n].terms]
        acc: dict[float, list] = {}
        for np_ in range(n + 1, imax + 1):
            w = comp.weights.weights[(np_, n)]
            for di, c in comp.backward.g[(np_, n)].terms:
                arr = acc.setdefault(di, [])
                if len(arr) < len(c):
                    arr.extend([0.0] * (len(c) - len(arr)))
                for k, ck in enumerate(c):
                    arr[k] += w * ck
        back_terms = sorted((di, tuple(c)) for di, c in acc.items())
        tables.append((fwd_terms, back_terms))
    return comp.fwd.lambda_hat, float(np.max(comp.fwd.d_tilde)), tables


def _tail_poly_in_gap(a_tilde, d: float, x) -> list:
    """Coefficients (in the inner variable) of the expanded tail integral.

    The tail of ``t^i e^{-dt}`` past ``x - x0``, with ``e^{-dx}`` factored
    out and the ``e^{+d x0}`` folded into the remaining exponential, leaves
    the polynomial ``sum_k z_k(x) x0^k`` with

        z_k(x) = (-1)^k sum_{i>=k} atilde_i sum_{j=k}^{i}
                 C(j, k) x^{j-k} i! / (j! d^{i-j+1}).
    """
    deg = len(a_tilde) - 1
    dx = extended(d)
    z = [extended(0)] * (deg + 1)
    for i in range(deg + 1):
        ai = a_tilde[i]
        if ai == 0.0:
            continue
        for k in range(i + 1):
            s = extended(0)
            for j in range(k, i + 1):
                s += math.comb(j, k) * (_FACT[i] // _FACT[j]) * x ** (j - k) \
                    / dx ** (i - j + 1)
            z[k] += (-1) ** k * ai * s
    return z


def age_density_theorem_eval(params: SystemParams, x) -> float | np.ndarray:
    """Literal pointwise evaluation of the explicit any-time density formula.

    Branches per rate pair on ``|d' - d~| <= eps``: the incomplete integral
    ``int_0^x x0^l e^{-(d'-d~) x0} dx0`` is evaluated in closed form for
    distinct rates and as ``x^{l+1}/(l+1)`` for coinciding ones (the exit
    rates of the two chains coincide elementwise, so the degenerate branch is
    always exercised).
    """
    ensure_precision(params.i_max)
    scalar = np.isscalar(x)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise ValueError("age must be >= 0")
    lam_hat, d_max, tables = _literal_tables(params)
    tol = EPS_POLE * d_max
    out = np.empty(len(xs))
    for ix, xf in enumerate(xs):
        xe = extended(float(xf))
        total = extended(0)
        for fwd_terms, back_terms in tables:
            for dj, a_tilde in fwd_terms:
                z = _tail_poly_in_gap(a_tilde, dj, xe)
                env_j = gmpy2.exp(-extended(dj) * xe)
                for di, a in back_terms:
                    top = len(z) + len(a) - 2
                    # bracket B_l = int_0^x x0^l e^{-beta x0} dx0; for
                    # beta < 0 run the recurrence on e^{beta x} B_l so the
                    # growing integral pairs with the decaying envelope.
                    beta = extended(di) - extended(dj)
                    if abs(beta) <= tol:
                        env = env_j
                        bracket = [xe ** (l + 1) / (l + 1) for l in range(top + 1)]
                    elif beta > 0:
                        env = env_j
                        ebx = gmpy2.exp(-beta * xe)
                        bracket = [(1 - ebx) / beta]
                        xp = extended(1)
                        for l in range(1, top + 1):
                            xp *= xe
                            bracket.append((l * bracket[l - 1] - xp * ebx) / beta)
                    else:
                        env = gmpy2.exp(-extended(di) * xe)
                        bracket = [(gmpy2.exp(beta * xe) - 1) / beta]
                        xp = extended(1)
                        for l in range(1, top + 1):
                            xp *= xe
                            bracket.append((l * bracket[l - 1] - xp) / beta)
                    # sum_l ctilde_l B_l with ctilde = conv(z, a), reordered
                    # as sum_k z_k sum_l a_l B_{l+k}
                    acc = extended(0)
                    for k, zk in enumerate(z):
                        if zk == 0.0:
                            continue
                        s = extended(0)
                        for l, al in enumerate(a):
                            if al != 0.0:
                                s += al * bracket[l + k]
                        acc += zk * s
                    total += env * acc
        out[ix] = float(lam_hat * total)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def age_cdf(dist: AgeDistribution, x: float) -> float:
    return 1.0 - age_ccdf(dist, x)


def age_ccdf(dist: AgeDistribution, x: float) -> float:
    ensure_precision(dist.params.i_max)
    return ep_eval(ep_tail_closed(dist.density), x)


def age_quantile(dist: AgeDistribution, eps: float) -> float:
    """The level ``x`` with ``P[age > x] = eps``."""
    ensure_precision(dist.params.i_max)
    return ep_quantile(dist.density, eps)


def age_mean(dist: AgeDistribution) -> float:
    ensure_precision(dist.params.i_max)
    return ep_moment(dist.density, 1)


def age_moment(dist: AgeDistribution, k: int) -> float:
    ensure_precision(dist.params.i_max)
    return ep_moment(dist.density, k)


def default_grid(dist: AgeDistribution, size: int = _GRID_SIZE) -> np.ndarray:
    """Evaluation abscissae covering the visible support of the density."""
    ensure_precision(dist.params.i_max)
    upper = ep_quantile(dist.density, 1e-4)
    return np.linspace(0.0, upper, size)


def expectation_of(dist: AgeDistribution, phi) -> float:
    """``E[phi(age)]`` for a bounded measurable test function.

    Polynomials (coefficient sequences or ``numpy`` polynomial objects) are
    integrated exactly through moments; callables fall back to adaptive
    quadrature on the effective support.
    """
    ensure_precision(dist.params.i_max)
    if isinstance(phi, np.polynomial.Polynomial):
        coeffs = list(phi.coef)
    elif isinstance(phi, (list, tuple, np.ndarray)) and not callable(phi):
        coeffs = list(np.asarray(phi, dtype=float))
    else:
        coeffs = None
    if coeffs is not None:
        return math.fsum(c * ep_moment(dist.density, k)
                         for k, c in enumerate(coeffs) if c != 0.0)
    cutoff = ep_quantile(dist.density, 1e-12)
    val, _ = integrate.quad(lambda u: phi(u) * ep_eval(dist.density, u),
                            0.0, cutoff, epsabs=1e-8, epsrel=0.0, limit=500)
    return val
