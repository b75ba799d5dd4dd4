"""Closed-form algebra for rational transforms and exponomial functions.

Two value types carry every closed form in this package:

* ``PartialFraction`` -- a strictly proper rational function of the transform
  variable ``s``, stored pole-wise as ``sum_m a_m / (s + d)^m`` with all pole
  rates ``d > 0``.
* ``ExpPoly`` -- an exponential-polynomial mixture ``sum_i P_i(x) e^{-d_i x}``,
  the time-domain image of a strictly proper ``PartialFraction``.

Both are canonical after construction: pole rates closer than
``EPS_POLE * max(rate)`` are merged into one entry and trailing coefficients
below ``EPS_COEFF`` (relative to the largest coefficient of the value) are
trimmed.  Values are immutable; every operation returns a fresh value.

Coefficients may be ordinary floats or extended-precision floats (see
``precision``); the operations are polymorphic, and any scalar factor that
multiplies a possibly-huge coefficient (pole-gap reciprocals, rate powers,
exponentials, factorials) is formed at the coefficient's own precision, since
the representation cancels catastrophically by design.  Pole rates themselves
are always ordinary floats: they are exact model inputs.

The class of exponomials is closed under the operations needed downstream:
tail integrals, moments, and the convolution of a density against another
density's tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2

from .precision import extended, is_extended

# Rates that coincide do so exactly in this model (they are the same exit
# rate computed twice), while genuinely distinct rates differ by O(lambda, mu).
EPS_POLE = 1e-9
EPS_COEFF = 1e-14

# Exact integer factorials; they convert losslessly into either scalar type.
_FACT: list[int] = [1]
for _n in range(1, 261):
    _FACT.append(_FACT[-1] * _n)


Terms = tuple[tuple[float, tuple], ...]


def _canonical(acc: dict[float, list]) -> Terms:
    """Merge near-equal rates, trim trailing tiny coefficients, sort by rate."""
    items = [(d, list(c)) for d, c in acc.items() if any(c)]
    if not items:
        return ()
    tol = EPS_POLE * max(d for d, _ in items)
    items.sort(key=lambda t: t[0])
    merged: list[tuple[float, list]] = []
    for d, coeffs in items:
        if merged and d - merged[-1][0] <= tol:
            tgt = merged[-1][1]
            if len(coeffs) > len(tgt):
                tgt.extend([0.0] * (len(coeffs) - len(tgt)))
            for k, c in enumerate(coeffs):
                tgt[k] += c
        else:
            merged.append((d, coeffs))
    big = max((abs(c) for _, cs in merged for c in cs), default=0.0)
    cut = EPS_COEFF * big
    out = []
    for d, coeffs in merged:
        while coeffs and abs(coeffs[-1]) <= cut:
            coeffs.pop()
        if coeffs:
            out.append((d, tuple(coeffs)))
    return tuple(out)


def _terms_extended(terms: Terms) -> bool:
    return any(is_extended(c) for _, cs in terms for c in cs)


@dataclass(frozen=True)
class PartialFraction:
    """Strictly proper rational function, one entry per pole rate.

    ``terms`` maps each pole rate ``d`` to coefficients ``(a_1, ..., a_m)``
    representing ``sum_m a_m / (s + d)^m``.  No polynomial or constant part.
    """

    terms: Terms = ()

    def rates(self) -> tuple[float, ...]:
        return tuple(d for d, _ in self.terms)


@dataclass(frozen=True)
class ExpPoly:
    """Exponential-polynomial function ``sum_i P_i(x) e^{-d_i x}``.

    ``terms`` maps each rate ``d`` to polynomial coefficients
    ``(c_0, ..., c_K)`` of ``P(x) = sum_k c_k x^k``.
    """

    terms: Terms = ()

    def rates(self) -> tuple[float, ...]:
        return tuple(d for d, _ in self.terms)

    def max_degree(self) -> int:
        return max((len(c) - 1 for _, c in self.terms), default=0)


PF_ZERO = PartialFraction()
EP_ZERO = ExpPoly()


def _acc_from(terms: Terms) -> dict[float, list]:
    return {d: list(c) for d, c in terms}


def _acc_add(acc: dict[float, list], d: float, mult_index: int, value) -> None:
    coeffs = acc.get(d)
    if coeffs is None:
        coeffs = acc[d] = []
    if len(coeffs) <= mult_index:
        coeffs.extend([0.0] * (mult_index + 1 - len(coeffs)))
    coeffs[mult_index] += value


def _fsum(values: Iterable) -> float:
    """Compensated sum of floats; extended values sum at context precision."""
    vals = list(values)
    if any(is_extended(v) for v in vals):
        return float(sum(vals))
    return math.fsum(vals)


def _exp_neg(d: float, x: float, like_extended: bool):
    """``e^{-d x}`` at the precision of the coefficients it will multiply."""
    if like_extended:
        return gmpy2.exp(-extended(d) * extended(x))
    return math.exp(-d * x)


def _recip(value: float, like_extended: bool):
    return 1 / extended(value) if like_extended else 1.0 / value


def _inv_diff(a: float, b: float, like_extended: bool):
    """``1/(a - b)`` with the difference formed losslessly when extended."""
    if like_extended:
        return 1 / (extended(a) - extended(b))
    return 1.0 / (a - b)


def _inv_sum(a: float, b: float, like_extended: bool):
    if like_extended:
        return 1 / (extended(a) + extended(b))
    return 1.0 / (a + b)


def _powers_needed(extended_flag: bool, base: float, count: int) -> list:
    """``base**-(1..count)`` as reciprocal powers at matching precision."""
    inv = _recip(base, extended_flag)
    out = [inv]
    for _ in range(count - 1):
        out.append(out[-1] * inv)
    return out


# ---------------------------------------------------------------------------
# PartialFraction operations
# ---------------------------------------------------------------------------

def pf_add(a: PartialFraction, b: PartialFraction) -> PartialFraction:
    acc = _acc_from(a.terms)
    for d, coeffs in b.terms:
        for k, c in enumerate(coeffs):
            _acc_add(acc, d, k, c)
    return PartialFraction(_canonical(acc))


def pf_scale(a: PartialFraction, c) -> PartialFraction:
    if c == 0.0:
        return PF_ZERO
    return PartialFraction(_canonical({d: [c * x for x in cs] for d, cs in a.terms}))


def pf_mix(parts: Iterable[tuple[float, PartialFraction]]) -> PartialFraction:
    """Weighted sum of partial fractions, accumulated in one pass."""
    acc: dict[float, list] = {}
    for w, pf in parts:
        if w == 0.0:
            continue
        for d, coeffs in pf.terms:
            for k, c in enumerate(coeffs):
                _acc_add(acc, d, k, w * c)
    return PartialFraction(_canonical(acc))


def pf_divide_by_pole(const, a: PartialFraction, d: float) -> PartialFraction:
    """Return ``(const + a(s)) / (s + d)`` in partial-fraction form.

    Uses the exact reductions
    ``1/((s+r)^m (s+d)) = (1/(d-r)) (1/(s+r)^m - 1/((s+r)^{m-1}(s+d)))``
    for ``r != d``; a coincident pole raises the multiplicity instead.
    """
    if d <= 0.0:
        raise ValueError(f"pole rate must be positive, got {d}")
    ext = is_extended(const) or _terms_extended(a.terms)
    tol = EPS_POLE * max([d] + [r for r, _ in a.terms])
    acc: dict[float, list] = {}
    if const != 0.0:
        _acc_add(acc, d, 0, const)
    for r, coeffs in a.terms:
        if abs(r - d) <= tol:
            for m, c in enumerate(coeffs):
                _acc_add(acc, d, m + 1, c)
            continue
        u = _inv_diff(d, r, ext)
        # b_j = sum_{i>=0} a_{j+i} (-1)^i u^{i+1} via b_j = u (a_j - b_{j+1});
        # then 1/(s+r)^j picks up b_j and 1/(s+d) picks up -b_1.
        b = 0.0
        bs = [0.0] * len(coeffs)
        for j in range(len(coeffs) - 1, -1, -1):
            b = u * (coeffs[j] - b)
            bs[j] = b
        for j, bj in enumerate(bs):
            _acc_add(acc, r, j, bj)
        _acc_add(acc, d, 0, -bs[0])
    return PartialFraction(_canonical(acc))


def pf_eval(a: PartialFraction, s: float) -> float:
    """Evaluate the rational function at ``s >= 0``."""
    ext = _terms_extended(a.terms)
    vals = []
    for d, coeffs in a.terms:
        base = _inv_sum(s, d, ext)
        pw = base
        for c in coeffs:
            vals.append(c * pw)
            pw *= base
    return _fsum(vals)


def pf_first_moment(a: PartialFraction) -> float:
    """Minus the derivative at the origin: the mean of the associated law."""
    ext = _terms_extended(a.terms)
    vals = []
    for d, coeffs in a.terms:
        if not coeffs:
            continue
        powers = _powers_needed(ext, d, len(coeffs) + 1)
        for m, c in enumerate(coeffs, start=1):
            vals.append(c * m * powers[m])
    return _fsum(vals)


def pf_to_exppoly(a: PartialFraction) -> ExpPoly:
    """Termwise inverse transform ``a_m/(s+d)^m -> a_m x^{m-1} e^{-dx}/(m-1)!``."""
    acc: dict[float, list] = {}
    for d, coeffs in a.terms:
        for m, c in enumerate(coeffs, start=1):
            _acc_add(acc, d, m - 1, c / _FACT[m - 1])
    return ExpPoly(_canonical(acc))


# ---------------------------------------------------------------------------
# ExpPoly operations
# ---------------------------------------------------------------------------

def ep_add(a: ExpPoly, b: ExpPoly) -> ExpPoly:
    acc = _acc_from(a.terms)
    for d, coeffs in b.terms:
        for k, c in enumerate(coeffs):
            _acc_add(acc, d, k, c)
    return ExpPoly(_canonical(acc))


def ep_scale(a: ExpPoly, c) -> ExpPoly:
    if c == 0.0:
        return EP_ZERO
    return ExpPoly(_canonical({d: [c * x for x in cs] for d, cs in a.terms}))


def ep_mix(parts: Iterable[tuple[float, ExpPoly]]) -> ExpPoly:
    acc: dict[float, list] = {}
    for w, ep in parts:
        if w == 0.0:
            continue
        for d, coeffs in ep.terms:
            for k, c in enumerate(coeffs):
                _acc_add(acc, d, k, w * c)
    return ExpPoly(_canonical(acc))


def ep_eval(f: ExpPoly, x: float) -> float:
    ext = _terms_extended(f.terms)
    vals = []
    for d, coeffs in f.terms:
        p = 0.0
        for c in reversed(coeffs):
            p = p * x + c
        vals.append(p * _exp_neg(d, x, ext))
    return _fsum(vals)


def ep_tail_closed(f: ExpPoly) -> ExpPoly:
    """The tail ``x -> integral_x^inf f(t) dt`` as an exponomial.

    Follows from the primitive of ``P(t) e^{-dt}`` being
    ``-e^{-dt} sum_i P^(i)(t)/d^{i+1}``.
    """
    ext = _terms_extended(f.terms)
    acc: dict[float, list] = {}
    for d, coeffs in f.terms:
        deg = len(coeffs) - 1
        powers = _powers_needed(ext, d, deg + 1)
        for j in range(deg + 1):
            # coefficient of x^j in sum_i P^(i)(x)/d^{i+1}
            r = _fsum(
                coeffs[j + i] * (_FACT[j + i] // _FACT[j]) * powers[i]
                for i in range(deg - j + 1)
            )
            _acc_add(acc, d, j, r)
    return ExpPoly(_canonical(acc))


def ep_tail(f: ExpPoly, x: float) -> float:
    """Exact ``integral_x^inf f``; equals ``ep_integral(f)`` at ``x = 0``."""
    return ep_eval(ep_tail_closed(f), x)


def ep_integral(f: ExpPoly) -> float:
    """Total integral over ``[0, inf)``."""
    return ep_tail(f, 0.0)


def ep_moment(f: ExpPoly, k: int) -> float:
    """``integral_0^inf x^k f(x) dx`` via ``int x^n e^{-dx} = n!/d^{n+1}``."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    ext = _terms_extended(f.terms)
    vals = []
    for d, coeffs in f.terms:
        if not coeffs:
            continue
        powers = _powers_needed(ext, d, len(coeffs) + k + 1)
        for j, c in enumerate(coeffs):
            vals.append(c * _FACT[j + k] * powers[j + k])
    return _fsum(vals)


def ep_cdf(f: ExpPoly, x: float) -> float:
    """``integral_0^x f``, computed as tail(0) - tail(x)."""
    t = ep_tail_closed(f)
    return ep_eval(t, 0.0) - ep_eval(t, x)


def ep_quantile(f: ExpPoly, eps: float) -> float:
    """Solve ``integral_x^inf f = eps`` for a density ``f`` by bisection.

    The bracket upper end grows geometrically until it covers the quantile;
    the returned point satisfies ``|tail(x) - eps| <= 1e-10``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {eps}")
    total = ep_integral(f)
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"not a normalized density (integral = {total})")
    tail = ep_tail_closed(f)
    lo = 0.0
    hi = 1.0 / min(f.rates())
    for _ in range(200):
        if ep_eval(tail, hi) < eps:
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        v = ep_eval(tail, mid)
        if abs(v - eps) <= 1e-10:
            return mid
        if v > eps:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _convolve_term(
    acc: dict[float, list],
    a: float,
    pcoeffs: Sequence,
    b: float,
    qcoeffs: Sequence,
    tol: float,
    ext: bool,
) -> None:
    """Accumulate ``integral_0^x P(x0) e^{-a x0} Q(x - x0) e^{-b (x-x0)} dx0``."""
    if abs(a - b) <= tol:
        # int_0^x x0^p (x-x0)^q dx0 = x^{p+q+1} p! q! / (p+q+1)!
        for p, cp in enumerate(pcoeffs):
            if cp == 0.0:
                continue
            for q, cq in enumerate(qcoeffs):
                if cq == 0.0:
                    continue
                _acc_add(acc, b, p + q + 1,
                         cp * cq * _FACT[p] * _FACT[q] / _FACT[p + q + 1])
        return
    u = _inv_diff(a, b, ext)
    for q, cq in enumerate(qcoeffs):
        if cq == 0.0:
            continue
        for r in range(q + 1):
            pref = cq * math.comb(q, r) * (-1) ** r
            xq = q - r
            # int_0^x A(x0) e^{-beta x0} dx0 with A(x0) = sum_p cp x0^{p+r}:
            # equals W_0 - e^{-beta x} sum_v (W_v / v!) x^v, where
            # W_v = u (A_v v! + W_{v+1}) walking degrees downward.
            w = 0.0
            top = len(pcoeffs) - 1 + r
            ws = [0.0] * (top + 1)
            for v in range(top, -1, -1):
                av = pcoeffs[v - r] if v >= r else 0.0
                w = u * (av * _FACT[v] + w)
                ws[v] = w
            _acc_add(acc, b, xq, pref * ws[0])
            for v, wv in enumerate(ws):
                _acc_add(acc, a, v + xq, -pref * wv / _FACT[v])


def ep_convolve_tail_closed(g: ExpPoly, h: ExpPoly) -> ExpPoly:
    """Closed form of ``x -> integral_0^x g(x0) Hbar(x - x0) dx0``.

    ``Hbar`` is the tail of ``h``.  The result is an exponomial whose rates
    are the union of the rates of ``g`` and ``h``.
    """
    if not g.terms or not h.terms:
        return EP_ZERO
    hbar = ep_tail_closed(h)
    ext = _terms_extended(g.terms) or _terms_extended(hbar.terms)
    tol = EPS_POLE * max(max(g.rates()), max(hbar.rates()))
    acc: dict[float, list] = {}
    for a, pcoeffs in g.terms:
        for b, qcoeffs in hbar.terms:
            _convolve_term(acc, a, pcoeffs, b, qcoeffs, tol, ext)
    return ExpPoly(_canonical(acc))


def ep_convolve_density_with_tail(g: ExpPoly, h: ExpPoly, x: float) -> float:
    """Pointwise value of the density-against-tail convolution at ``x``."""
    return ep_eval(ep_convolve_tail_closed(g, h), x)
