"""Joint law at informative arrivals: age just set, and time to the next one.

Conditioned on the chain transition ``n' -> n`` straddled by the arrival, the
age just set and the time to the next informative arrival are independent
with densities ``g(.|n', n)`` and ``h(.|n)``.  The unconditional joint law is
the transition-weighted mixture, kept in separable form: every downstream
integral factorizes per term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

from .chain import (
    ForwardChain,
    PalmWeights,
    ReversedChain,
    SystemParams,
    build_forward,
    build_reversed,
    palm_weights,
)
from .exppoly import ExpPoly, ep_mix, pf_eval
from .lst import BackwardComponents, ForwardComponents, backward_lsts, forward_lsts
from .precision import ensure_precision


class Components(NamedTuple):
    fwd: ForwardChain
    rev: ReversedChain
    weights: PalmWeights
    forward: ForwardComponents
    backward: BackwardComponents


@lru_cache(maxsize=128)
def components(params: SystemParams) -> Components:
    """Build (and memoize) every analytic ingredient for one parameter set."""
    fwd = build_forward(params)
    rev = build_reversed(fwd)
    return Components(fwd, rev, palm_weights(fwd), forward_lsts(fwd),
                      backward_lsts(fwd, rev))


@dataclass(frozen=True, eq=False)
class PalmJointDensity:
    """Separable mixture ``sum w * g(x0) * h(t1)`` over admissible transitions."""

    params: SystemParams
    terms: tuple[tuple[float, tuple[int, int], ExpPoly, ExpPoly], ...]

    def weight_total(self) -> float:
        return math.fsum(w for w, _, _, _ in self.terms)


def palm_joint(params: SystemParams) -> PalmJointDensity:
    comp = components(params)
    terms = tuple(
        (w, pair, comp.backward.g[pair], comp.forward.h[pair[1]])
        for pair, w in comp.weights.weights.items()
    )
    return PalmJointDensity(params, terms)


def age_at_informative(params: SystemParams) -> ExpPoly:
    """Density of the age observed at informative-arrival instants."""
    ensure_precision(params.i_max)
    comp = components(params)
    return ep_mix((w, comp.backward.g[pair])
                  for pair, w in comp.weights.weights.items())


def joint_lst(params: SystemParams, nu: float, theta: float) -> float:
    """Joint transform ``E[e^{-nu T1 - theta X0}]`` at the arrival instant.

    Equals 1 at the origin and is non-increasing in each argument.
    """
    if nu < 0 or theta < 0:
        raise ValueError("transform arguments must be >= 0")
    ensure_precision(params.i_max)
    comp = components(params)
    return math.fsum(
        w * pf_eval(comp.backward.lst(np_, n + 1), theta)
        * pf_eval(comp.forward.f_tilde[n], nu)
        for (np_, n), w in comp.weights.weights.items()
    )
