"""Markov-chain layer of the window-flow-controlled channel.

The number of non-obsolete messages in flight evolves as a finite
continuous-time Markov chain on ``{0, ..., i_max}``: arrivals push the count
up by one at rate ``lam`` (blocked at ``i_max``), and each of the ``n``
messages in flight completes at rate ``mu``, dropping the count to any lower
level with equal rate ``mu``.  This module builds that chain, its stationary
law in closed form, the time-reversed chain (a batch-arrival queue drained
one message at a time), and the law of the transition straddled by a
randomly-chosen informative arrival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_I_MAX_CAP = 64


class ParameterError(ValueError):
    """Raised when system parameters are outside their domain."""


@dataclass(frozen=True)
class SystemParams:
    """Channel parameters: generation rate, delivery rate, window size."""

    lam: float
    mu: float
    i_max: int
    i_max_cap: int = field(default=DEFAULT_I_MAX_CAP, compare=False)

    def __post_init__(self):
        if not (isinstance(self.lam, (int, float)) and math.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lam must be a positive finite rate, got {self.lam!r}")
        if not (isinstance(self.mu, (int, float)) and math.isfinite(self.mu) and self.mu > 0):
            raise ParameterError(f"mu must be a positive finite rate, got {self.mu!r}")
        if not isinstance(self.i_max, int) or isinstance(self.i_max, bool):
            raise ParameterError(f"i_max must be an integer, got {self.i_max!r}")
        if not 1 <= self.i_max <= self.i_max_cap:
            raise ParameterError(
                f"i_max must lie in [1, {self.i_max_cap}], got {self.i_max}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ForwardChain:
    """The forward chain with its stationary law and arrival intensity.

    ``q`` is the rate matrix, ``p`` the stationary probabilities, ``d_tilde``
    the exit rates, ``n_bar`` the stationary mean count and ``lambda_hat``
    the intensity ``mu * n_bar`` of informative arrivals.
    """

    params: SystemParams
    q: np.ndarray
    p: np.ndarray
    d_tilde: np.ndarray
    n_bar: float
    lambda_hat: float


@dataclass(frozen=True, eq=False)
class ReversedChain:
    """Rates of the time-reversed chain.

    ``lambda_prime[i]`` is the single-departure rate out of state ``i``
    (index 0 unused and zero); ``mu_prime[i, j]`` for ``i < j`` is the rate
    of a batch arrival lifting the count from ``i`` to ``j``; ``d_prime`` are
    the exit rates, which coincide with the forward exit rates.
    """

    params: SystemParams
    lambda_prime: np.ndarray
    mu_prime: np.ndarray
    d_prime: np.ndarray

    @property
    def q_prime(self) -> np.ndarray:
        n = self.params.i_max
        q = np.array(self.mu_prime)
        for i in range(1, n + 1):
            q[i, i - 1] = self.lambda_prime[i]
        return q


@dataclass(frozen=True, eq=False)
class PalmWeights:
    """Law of the chain transition (n' -> n) seen by a random informative arrival."""

    weights: dict[tuple[int, int], float]

    def total(self) -> float:
        return math.fsum(self.weights.values())


def build_forward(params: SystemParams) -> ForwardChain:
    """Build the forward chain; the stationary law uses the closed product form.

    ``p_n = (n+1) mu t_n / (lam + (n+1) mu)`` for ``n < i_max`` and
    ``p_{i_max} = t_{i_max}``, with ``t_n`` the product of the ratios
    ``lam / (lam + j mu)`` for ``j = 1..n`` (stable: no raw powers).
    """
    lam, mu, imax = params.lam, params.mu, params.i_max
    n_states = imax + 1

    p = np.empty(n_states)
    t = 1.0
    for n in range(imax):
        p[n] = (n + 1) * mu * t / (lam + (n + 1) * mu)
        t *= lam / (lam + (n + 1) * mu)
    p[imax] = t

    q = np.zeros((n_states, n_states))
    for i in range(imax):
        q[i, i + 1] = lam
    for i in range(1, n_states):
        q[i, :i] = mu

    d_tilde = np.array([lam * (n < imax) + n * mu for n in range(n_states)])
    n_bar = math.fsum(n * p[n] for n in range(n_states))
    return ForwardChain(params, _freeze(q), _freeze(p), _freeze(d_tilde),
                        n_bar, mu * n_bar)


def build_reversed(fwd: ForwardChain) -> ReversedChain:
    """Time-reverse the forward chain.

    The reversed rates follow from the detailed-flow identity
    ``p_i Q'(i, j) = p_j Q(j, i)`` and reduce to ratio products.
    """
    params = fwd.params
    lam, mu, imax = params.lam, params.mu, params.i_max
    n_states = imax + 1

    lambda_prime = np.zeros(n_states)
    for i in range(1, imax):
        lambda_prime[i] = i / (i + 1) * (lam + (i + 1) * mu)
    lambda_prime[imax] = imax * mu

    mu_prime = np.zeros((n_states, n_states))
    for i in range(imax):
        # prod tracks lam^{j-i-1} / prod_{k=i+2}^{j} (lam + k mu) as j grows;
        # both branches are ratio products of it.
        prod = 1.0
        for j in range(i + 1, imax + 1):
            if j > i + 1:
                prod *= lam / (lam + j * mu)
            if j < imax:
                mu_prime[i, j] = (j + 1) * mu * prod * lam / ((lam + (j + 1) * mu) * (i + 1))
            else:
                mu_prime[i, j] = lam * prod / (i + 1)

    d_prime = np.array([
        math.fsum([lambda_prime[i]] + [mu_prime[i, j] for j in range(i + 1, n_states)])
        for i in range(n_states)
    ])
    return ReversedChain(params, _freeze(lambda_prime), _freeze(mu_prime),
                         _freeze(d_prime))


def palm_weights(fwd: ForwardChain) -> PalmWeights:
    """Weights ``p_{n'} / n_bar`` over admissible transitions ``n' -> n``.

    A departure out of state ``n'`` lands on each ``n < n'`` with the same
    rate, so the pre-state is size-biased by ``n'`` and the post-state is
    uniform below it.
    """
    weights = {
        (np_, n): fwd.p[np_] / fwd.n_bar
        for np_ in range(1, fwd.params.i_max + 1)
        for n in range(np_)
    }
    return PalmWeights(weights)
