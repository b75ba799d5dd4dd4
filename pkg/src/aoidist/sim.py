"""Discrete-event simulation of the window-flow-controlled channel.

Messages are generated by a Poisson stream and carry their generation time as
timestamp.  A message is admitted iff fewer than ``i_max`` in-flight messages
are fresher than everything delivered so far; admitted messages receive
independent exponential one-way delays and may overtake each other.  A
delivery is informative iff its timestamp beats every delivered timestamp; it
resets the age to its own delay and obsoletes all older in-flight messages
(they stay in flight but stop counting toward the window and will be
non-informative on delivery).  Between informative arrivals the age grows at
slope one.

Statistics are exact functionals of the sawtooth sample path over the
measurement window, which runs from the first informative arrival after
warmup to the last one before the horizon (the last generation instant).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .chain import SystemParams


class InsufficientDataError(RuntimeError):
    """Raised when a run contains too few informative arrivals to estimate from."""


@dataclass(frozen=True)
class SimConfig:
    params: SystemParams
    n_messages: int = 100_000
    seed: int = 0
    warmup_fraction: float = 0.05

    def __post_init__(self):
        if self.n_messages < 1:
            raise ValueError(f"n_messages must be >= 1, got {self.n_messages}")
        if not 0.0 <= self.warmup_fraction < 0.5:
            raise ValueError(
                f"warmup_fraction must lie in [0, 0.5), got {self.warmup_fraction}")


@dataclass(frozen=True, eq=False)
class SimResult:
    """Sample-path statistics of one run.

    ``informative_ages[k]`` is the age set by the k-th recorded informative
    arrival, at time ``informative_times[k]``.  ``z_occupancy[n]`` is the
    time spent with ``n`` non-obsolete messages in flight over the
    measurement window, whose length the vector sums to.
    """

    config: SimConfig
    informative_ages: np.ndarray
    informative_times: np.ndarray
    mean_age_timeavg: float
    mean_age_palm: float
    z_occupancy: np.ndarray
    counters: dict[str, int] = field(default_factory=dict)

    @property
    def horizon(self) -> float:
        return float(self.informative_times[-1] - self.informative_times[0])

    @property
    def n_cycles(self) -> int:
        return len(self.informative_times) - 1


def simulate(config: SimConfig) -> SimResult:
    """Run one deterministic replication of the channel.

    Arrival and delay streams are independent substreams of the seed, drawn
    up front and indexed by message id, so a message keeps its delay across
    configurations (common-random-numbers friendly).  The event queue is
    keyed by delivery time with message id breaking ties.
    """
    p = config.params
    lam, mu, imax = p.lam, p.mu, p.i_max
    n = config.n_messages

    s_arrivals, s_delays = np.random.SeedSequence(config.seed).spawn(2)
    gen_times = np.cumsum(np.random.default_rng(s_arrivals).exponential(1.0 / lam, n))
    delays = np.random.default_rng(s_delays).exponential(1.0 / mu, n)

    horizon = float(gen_times[-1])
    t_warm = config.warmup_fraction * horizon

    in_flight: list[tuple[float, int]] = []   # (delivery time, msg id)
    window: deque[float] = deque()            # timestamps of non-obsolete in flight
    max_ts = -math.inf

    dropped = delivered = informative = obsolete = 0
    ages: list[float] = []
    times: list[float] = []
    area = 0.0

    occ = np.zeros(imax + 1)
    occ_last = np.zeros(imax + 1)
    t_prev = 0.0
    recording = False

    def on_delivery(t: float, msg: int) -> None:
        nonlocal max_ts, delivered, informative, obsolete, t_prev, recording, area
        delivered += 1
        ts = gen_times[msg]
        if ts <= max_ts:
            obsolete += 1
            return
        informative += 1
        max_ts = ts
        if recording:
            occ[len(window)] += t - t_prev
            t_prev = t
        while window and window[0] <= ts:
            window.popleft()
        age = t - ts
        if t >= t_warm:
            if not recording:
                recording = True
                t_prev = t
            else:
                dt = t - times[-1]
                area += (ages[-1] + 0.5 * dt) * dt
            ages.append(age)
            times.append(t)
            occ_last[:] = occ

    for msg in range(n):
        g = float(gen_times[msg])
        while in_flight and in_flight[0][0] < g:
            t_dlv, m_dlv = heapq.heappop(in_flight)
            on_delivery(t_dlv, m_dlv)
        if len(window) < imax:
            if recording:
                occ[len(window)] += g - t_prev
                t_prev = g
            window.append(g)
            heapq.heappush(in_flight, (g + float(delays[msg]), msg))
        else:
            dropped += 1
    while in_flight and in_flight[0][0] <= horizon:
        t_dlv, m_dlv = heapq.heappop(in_flight)
        on_delivery(t_dlv, m_dlv)

    counters = {
        "generated": n,
        "dropped": dropped,
        "admitted": n - dropped,
        "delivered": delivered,
        "informative": informative,
        "obsolete": obsolete,
        "in_flight_end": n - dropped - delivered,
    }
    times_a = np.asarray(times)
    ages_a = np.asarray(ages)
    if len(times_a) >= 2:
        span = float(times_a[-1] - times_a[0])
        mean_timeavg = area / span
        mean_palm = _palm_mean(ages_a, times_a)
    else:
        mean_timeavg = mean_palm = math.nan
    return SimResult(config, ages_a, times_a, mean_timeavg, mean_palm,
                     occ_last.copy(), counters)


def _palm_mean(ages: np.ndarray, times: np.ndarray) -> float:
    dt = np.diff(times)
    cycle_terms = ages[:-1] * dt + 0.5 * dt * dt
    return math.fsum(cycle_terms) / (times[-1] - times[0])


def estimate_mean_palm(result: SimResult) -> float:
    """Per-cycle estimator: sum of ``A dT + dT^2/2`` over the window length.

    Equals the empirical arrival intensity times the empirical per-cycle
    expectation, and coincides with the exact time average of the sawtooth.
    """
    if len(result.informative_times) < 2:
        raise InsufficientDataError(
            "need at least 2 informative arrivals for the cycle estimator")
    return _palm_mean(result.informative_ages, result.informative_times)


def empirical_age_cdf(result: SimResult, x: float) -> float:
    """Exact time-average CDF of the sawtooth path at ``x``.

    Over a cycle starting at age ``A`` and lasting ``dT``, the time spent at
    age <= x is ``clip(x - A, 0, dT)``.
    """
    if len(result.informative_times) < 2:
        raise InsufficientDataError("need at least 2 informative arrivals")
    if x < 0:
        return 0.0
    dt = np.diff(result.informative_times)
    below = np.clip(x - result.informative_ages[:-1], 0.0, dt)
    return float(below.sum() / result.horizon)


def mean_age_se(result: SimResult, n_batches: int = 32) -> float:
    """Batch-means standard error of the time-average age.

    Cycles are grouped into contiguous batches; each batch mean is the ratio
    of its area to its duration, which tolerates the sawtooth autocorrelation.
    """
    m = result.n_cycles
    if m < 2 * n_batches:
        raise InsufficientDataError(
            f"need at least {2 * n_batches} cycles for {n_batches} batches, got {m}")
    dt = np.diff(result.informative_times)
    terms = result.informative_ages[:-1] * dt + 0.5 * dt * dt
    edges = np.linspace(0, m, n_batches + 1).astype(int)
    means = np.array([
        terms[a:b].sum() / dt[a:b].sum() for a, b in zip(edges[:-1], edges[1:])
    ])
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def ks_distance(samples: np.ndarray, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance of samples against a CDF."""
    xs = np.sort(np.asarray(samples))
    m = len(xs)
    f = np.array([cdf(x) for x in xs])
    steps = np.arange(1, m + 1) / m
    return float(max(np.max(np.abs(f - steps)), np.max(np.abs(f - steps + 1.0 / m))))
