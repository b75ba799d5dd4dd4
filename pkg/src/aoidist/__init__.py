"""Exact age-of-information distributions for a window-flow-controlled channel.

Messages leave a sender as a Poisson stream, ride independent exponential
one-way delays (so they may overtake each other), and at most ``i_max``
non-obsolete messages are allowed in flight.  This package computes the
stationary distribution of the receiver-side age in closed form -- as
exponential-polynomial densities at arbitrary times and at informative
arrival instants -- and cross-checks it against an exact discrete-event
simulator.
"""

__version__ = "0.1.0"

from .age import (
    AgeDistribution,
    age_ccdf,
    age_cdf,
    age_density,
    age_density_theorem_eval,
    age_mean,
    age_moment,
    age_quantile,
    expectation_of,
)
from .chain import (
    ForwardChain,
    PalmWeights,
    ParameterError,
    ReversedChain,
    SystemParams,
    build_forward,
    build_reversed,
    palm_weights,
)
from .exppoly import ExpPoly, PartialFraction
from .lst import BackwardComponents, ForwardComponents, backward_lsts, forward_lsts
from .palm import PalmJointDensity, age_at_informative, joint_lst, palm_joint
from .sim import (
    InsufficientDataError,
    SimConfig,
    SimResult,
    empirical_age_cdf,
    estimate_mean_palm,
    ks_distance,
    mean_age_se,
    simulate,
)

__all__ = [
    "AgeDistribution", "BackwardComponents", "ExpPoly", "ForwardChain",
    "ForwardComponents", "InsufficientDataError", "PalmJointDensity",
    "PalmWeights", "ParameterError", "PartialFraction", "ReversedChain",
    "SimConfig", "SimResult", "SystemParams",
    "age_at_informative", "age_ccdf", "age_cdf", "age_density",
    "age_density_theorem_eval", "age_mean", "age_moment", "age_quantile",
    "backward_lsts", "build_forward", "build_reversed", "empirical_age_cdf",
    "estimate_mean_palm", "expectation_of", "forward_lsts", "joint_lst",
    "ks_distance", "mean_age_se", "palm_joint", "palm_weights", "simulate",
]
