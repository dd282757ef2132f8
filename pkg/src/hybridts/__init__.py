"""Generalized time scales, hybrid-system solutions on them, and empirical
Lyapunov stability checks over finite signal ensembles."""

from ._kernels import BACKEND
from .calculus import (
    RealTimeTrace,
    Signal,
    delta_derivative,
    delta_derivatives,
    extend,
    pseudo_distance,
    restrict_signal,
    sample,
)
from .domains import (
    HybridTimeDomain,
    SwitchingSignal,
    embed_switched,
    is_in_H,
    sjr,
    to_gts,
    to_htd,
)
from .hybrid import GapPolicy, HybridSystem, SolverConfig, ViolationReport, is_extension, solve, validate
from .stability import (
    ClassKInf,
    Composition,
    Ensemble,
    Power,
    StabilityReport,
    Table,
    check_attractivity,
    check_corollary1,
    check_k_weak,
    check_strict_decrease,
    check_ugs,
    falsify_c1,
    ugs_bound_from_kweak,
)
from .timescale import (
    GeneralizedTimeScale,
    Lattice,
    Segment,
    continuous_part,
    discrete_part,
    fin,
    gap_points,
    ini,
    is_subinterval,
    restrict,
    sigma,
    truncate_below,
)

__version__ = "0.1.0"
