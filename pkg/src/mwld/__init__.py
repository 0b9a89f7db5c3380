"""Large-deviations rate functions for multi-queue max-weight scheduling
under many-sources scaling, with Monte Carlo validation."""

from .dynamics import ArrivalPath, finite_horizon, settling_time, step, sum_workload, trajectory
from .mc import OverflowEstimate, decay_sweep, estimate_overflow
from .oracle import OracleConfig, brute_force_it, brute_force_projection
from .policies import Policy, select, selection_branches
from .ratefn import (
    BoundPair,
    RateFnOutcome,
    exact_i2,
    it_bounds,
    it_exact,
    it_policy,
    j_rate_fn,
    one_slot_cost,
    path_properties_check,
)
from .regions import RateRegion, contains, max_weight_set, normalized_sum, project, unit_simplex
from .sources import (
    CompoundPoissonExp,
    Custom,
    Deterministic,
    ExpIncrement,
    SourceModel,
    derived_compound_poisson_exp,
    fenchel_legendre,
    path_cost,
    rate_fn_point,
    sample_slot,
)

__version__ = "0.1.0"
