"""Finite- and infinite-horizon rate functions for work-conserving max-weight,
closed-form bounds, the exact two-slot decomposition, and the GPS/priority
comparison values.

All computations run in capacity-normalized units (each queue scaled by 1/C_k)
and de-normalize at the API boundary.  ``b`` is the workload level whose
decay exponent is sought; the returned value is the minimum arrival-path cost
over all horizons/branch selections that end at ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import policies as pol
from . import regions as rg
from ._branch import B1, B2, exclusion_inf_k1, exclusion_inf_k2
from ._cone import solve_separable
from .dynamics import ArrivalPath
from .errors import DomainError, ResourceError, UpperBoundUndefined
from .griddp import it_grid
from .sources import SourceModel, path_cost, rate_fn_point

BRANCH_CONVEX = "BranchConvex"
GRID_DP = "GridDP"
CLOSED_FORM_I2 = "ClosedFormI2"
BOUND = "Bound"

_BRANCH_U_CAP = 12


@dataclass
class RateFnOutcome:
    value: float
    timescale: int
    optimal_path: ArrivalPath | None
    branch_sequence: list[np.ndarray] | None
    method: str
    truncated: bool = False
    profile: np.ndarray | None = field(default=None, repr=False)


@dataclass
class BoundPair:
    lower: float
    upper: float
    u_lower: int | None = None
    u_upper: int | None = None


def _normalize(model: SourceModel, b, region):
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if np.any(b < 0):
        raise DomainError("b must be nonnegative")
    if region is None:
        return model, b, np.ones(b.shape[0])
    if region.kind != rg.SIMPLEX:
        raise DomainError("rate functions are computed on simplex regions")
    c = region.capacities
    return model.scaled(c), b / c, c


def _kinds(model: SourceModel):
    kinds = [q.cost_kind() for q in model.queues]
    if any(k is None for k in kinds):
        raise ValueError("this engine needs cone-representable per-slot costs; "
                         "use the grid method for custom handles")
    return kinds


def one_slot_cost(model: SourceModel, b) -> float:
    """I_1(b): the cost of receiving exactly b in a single slot."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(sum(rate_fn_point(model, k, b[k]) for k in range(b.shape[0])))


def _services_from_tags(arrivals: np.ndarray, tags) -> list[np.ndarray]:
    """Replay a normalized branch path to recover the service vectors."""
    u = arrivals.shape[1]
    w = arrivals[:, u - 1].copy()
    services = []
    for v in range(u - 1, 0, -1):
        tag = tags[u - 1 - v]
        if tag == B1:
            r = np.array([1.0, 0.0])
        elif tag == B2:
            r = np.array([0.0, 1.0])
        else:
            theta = (w.sum() - 1.0) / 2.0
            r = w - theta
        services.append(r)
        w = w - r + arrivals[:, v - 1]
    services.reverse()  # step 1 first
    return services


def it_exact(model: SourceModel, b, t: int, method: str = BRANCH_CONVEX,
             region=None, delta: float = 0.05) -> RateFnOutcome:
    """Finite-horizon rate function I_t(b).

    BranchConvex solves the scheduler-branch convex programs exactly (K <= 2);
    GridDP runs discretized value iteration (K <= 4, O(delta) error).
    """
    if t < 1:
        raise DomainError("t must be >= 1")
    model_n, b_n, c = _normalize(model, b, region)
    k = b_n.shape[0]
    if method == GRID_DP:
        if k > 4:
            raise DomainError("GridDP supports K <= 4")
        out = it_grid(model_n, b_n, t, delta=delta)
        path = ArrivalPath(out.arrivals * c[:, None])
        services = [s * c for s in out.services]
        return RateFnOutcome(out.value, t, path, services, GRID_DP)
    if method != BRANCH_CONVEX:
        raise ValueError(f"unknown method {method!r}")
    if k > 2:
        raise DomainError("BranchConvex supports K <= 2")
    if t > _BRANCH_U_CAP:
        raise ResourceError(
            f"BranchConvex horizon capped at {_BRANCH_U_CAP}; use GridDP",
            attempted_size=3 ** (t - 1))
    kinds = _kinds(model_n)

    profile = np.empty(t)
    best_val = one_slot_cost(model_n, b_n)
    best_u = 1
    best_arrivals = b_n.reshape(k, 1)
    best_tags: list = []
    profile[0] = best_val
    for u in range(2, t + 1):
        if k == 1:
            res = exclusion_inf_k1(kinds[0], float(b_n[0]), u)
        else:
            res = exclusion_inf_k2(kinds, b_n, u, incumbent=best_val)
        if res.value < best_val:
            best_val = res.value
            best_u = u
            best_arrivals = res.arrivals
            best_tags = res.branches
        profile[u - 1] = best_val
    path = ArrivalPath(best_arrivals * c[:, None])
    if k == 2:
        services = [s * c for s in _services_from_tags(best_arrivals, best_tags)]
    else:
        services = [c.copy() for _ in range(best_u - 1)]
    return RateFnOutcome(best_val, best_u, path, services, BRANCH_CONVEX,
                         profile=profile)


def j_rate_fn(model: SourceModel, b, t_cap: int, region=None) -> RateFnOutcome:
    """Infinite-horizon rate function J(b) = inf_t I_t(b), computed
    sequentially and stopped once the optimizing timescale settles below the
    current horizon.  A cap hit before settling returns the best value so far
    flagged as truncated."""
    if t_cap < 1:
        raise DomainError("t_cap must be >= 1")
    model_n, b_n, c = _normalize(model, b, region)
    k = b_n.shape[0]
    if k > 2:
        raise DomainError("the sequential engine supports K <= 2")
    mean_hat = float(model_n.mean_vector.sum())
    if mean_hat >= 1.0:
        raise DomainError(f"mean vector (normalized sum {mean_hat:g}) must lie "
                          "strictly inside the region for J to be finite")
    kinds = _kinds(model_n)

    best_val = one_slot_cost(model_n, b_n)
    best_u = 1
    best_arrivals = b_n.reshape(k, 1)
    best_tags: list = []
    converged = False
    for t in range(2, t_cap + 1):
        if k == 1:
            res = exclusion_inf_k1(kinds[0], float(b_n[0]), t)
        else:
            res = exclusion_inf_k2(kinds, b_n, t, incumbent=best_val)
        if res.value < best_val:
            best_val, best_u = res.value, t
            best_arrivals, best_tags = res.arrivals, res.branches
        if best_u < t:
            converged = True
            break
    path = ArrivalPath(best_arrivals * c[:, None])
    if k == 2:
        services = [s * c for s in _services_from_tags(best_arrivals, best_tags)]
    else:
        services = [c.copy() for _ in range(best_u - 1)]
    return RateFnOutcome(best_val, best_u, path, services, BRANCH_CONVEX,
                         truncated=not converged)


def it_bounds(model: SourceModel, b, t: int, region=None,
              require_upper: bool = False) -> BoundPair:
    """Closed-form sandwich for I_t(b) at K = 2.

    The lower bound relaxes the excluded-workload paths to their feasible
    total-arrival segment and takes the balanced constant-speed path; the
    upper bound evaluates the explicit constant-speed path that always serves
    the dominant queue (defined only outside the unit box)."""
    if t < 1:
        raise DomainError("t must be >= 1")
    model_n, b_n, _ = _normalize(model, b, region)
    if b_n.shape[0] != 2:
        raise DomainError("bounds are stated for K = 2")
    f = [model_n.queues[k].rate_point for k in range(2)]

    lower = math.inf
    u_lower = None
    for u in range(1, t + 1):
        v1 = min(max(((u - 1) + b_n[1] - b_n[0]) / 2.0, 0.0), u - 1.0)
        p = b_n + np.array([v1, (u - 1) - v1])
        term = u * (f[0](p[0] / u) + f[1](p[1] / u))
        if term < lower:
            lower, u_lower = term, u

    in_unit_box = bool(np.all(b_n < 1.0))
    if in_unit_box:
        if require_upper:
            raise UpperBoundUndefined(f"upper bound needs b outside [0,1)^2, got {b_n}")
        return BoundPair(lower, math.inf, u_lower, None)
    h = np.array([1.0, 0.0]) if b_n[0] >= b_n[1] else np.array([0.0, 1.0])
    upper = math.inf
    u_upper = None
    for u in range(1, t + 1):
        term = u * sum(f[k]((b_n[k] + (u - 1) * h[k]) / u) for k in range(2))
        if term < upper:
            upper, u_upper = term, u
    return BoundPair(lower, upper, u_lower, u_upper)


def exact_i2(model: SourceModel, b, region=None) -> RateFnOutcome:
    """Exact I_2(b) for K = 2 from the explicit three-set decomposition of the
    feasible two-slot paths (serve queue 1, serve queue 2, or project)."""
    model_n, b_n, c = _normalize(model, b, region)
    if b_n.shape[0] != 2:
        raise DomainError("the two-slot decomposition is stated for K = 2")
    kinds = _kinds(model_n)
    costs = [kinds[0], kinds[1], kinds[0], kinds[1]]  # a1q1 a1q2 a2q1 a2q2

    candidates = []
    # serve (1,0): a2 on queue-1 side of the tie, a(0,2] = b + (1,0)
    a_eq = [[1, 0, 1, 0], [0, 1, 0, 1]]
    b_eq = [b_n[0] + 1.0, b_n[1]]
    g = [[0, 0, -1, 0], [0, 0, -1, 1]]
    h = [-1.0, 0.0]
    candidates.append(("A1", a_eq, b_eq, g, h, np.array([1.0, 0.0])))
    # serve (0,1), mirrored
    a_eq = [[1, 0, 1, 0], [0, 1, 0, 1]]
    b_eq = [b_n[0], b_n[1] + 1.0]
    g = [[0, 0, 0, -1], [0, 0, 1, -1]]
    h = [-1.0, 0.0]
    candidates.append(("A2", a_eq, b_eq, g, h, np.array([0.0, 1.0])))
    # projection: a2 in the box above the face, a(0,2] = b + Proj(a2)
    a_eq = [[1, 0, 0.5, 0.5], [0, 1, 0.5, 0.5]]
    b_eq = [b_n[0] + 0.5, b_n[1] + 0.5]
    g = [[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, -1, -1]]
    h = [1.0, 1.0, -1.0]
    candidates.append(("A3", a_eq, b_eq, g, h, None))

    best_val = one_slot_cost(model_n, b_n)
    best_path = b_n.reshape(2, 1)
    best_service = None
    for _, a_eq, b_eq, g, h, service in candidates:
        res = solve_separable(costs, np.array(a_eq, float), np.array(b_eq, float),
                              np.array(g, float), np.array(h, float))
        if res.solved and res.objective < best_val:
            best_val = res.objective
            best_path = np.array([[res.x[0], res.x[2]], [res.x[1], res.x[3]]])
            if service is None:
                a2 = res.x[2:4]
                theta = (a2.sum() - 1.0) / 2.0
                service = a2 - theta
            best_service = service
    u = best_path.shape[1]
    path = ArrivalPath(best_path * c[:, None])
    services = [best_service * c] if best_service is not None else []
    return RateFnOutcome(best_val, u, path, services, CLOSED_FORM_I2)


def it_policy(model: SourceModel, b, t: int, policy: pol.Policy, region=None,
              delta: float = 0.05) -> RateFnOutcome:
    """Finite-horizon rate function under a deterministic comparison scheduler
    (GPS or priority).  The service map is continuous, so no branching: grid
    value iteration, with a continuous polish pass at t = 2 where the
    acceptance comparisons need sub-grid accuracy."""
    if policy.kind not in (pol.GPS, pol.PRIORITY):
        raise ValueError("it_policy compares GPS/priority schedulers; "
                         "use it_exact for max-weight")
    if t < 1:
        raise DomainError("t must be >= 1")
    model_n, b_n, c = _normalize(model, b, region)
    if b_n.shape[0] != 2:
        raise DomainError("policy comparison implemented for K = 2")
    if t == 2:
        val, a2, a1, service = _policy_i2_direct(model_n, b_n, policy)
        path = ArrivalPath(np.column_stack([a1, a2]) * c[:, None])
        return RateFnOutcome(val, 2, path, [service * c], GRID_DP)
    out = it_grid(model_n, b_n, t, policy=policy, delta=delta)
    path = ArrivalPath(out.arrivals * c[:, None])
    return RateFnOutcome(out.value, t, path, [s * c for s in out.services], GRID_DP)


def _policy_i2_direct(model: SourceModel, b: np.ndarray, policy: pol.Policy):
    """min over a2 of cost(a2) + cost(b - [a2 - R(a2)]), solved by a coarse
    grid seed plus Nelder-Mead refinement (the objective is continuous and
    piecewise smooth)."""
    region = rg.unit_simplex(2)
    fq = [model.queues[k].rate_point for k in range(2)]

    def objective(a2):
        if a2[0] < 0 or a2[1] < 0:
            return math.inf
        r = pol.select(policy, region, a2)
        post = np.maximum(a2 - r, 0.0)
        a1 = b - post
        if a1[0] < -1e-12 or a1[1] < -1e-12:
            return math.inf
        a1 = np.maximum(a1, 0.0)
        try:
            return (fq[0](a2[0]) + fq[1](a2[1]) + fq[0](a1[0]) + fq[1](a1[1]))
        except (ValueError, OverflowError):
            return math.inf

    hi = b + 1.0 + 1e-9
    seeds = []
    steps = 33
    for i in range(steps):
        for j in range(steps):
            a2 = np.array([hi[0] * i / (steps - 1), hi[1] * j / (steps - 1)])
            seeds.append((objective(a2), i, j, a2))
    seeds.sort(key=lambda s: (s[0], s[1], s[2]))
    best_val = math.inf
    best_a2 = None

    def consider(a2):
        nonlocal best_val, best_a2
        v = objective(a2)
        if v < best_val:
            best_val = float(v)
            best_a2 = np.array(a2, dtype=float)

    # the service maps kink on the axes {0, 1/2, 1} and at the targets; those
    # exact corners are where local search converges slowest
    specials = sorted({0.0, 0.5, 1.0, float(b[0]), float(b[1]),
                       float(b[0]) + 1.0, float(b[1]) + 1.0,
                       float(model.queues[0].mean), float(model.queues[1].mean)})
    for x in specials:
        for y in specials:
            if x <= hi[0] and y <= hi[1]:
                consider(np.array([x, y]))

    for v, _, _, a2 in seeds[:12]:
        if not math.isfinite(v):
            continue
        start = a2
        for _ in range(2):  # restart once from the winner
            res = optimize.minimize(objective, start, method="Nelder-Mead",
                                    bounds=[(0.0, hi[0]), (0.0, hi[1])],
                                    options={"xatol": 1e-10, "fatol": 1e-13,
                                             "maxiter": 4000, "maxfev": 6000})
            start = np.maximum(res.x, 0.0)
            consider(start)
    if best_a2 is None:  # cost domain excludes every candidate (e.g. b_k = 0
        return math.inf, np.zeros(2), b.copy(), np.zeros(2)  # with log costs)
    r = pol.select(policy, region, best_a2)
    post = np.maximum(best_a2 - r, 0.0)
    a1 = np.maximum(b - post, 0.0)
    return best_val, best_a2, a1, r


@dataclass
class PathPropertiesReport:
    path_cost: float
    constant_cost: float
    constant_is_cheaper: bool
    schur_checked: int
    schur_violations: int


def path_properties_check(model: SourceModel, path: ArrivalPath,
                          endpoint=None) -> PathPropertiesReport:
    """Check the two structural properties of minimum-cost paths: the
    constant-speed path to the same endpoint never costs more, and for equal
    slot totals the split closer to the diagonal never costs more."""
    t = path.horizon
    if endpoint is None:
        endpoint = path.cumulative(t)
    endpoint = np.asarray(endpoint, dtype=float)
    cost = path_cost(model, path)
    const = ArrivalPath(np.tile(endpoint[:, None] / t, (1, t)))
    const_cost = path_cost(model, const)
    ok = const_cost <= cost + 1e-12

    checked = 0
    violations = 0
    if path.num_queues == 2:
        f = [model.queues[k].rate_point for k in range(2)]
        for s in range(1, t + 1):
            d = float(path.slot(s).sum())
            if d <= 0:
                continue
            # ladder from balanced to one-sided splits
            xs = np.linspace(d / 2.0, d, 9)
            costs = [f[0](x) + f[1](d - x) for x in xs]
            for i in range(len(costs) - 1):
                checked += 1
                if costs[i] > costs[i + 1] + 1e-12:
                    violations += 1
    return PathPropertiesReport(cost, const_cost, ok, checked, violations)
