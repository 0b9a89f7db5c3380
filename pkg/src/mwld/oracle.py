"""Independent brute-force ground truth on small instances.

Enumerates every arrival path on a regular grid, pushes it through the actual
scheduler dynamics with every allowed branch choice, keeps the paths whose
terminal workload lands within a tolerance of the target, and reports the
cheapest.  Shares nothing with the rate-function engine beyond the region and
policy primitives, so agreement between the two is a meaningful check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import policies as pol
from . import regions as rg
from .errors import ResourceError

_DEFAULT_BUDGET = 1e8


@dataclass(frozen=True)
class OracleConfig:
    grid_step: float = 0.02
    max_horizon: int = 3
    max_coordinate: float = 7.0
    target_tolerance: float = 0.05
    budget: float = _DEFAULT_BUDGET

    def __post_init__(self):
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if self.max_horizon > 3:
            raise ValueError("oracle horizons are capped at 3")


@dataclass
class OracleResult:
    value: float
    arrivals: np.ndarray | None  # (K, t) grid path, column s-1 = slot s


def _grid(config: OracleConfig) -> np.ndarray:
    n = int(math.floor(config.max_coordinate / config.grid_step + 1e-9)) + 1
    return np.arange(n) * config.grid_step


def _window_indices(target: float, tol: float, delta: float, n: int) -> np.ndarray:
    lo = int(math.ceil((target - tol) / delta - 1e-9))
    hi = int(math.floor((target + tol) / delta + 1e-9))
    lo = max(lo, 0)
    hi = min(hi, n - 1)
    if hi < lo:
        return np.empty(0, dtype=np.int64)
    return np.arange(lo, hi + 1)


def brute_force_it(model, b, t: int, config: OracleConfig) -> float:
    return brute_force_it_path(model, b, t, config).value


def brute_force_it_path(model, b, t: int, config: OracleConfig) -> OracleResult:
    """Minimum grid-path cost reaching within target_tolerance of b in t slots
    under work-conserving max-weight on the unit simplex (K = 2)."""
    b = np.asarray(b, dtype=float)
    if b.shape != (2,):
        raise ValueError("the oracle enumerates K = 2 instances")
    if t > config.max_horizon:
        raise ValueError(f"t={t} exceeds the configured horizon cap")
    grid = _grid(config)
    n = grid.shape[0]
    f1 = model.queues[0].rate_points(grid)
    f2 = model.queues[1].rate_points(grid)
    tol = config.target_tolerance

    if t == 1:
        i1 = _window_indices(b[0], tol, config.grid_step, n)
        i2 = _window_indices(b[1], tol, config.grid_step, n)
        if i1.size == 0 or i2.size == 0:
            return OracleResult(math.inf, None)
        costs = f1[i1][:, None] + f2[i2][None, :]
        k = np.unravel_index(np.argmin(costs), costs.shape)
        return OracleResult(float(costs[k]),
                            np.array([[grid[i1[k[0]]]], [grid[i2[k[1]]]]]))

    if t == 2:
        if n * n * ((2 * tol / config.grid_step + 2) ** 2) > config.budget:
            raise ResourceError("t=2 oracle enumeration exceeds the budget",
                                attempted_size=n * n)
        return _brute_t2(model, b, config, grid, f1, f2)

    # t = 3: python loop over the first slot, vectorized t=2 core inside
    est = n * n * n * n
    if est > config.budget:
        raise ResourceError("t=3 oracle enumeration exceeds the budget",
                            attempted_size=est)
    policy = pol.Policy.wc_max_weight()
    region = rg.unit_simplex(2)
    best = OracleResult(math.inf, None)
    for i3 in range(n):
        for j3 in range(n):
            a3 = np.array([grid[i3], grid[j3]])
            c3 = float(f1[i3] + f2[j3])
            if c3 >= best.value:
                continue
            for r in pol.selection_branches(policy, region, a3):
                w1 = np.maximum(a3 - r, 0.0)
                sub = _brute_t2(model, b, config, grid, f1, f2, w_init=w1)
                if c3 + sub.value < best.value:
                    arr = np.column_stack([sub.arrivals, a3])
                    best = OracleResult(c3 + sub.value, arr)
    return best


def _brute_t2(model, b, config, grid, f1, f2, w_init=None) -> OracleResult:
    """Vectorized two-slot search: enumerate the first slot on the grid,
    branch over scheduler selections, and close with a window around the
    arrivals that land on b."""
    region = rg.unit_simplex(2)
    delta = config.grid_step
    tol = config.target_tolerance
    n = grid.shape[0]
    idx1, idx2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i1 = idx1.ravel()
    i2 = idx2.ravel()
    start = np.zeros(2) if w_init is None else w_init
    w1 = start[0] + grid[i1]
    w2 = start[1] + grid[i2]
    base = f1[i1] + f2[i2]

    posts = _branch_posts(w1, w2)
    best_val = math.inf
    best = None
    # +1 so boundary points exactly at the tolerance survive the rounding of
    # the window center; the validity mask below does the exact filtering
    half = int(math.floor(tol / delta + 1e-9)) + 1
    off1 = np.arange(-half, half + 1)
    for p1, p2, mask in posts:
        if not mask.any():
            continue
        t1 = b[0] - p1[mask]
        t2 = b[1] - p2[mask]
        c0 = base[mask]
        m1 = np.rint(t1 / delta).astype(np.int64)
        m2 = np.rint(t2 / delta).astype(np.int64)
        for d1 in off1:
            k1 = m1 + d1
            ok1 = (k1 >= 0) & (k1 < n) & (np.abs(k1 * delta - t1) <= tol + 1e-12)
            if not ok1.any():
                continue
            for d2 in off1:
                k2 = m2 + d2
                ok = ok1 & (k2 >= 0) & (k2 < n) & (np.abs(k2 * delta - t2) <= tol + 1e-12)
                if not ok.any():
                    continue
                cost = c0[ok] + f1[np.clip(k1[ok], 0, n - 1)] + f2[np.clip(k2[ok], 0, n - 1)]
                j = int(np.argmin(cost))
                if cost[j] < best_val:
                    best_val = float(cost[j])
                    rows = np.nonzero(mask)[0][np.nonzero(ok)[0][j]]
                    best = (rows, int(k1[ok][j]), int(k2[ok][j]))
    if best is None:
        return OracleResult(math.inf, None)
    row, k1b, k2b = best
    a2 = np.array([grid[i1[row]], grid[i2[row]]])
    a1 = np.array([grid[k1b], grid[k2b]])
    return OracleResult(best_val, np.column_stack([a1, a2]))


def _branch_posts(w1: np.ndarray, w2: np.ndarray):
    """Post-service workloads for every WC max-weight branch on the unit
    simplex, vectorized over states (mirrors selection_branches)."""
    s_hat = w1 + w2
    in_region = s_hat <= 1.0 + 1e-12
    in_box = (w1 < 1.0) & (w2 < 1.0)
    zeros = np.zeros_like(w1)
    posts = [(zeros, zeros, in_region & in_box)]
    theta = np.maximum((s_hat - 1.0) / 2.0, 0.0)
    posts.append((theta, theta, in_box & ~in_region))
    outside = ~in_box
    serve1 = w1 >= w2
    posts.append((np.where(serve1, np.maximum(w1 - 1.0, 0.0), w1),
                  np.where(serve1, w2, np.maximum(w2 - 1.0, 0.0)),
                  outside))
    tie = outside & (w1 == w2)
    posts.append((w1 * 1.0, np.maximum(w2 - 1.0, 0.0), tie))
    return posts


def brute_force_projection(region, w, delta: float) -> np.ndarray:
    """Grid search for the Euclidean projection, validating region.project."""
    w = np.asarray(w, dtype=float)
    k = w.shape[0]
    hi = np.maximum(region.capacities.max(), w.max()) + delta
    axes = [np.arange(0.0, hi, delta)] * k
    if np.prod([a.size for a in axes]) > _DEFAULT_BUDGET:
        raise ResourceError("projection grid too large")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if region.kind == rg.SIMPLEX:
        member = (pts / region.capacities).sum(axis=1) <= 1.0 + 1e-12
    else:
        member = np.array([rg.contains(region, p) for p in pts])
    pts = pts[member]
    d = ((pts - w) ** 2).sum(axis=1)
    return pts[int(np.argmin(d))]


def cost_modulus(model, k: int, hi: float, h: float, samples: int = 4000) -> float:
    """Modulus of continuity sup_{x in [0, hi]} |f(x+h) - f(x)| of queue k's
    per-slot cost, estimated on a fine grid.  Used to convert oracle grid
    resolution into an honest value tolerance."""
    xs = np.linspace(0.0, hi, samples)
    f = model.queues[k].rate_points
    return float(np.max(np.abs(f(xs + h) - f(xs))))


def agreement_slack(model, t: int, config: OracleConfig, box_hi: float | None = None) -> float:
    """Two-sided tolerance for |engine - oracle|: grid rounding moves every
    path entry by at most the step (compounded over slots by the dynamics) and
    the terminal match is only within target_tolerance."""
    hi = box_hi if box_hi is not None else config.max_coordinate
    k = model.num_queues
    slack = 0.0
    for q in range(k):
        slack += t * cost_modulus(model, q, hi, t * config.grid_step)
        slack += cost_modulus(model, q, hi, config.target_tolerance)
    return slack + 1e-9
