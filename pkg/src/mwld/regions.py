"""Service-rate regions: membership, Euclidean projection, max-weight maximizers.

Two region kinds are supported.  A simplex region is the set
``{r >= 0 : sum_k r_k / C_k <= 1}`` given per-queue peak rates ``C``.  A vertex
polytope is the coordinate-convex hull of a finite vertex list, i.e. the set of
nonnegative vectors dominated by some convex combination of the vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DimensionError, UnsupportedRegion

# Membership tolerance, absolute in normalized coordinates (x_k / C_k).
MEMBERSHIP_TOL = 1e-9

SIMPLEX = "simplex"
VERTEX_POLYTOPE = "vertex_polytope"


def _as_vector(x, k, name="vector"):
    x = np.asarray(x, dtype=float)
    if x.shape != (k,):
        raise DimensionError(f"{name} has shape {x.shape}, expected ({k},)")
    return x


@dataclass(frozen=True)
class RateRegion:
    """Compact, convex, coordinate-convex set of feasible service-rate vectors."""

    kind: str
    capacities: np.ndarray
    vertices: np.ndarray | None = field(default=None)

    @property
    def num_queues(self) -> int:
        return self.capacities.shape[0]

    @staticmethod
    def simplex(capacities) -> "RateRegion":
        c = np.asarray(capacities, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise DimensionError("capacities must be a nonempty 1-d vector")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ValueError("capacities must be positive and finite")
        return RateRegion(SIMPLEX, c)

    @staticmethod
    def vertex_polytope(vertices) -> "RateRegion":
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] == 0:
            raise DimensionError("vertices must be a nonempty (m, K) matrix")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("vertices must be nonnegative and finite")
        caps = v.max(axis=0)
        if np.any(caps <= 0):
            raise ValueError("every coordinate needs a vertex with positive rate")
        return RateRegion(VERTEX_POLYTOPE, caps, v)


def unit_simplex(k: int) -> RateRegion:
    """Normalized region with C = (1, ..., 1)."""
    return RateRegion.simplex(np.ones(k))


def normalized_sum(region: RateRegion, x) -> float:
    """Hat operator: sum_k x_k / C_k.  Only meaningful for simplex regions."""
    if region.kind != SIMPLEX:
        raise UnsupportedRegion("normalized_sum is defined for simplex regions")
    x = _as_vector(x, region.num_queues)
    return float(np.sum(x / region.capacities))


def contains(region: RateRegion, r, tol: float = MEMBERSHIP_TOL) -> bool:
    """Membership test, with absolute tolerance in normalized coordinates."""
    r = _as_vector(r, region.num_queues)
    if not np.all(np.isfinite(r)):
        raise ValueError("membership query requires finite components")
    if np.any(r < -tol * region.capacities):
        return False
    if region.kind == SIMPLEX:
        return float(np.sum(np.maximum(r, 0.0) / region.capacities)) <= 1.0 + tol
    return _polytope_violation(region, r) <= tol


def _polytope_violation(region: RateRegion, x) -> float:
    """Smallest t >= 0 such that x - t*C is dominated by a convex combination
    of the vertices.  Zero (up to LP tolerance) means x is a member."""
    v = region.vertices
    m, k = v.shape
    # variables: (lambda_1..lambda_m, t); minimize t
    c = np.zeros(m + 1)
    c[-1] = 1.0
    # x_k - t*C_k <= (V^T lam)_k   ->  -(V^T lam)_k - t*C_k <= -x_k
    a_ub = np.hstack([-v.T, -region.capacities[:, None]])
    b_ub = -x
    a_eq = np.zeros((1, m + 1))
    a_eq[0, :m] = 1.0
    res = optimize.linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
        bounds=[(0, None)] * m + [(0, None)], method="highs",
    )
    if not res.success:
        raise RuntimeError(f"membership LP failed: {res.message}")
    return float(res.fun)


def project(region: RateRegion, w) -> np.ndarray:
    """Euclidean projection of w >= 0 onto the region."""
    w = _as_vector(w, region.num_queues)
    if np.any(w < 0):
        raise ValueError("projection is defined for nonnegative workloads")
    if region.kind == SIMPLEX:
        return _simplex_project(region.capacities, w)
    if contains(region, w):
        return w.copy()
    return _polytope_project(region, w)


def _simplex_project(c: np.ndarray, w: np.ndarray) -> np.ndarray:
    if float(np.sum(w / c)) <= 1.0:
        return w.copy()
    return _simplex_face_project_batch(c, w[None, :])[0]


def _simplex_face_project_batch(c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Project rows of w (already outside the region) onto the face
    sum_k r_k / C_k = 1: r_k = max(w_k - nu / C_k, 0), water-filling in nu."""
    # Active-set search over the sorted breakpoints nu_k = w_k * C_k.
    theta = w * c  # breakpoint where coordinate k dries out
    order = np.argsort(-theta, axis=1)
    th_sorted = np.take_along_axis(theta, order, axis=1)
    w_sorted = np.take_along_axis(w, order, axis=1)
    c_sorted = np.take_along_axis(np.broadcast_to(c, w.shape), order, axis=1)
    # with the j+1 largest breakpoints active:
    #   nu_j = (sum_{i<=j} w_i/C_i - 1) / sum_{i<=j} C_i^-2
    num = np.cumsum(w_sorted / c_sorted, axis=1) - 1.0
    den = np.cumsum(c_sorted ** -2, axis=1)
    nu = num / den
    # valid when nu_j is below the smallest active breakpoint and at or above the next
    k = w.shape[1]
    next_th = np.concatenate([th_sorted[:, 1:], np.full((w.shape[0], 1), -np.inf)], axis=1)
    valid = (nu <= th_sorted + 1e-12 * np.maximum(th_sorted, 1.0)) \
        & (nu >= next_th - 1e-12 * np.maximum(np.abs(next_th), 1.0))
    first = np.where(valid.any(axis=1), np.argmax(valid, axis=1), k - 1)
    nu_star = nu[np.arange(w.shape[0]), first]
    return np.maximum(w - nu_star[:, None] / c, 0.0)


def _polytope_project(region: RateRegion, w: np.ndarray) -> np.ndarray:
    v = region.vertices
    m, k = v.shape

    def objective(z):
        x = z[:k]
        d = x - w
        g = np.zeros_like(z)
        g[:k] = 2 * d
        return float(d @ d), g

    cons = [
        # x <= V^T lam
        {"type": "ineq",
         "fun": lambda z: v.T @ z[k:] - z[:k],
         "jac": lambda z: np.hstack([-np.eye(k), v.T])},
        {"type": "eq",
         "fun": lambda z: np.sum(z[k:]) - 1.0,
         "jac": lambda z: np.hstack([np.zeros(k), np.ones(m)])},
    ]
    z0 = np.concatenate([np.minimum(w, region.capacities) * 0.5, np.full(m, 1.0 / m)])
    res = optimize.minimize(
        objective, z0, jac=True, method="SLSQP", constraints=cons,
        bounds=[(0, None)] * (k + m),
        options={"maxiter": 500, "ftol": 1e-12},
    )
    if not res.success:
        raise RuntimeError(f"polytope projection failed: {res.message}")
    return np.maximum(res.x[:k], 0.0)


def max_weight_set(region: RateRegion, w, tol: float = MEMBERSHIP_TOL) -> list[np.ndarray]:
    """All extreme points of argmax_{R in region} <R, w> for w >= 0.

    At w = 0 the argmax is the whole region; the full vertex list (including
    the origin) is returned and callers pick a selection via the policy
    tie-break.
    """
    w = _as_vector(w, region.num_queues)
    if np.any(w < 0):
        raise ValueError("max-weight query requires w >= 0")
    k = region.num_queues
    if region.kind == SIMPLEX:
        verts = [np.zeros(k)] + [region.capacities[i] * np.eye(k)[i] for i in range(k)]
    else:
        verts = [np.zeros(k)] + [v.copy() for v in region.vertices]
    scores = np.array([float(v @ w) for v in verts])
    top = scores.max()
    if top <= 0.0:  # w = 0 (or region degenerate along w): whole region ties
        return verts
    # relative tie detection keeps the argmax invariant under scaling of w
    return [v for v, s in zip(verts, scores) if s >= top * (1.0 - tol)]
