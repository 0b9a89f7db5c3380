"""Separable-convex conic solver on Clarabel.

Solves  min sum_j f_j(x_j)  s.t.  A_eq x = b_eq,  G x <= h,  x >= 0,
where each f_j is one of the cost kinds declared in :mod:`mwld.sources`
(sqrt-affine, exp-log, quadratic, pinned).  Square roots become second-order
cones and logs exponential cones; the solve is deterministic and runs to
Clarabel's default 1e-8 gap/feasibility tolerances, matching the engine's
objective tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import clarabel
from scipy import sparse

from .sources import EXP_LOG, PINNED, QUADRATIC, SQRT_AFFINE

_SETTINGS = clarabel.DefaultSettings()
_SETTINGS.verbose = False

_OK = {"Solved", "AlmostSolved"}
_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}


@dataclass
class ConeResult:
    status: str
    x: np.ndarray | None
    objective: float

    @property
    def solved(self) -> bool:
        return self.status in _OK


def kind_value(kind, x: float) -> float:
    """Evaluate a cost kind at a point (for verification and reporting)."""
    tag = kind[0]
    if tag == SQRT_AFFINE:
        _, a, b, g = kind
        return a * x - b * math.sqrt(max(x, 0.0)) + g
    if tag == EXP_LOG:
        nu = kind[1]
        if x <= 0:
            return math.inf
        return nu * x - 1.0 - math.log(nu * x)
    if tag == QUADRATIC:
        _, a, m = kind
        return a * (x - m) ** 2
    if tag == PINNED:
        return 0.0 if abs(x - kind[1]) <= 1e-9 * max(1.0, abs(kind[1])) else math.inf
    raise ValueError(f"unknown cost kind {tag!r}")


def solve_separable(costs, a_eq, b_eq, g_ub=None, h_ub=None) -> ConeResult:
    """Minimize the separable cost over {A_eq x = b_eq, G x <= h, x >= 0}.

    ``costs`` is a sequence of cost-kind tuples, one per variable.
    """
    n = len(costs)
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float)) if a_eq is not None else np.zeros((0, n))
    b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float)) if b_eq is not None else np.zeros(0)
    g_ub = np.atleast_2d(np.asarray(g_ub, dtype=float)) if g_ub is not None else np.zeros((0, n))
    h_ub = np.atleast_1d(np.asarray(h_ub, dtype=float)) if h_ub is not None else np.zeros(0)

    sqrt_idx = [j for j, k in enumerate(costs) if k[0] == SQRT_AFFINE and k[2] != 0.0]
    log_idx = [j for j, k in enumerate(costs) if k[0] == EXP_LOG]
    ns, nl = len(sqrt_idx), len(log_idx)
    nvar = n + ns + nl
    s_of = {j: n + i for i, j in enumerate(sqrt_idx)}
    t_of = {j: n + ns + i for i, j in enumerate(log_idx)}

    q = np.zeros(nvar)
    p_diag = np.zeros(nvar)
    const = 0.0
    pin_rows, pin_vals = [], []
    for j, kind in enumerate(costs):
        tag = kind[0]
        if tag == SQRT_AFFINE:
            _, a, b, g = kind
            q[j] += a
            const += g
            if b != 0.0:
                q[s_of[j]] -= b
        elif tag == EXP_LOG:
            nu = kind[1]
            q[j] += nu
            const -= 1.0
            q[t_of[j]] -= 1.0
        elif tag == QUADRATIC:
            _, a, m = kind
            p_diag[j] += 2.0 * a  # clarabel minimizes (1/2) x'Px + q'x
            q[j] += -2.0 * a * m
            const += a * m * m
        elif tag == PINNED:
            pin_rows.append(j)
            pin_vals.append(kind[1])
        else:
            raise ValueError(f"unknown cost kind {tag!r}")

    rows_i, cols_i, vals = [], [], []
    b_parts = []
    cones = []
    r = 0

    def add_row(coeffs, rhs):
        nonlocal r
        for c, v in coeffs:
            rows_i.append(r)
            cols_i.append(c)
            vals.append(v)
        b_parts.append(rhs)
        r += 1

    # equalities: given rows, then pinned variables
    for i in range(a_eq.shape[0]):
        add_row([(j, a_eq[i, j]) for j in range(n) if a_eq[i, j] != 0.0], b_eq[i])
    for j, v in zip(pin_rows, pin_vals):
        add_row([(j, 1.0)], v)
    n_eq = r
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))

    # inequalities G x <= h, then x >= 0
    for i in range(g_ub.shape[0]):
        add_row([(j, g_ub[i, j]) for j in range(n) if g_ub[i, j] != 0.0], h_ub[i])
    for j in range(n):
        add_row([(j, -1.0)], 0.0)
    n_in = r - n_eq
    if n_in:
        cones.append(clarabel.NonnegativeConeT(n_in))

    # s_j <= sqrt(x_j):  (x_j + 1, 2 s_j, x_j - 1) in Q^3
    for j in sqrt_idx:
        add_row([(j, -1.0)], 1.0)
        add_row([(s_of[j], -2.0)], 0.0)
        add_row([(j, -1.0)], -1.0)
        cones.append(clarabel.SecondOrderConeT(3))

    # t_j <= log(nu x_j):  (t_j, 1, nu x_j) in K_exp
    for j in log_idx:
        nu = costs[j][1]
        add_row([(t_of[j], -1.0)], 0.0)
        add_row([], 1.0)
        add_row([(j, -nu)], 0.0)
        cones.append(clarabel.ExponentialConeT())

    a_mat = sparse.csc_matrix((vals, (rows_i, cols_i)), shape=(r, nvar))
    b_vec = np.array(b_parts)
    p_mat = sparse.diags(p_diag, format="csc") if p_diag.any() else sparse.csc_matrix((nvar, nvar))

    solver = clarabel.DefaultSolver(p_mat, q, a_mat, b_vec, cones, _SETTINGS)
    sol = solver.solve()
    status = str(sol.status)
    if status in _OK:
        x = np.maximum(np.asarray(sol.x[:n]), 0.0)
        x = _repair(x, costs, a_eq, b_eq, pin_rows, pin_vals)
        # report the true separable objective at the solution rather than the
        # conic surrogate, so values are consistent with kind_value
        obj = float(sum(kind_value(k, xi) for k, xi in zip(costs, x)))
        return ConeResult(status, x, obj)
    if status in _INFEASIBLE:
        return ConeResult(status, None, math.inf)
    raise RuntimeError(f"conic solve ended with status {status}")


def _repair(x, costs, a_eq, b_eq, pin_rows, pin_vals):
    """Restore the equality constraints exactly and zero out stray slack.

    The solver's 1e-9 feasibility tolerance would otherwise leak into the
    reported objective through the infinite slope of sqrt-type costs at zero
    (a 1e-9 equality slack re-invested at the cusp buys ~1e-7 of cost)."""
    n = x.shape[0]
    m_eq = a_eq.shape[0] + len(pin_rows)
    if m_eq == 0:
        x[x < 1e-9] = 0.0
        return x
    e = np.zeros((m_eq, n))
    d = np.zeros(m_eq)
    e[: a_eq.shape[0]] = a_eq
    d[: a_eq.shape[0]] = b_eq
    for i, (j, v) in enumerate(zip(pin_rows, pin_vals)):
        e[a_eq.shape[0] + i, j] = 1.0
        d[a_eq.shape[0] + i] = v
    for _ in range(3):
        x[np.abs(x) < 1e-9] = 0.0
        free = x > 0.0
        if not free.any():
            break
        r = d - e @ x
        if np.max(np.abs(r)) < 1e-14:
            break
        ef = e[:, free]
        corr, *_ = np.linalg.lstsq(ef, r, rcond=None)
        x[free] += corr
    np.maximum(x, 0.0, out=x)
    if pin_rows:
        x[pin_rows] = pin_vals
    return x
