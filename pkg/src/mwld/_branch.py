"""Exact finite-horizon rate-function terms by scheduler-branch enumeration.

For K = 2 in capacity-normalized units, every length-u arrival path whose
intermediate workloads stay outside the region admits an affine description
once the scheduler branch taken at each step is fixed:

  B1: serve (1,0)        valid when W1 >= 1 and W1 >= W2
  B2: serve (0,1)        valid when W2 >= 1 and W2 >= W1
  B3: serve the face projection    valid when W <= (1,1) and W1+W2 >= 1

(inside the unit box the projection never clips, so B3 needs no sub-cases).
Each branch sequence yields one convex program: separable per-slot costs,
affine equalities pinning the terminal workload to b, and affine inequalities
for branch validity.  The exact term  inf over paths excluded from the region
is the minimum over all 3^(u-1) sequences; a depth-first search prunes
subtrees whose Jensen-style lower bounds cannot beat the incumbent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._cone import kind_value, solve_separable

B1, B2, B3 = "B1", "B2", "B3"
_PRUNE_EPS = 1e-11

_S_AVG = np.array([[0.5, 0.5], [0.5, 0.5]])


@dataclass
class BranchStats:
    nodes: int = 0
    solves: int = 0
    pruned: int = 0


@dataclass
class ExclusionResult:
    value: float
    arrivals: np.ndarray | None     # (K, u) argmin path, or None if no sequence beat the incumbent
    branches: list[str] | None
    stats: BranchStats


def _convex_min_on_interval(g, lo: float, hi: float, iters: int = 64) -> float:
    """Golden-section minimum of a convex scalar function on [lo, hi]."""
    if hi <= lo:
        return g(lo)
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(iters):
        if gc <= gd:
            b, d, gd = d, c, gc
            c = b - inv_phi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + inv_phi * (b - a)
            gd = g(d)
    m = 0.5 * (a + b)
    return min(g(m), gc, gd)


class _Bounds:
    """Shared lower-bound machinery for one (b, u) instance."""

    def __init__(self, kinds, b, u):
        self.kinds = kinds
        self.b = b
        self.u = u
        self.identical = kinds[0] == kinds[1] if len(kinds) == 2 else True
        self.total_hat = float(b.sum()) + u - 1  # normalized service is 1 per step

    def _per_queue(self, s1: float) -> float:
        u, b = self.u, self.b
        s1 = min(max(s1, 0.0), u - 1.0)
        return u * (kind_value(self.kinds[0], (b[0] + s1) / u)
                    + kind_value(self.kinds[1], (b[1] + (u - 1 - s1)) / u))

    def count_bound(self, n1: int, n2: int, m: int) -> float:
        """Jensen relaxation: only the split of total service between the
        queues is kept.  Queue 1 receives between n1 and n1 + m + rem units."""
        u = self.u
        rem = (u - 1) - n1 - n2 - m
        lo = float(n1)
        hi = float(min(n1 + m + rem, (u - 1) - n2))
        if hi < lo:
            return math.inf
        if self.identical:
            s_star = 0.5 * (self.b[1] - self.b[0] + u - 1)
            return self._per_queue(min(max(s_star, lo), hi))
        return _convex_min_on_interval(self._per_queue, lo, hi, iters=48)

    def window_bound(self, b3_step: int) -> float:
        """Per-slot-balanced relaxation keyed to one committed projection step:
        the box membership at step i forces the cumulative normalized arrivals
        over slots 1..i into [b_hat + i - 2, b_hat + i - 1]."""
        if not self.identical:
            return -math.inf
        u, i = self.u, b3_step
        kind = self.kinds[0]
        b_hat = float(self.b.sum())
        lo = max(b_hat + i - 2.0, 0.0)
        hi = min(b_hat + i - 1.0, self.total_hat)
        if lo > hi + 1e-12:
            return math.inf  # projection step impossible at this depth
        if i == u:  # no later slots; degenerate
            return -math.inf

        def g(t):
            return (2 * i * kind_value(kind, t / (2 * i))
                    + 2 * (u - i) * kind_value(kind, (self.total_hat - t) / (2 * (u - i))))

        t_star = self.total_hat * i / u
        if lo <= t_star <= hi:
            return g(t_star)
        return g(lo if t_star < lo else hi)


class _Node:
    __slots__ = ("m_map", "offset", "rows", "rhs", "n1", "n2", "b3_steps")

    def __init__(self, m_map, offset, rows, rhs, n1, n2, b3_steps):
        self.m_map = m_map
        self.offset = offset
        self.rows = rows
        self.rhs = rhs
        self.n1 = n1
        self.n2 = n2
        self.b3_steps = b3_steps


def _child(node: _Node, branch: str, v: int, u: int) -> _Node:
    """Commit a branch for step v (state W_v), producing the W_{v-1} map."""
    m, o = node.m_map, node.offset
    rows = list(node.rows)
    rhs = list(node.rhs)
    if branch == B1:
        rows.append(-m[0]); rhs.append(o[0] - 1.0)          # W1 >= 1
        rows.append(m[1] - m[0]); rhs.append(o[0] - o[1])   # W1 >= W2
        m2 = m.copy(); o2 = o - np.array([1.0, 0.0])
    elif branch == B2:
        rows.append(-m[1]); rhs.append(o[1] - 1.0)
        rows.append(m[0] - m[1]); rhs.append(o[1] - o[0])
        m2 = m.copy(); o2 = o - np.array([0.0, 1.0])
    else:
        rows.append(m[0]); rhs.append(1.0 - o[0])           # W1 <= 1
        rows.append(m[1]); rhs.append(1.0 - o[1])           # W2 <= 1
        rows.append(-(m[0] + m[1])); rhs.append(o[0] + o[1] - 1.0)  # W1+W2 >= 1
        m2 = _S_AVG @ m; o2 = _S_AVG @ o - 0.5
    # arrivals of slot v land after the service of step v
    m2 = m2.copy()
    m2[0, 2 * (v - 1)] += 1.0
    m2[1, 2 * (v - 1) + 1] += 1.0
    return _Node(m2, o2,
                 rows, rhs,
                 node.n1 + (branch == B1), node.n2 + (branch == B2),
                 node.b3_steps + ((v,) if branch == B3 else ()))


def _root(u: int) -> _Node:
    m = np.zeros((2, 2 * u))
    m[0, 2 * (u - 1)] = 1.0   # W_{u-1} = a_u
    m[1, 2 * (u - 1) + 1] = 1.0
    return _Node(m, np.zeros(2), [], [], 0, 0, ())


def _solve_leaf(costs, node: _Node, b) -> tuple[float, np.ndarray | None]:
    res = solve_separable(
        costs,
        node.m_map, b - node.offset,
        np.array(node.rows) if node.rows else None,
        np.array(node.rhs) if node.rhs else None,
    )
    return res.objective, res.x


def exclusion_inf_k2(kinds, b, u: int, incumbent: float = math.inf) -> ExclusionResult:
    """inf of the path cost over length-u paths hitting b with every
    intermediate workload outside the region (K = 2, unit capacities).

    ``incumbent`` is a pruning threshold: the returned value is exact whenever
    it is below the incumbent, otherwise it only certifies that the true
    infimum is not below the incumbent (running-minimum callers need no more).
    """
    b = np.asarray(b, dtype=float)
    stats = BranchStats()
    if u == 1:
        # single-slot path: the only candidate is a_1 = b
        val = sum(kind_value(kinds[k], b[k]) for k in range(2))
        return ExclusionResult(val, b.reshape(2, 1), [], stats)
    costs = [kinds[s % 2] for s in range(2 * u)]  # var 2(s-1)+k is slot s, queue k
    bounds = _Bounds(kinds, b, u)

    best = math.inf
    best_x = None
    best_tags = None

    def try_leaf(node, tags):
        nonlocal best, best_x, best_tags, incumbent
        stats.solves += 1
        val, x = _solve_leaf(costs, node, b)
        if val < best:
            best, best_x, best_tags = val, x, list(tags)
            incumbent = min(incumbent, best)

    # canonical sequences seed the incumbent before the full search
    seeded = set()
    for tags in ([B1] * (u - 1), [B2] * (u - 1), [B3] * (u - 1)):
        node = _root(u)
        for depth, tag in enumerate(tags):
            node = _child(node, tag, u - 1 - depth, u)
        try_leaf(node, tags)
        seeded.add(tuple(tags))

    def dfs(node, v, tags):
        nonlocal best
        stats.nodes += 1
        lb = bounds.count_bound(node.n1, node.n2, len(node.b3_steps))
        if node.b3_steps:
            lb = max(lb, max(bounds.window_bound(i) for i in node.b3_steps))
        if lb >= incumbent - _PRUNE_EPS:
            stats.pruned += 1
            return
        if v == 0:
            if tuple(tags) not in seeded:
                try_leaf(node, tags)
            return
        for tag in (B1, B2, B3):
            dfs(_child(node, tag, v, u), v - 1, tags + [tag])

    dfs(_root(u), u - 1, [])

    if best_x is None:
        return ExclusionResult(math.inf, None, None, stats)
    arrivals = np.empty((2, u))
    for s in range(1, u + 1):
        arrivals[0, s - 1] = best_x[2 * (s - 1)]
        arrivals[1, s - 1] = best_x[2 * (s - 1) + 1]
    return ExclusionResult(best, arrivals, best_tags, stats)


def exclusion_inf_k1(kind, b: float, u: int) -> ExclusionResult:
    """Single-queue case: a unique branch (serve 1) per step, so one program
    with the cumulative-arrival exclusion constraints."""
    stats = BranchStats()
    if u == 1:
        return ExclusionResult(kind_value(kind, b), np.array([[b]]), [], stats)
    costs = [kind] * u
    a_eq = np.ones((1, u))
    b_eq = np.array([b + u - 1.0])
    # W_v = b + v - a(0, v] >= 1  for v = 1..u-1
    rows = np.zeros((u - 1, u))
    rhs = np.zeros(u - 1)
    for v in range(1, u):
        rows[v - 1, :v] = 1.0
        rhs[v - 1] = b + v - 1.0
    stats.solves = 1
    res = solve_separable(costs, a_eq, b_eq, rows, rhs)
    if not res.solved:
        return ExclusionResult(math.inf, None, None, stats)
    return ExclusionResult(res.objective, res.x.reshape(1, u), [B1] * (u - 1), stats)
