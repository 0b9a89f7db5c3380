"""Workload recursion and finite-horizon workload maps.

Time is indexed in reverse: slot ``s`` of an arrival path carries the work
arriving at physical time ``-s``, so iteration runs ``s = t, t-1, ..., 1`` and
ends with the workload at time 0.  Arrivals land after service in their slot
and cannot be served until the next slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import policies as pol
from . import regions as rg
from .errors import InitError, NoSettlingTime, UnsupportedRegion


@dataclass(frozen=True)
class ArrivalPath:
    """K x t matrix of per-slot work increments; column s-1 is slot s (time -s)."""

    increments: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.increments, dtype=float)
        if a.ndim != 2:
            raise ValueError("increments must be a (K, t) matrix")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("increments must be nonnegative and finite")
        object.__setattr__(self, "increments", a)

    @property
    def num_queues(self) -> int:
        return self.increments.shape[0]

    @property
    def horizon(self) -> int:
        return self.increments.shape[1]

    def slot(self, s: int) -> np.ndarray:
        """Arrival vector at time -s, s in 1..t."""
        return self.increments[:, s - 1]

    def suffix(self, s: int) -> "ArrivalPath":
        """Slots (s, t], i.e. the arrivals strictly before time -s."""
        return ArrivalPath(self.increments[:, s:])

    def cumulative(self, u: int) -> np.ndarray:
        """a(0, u] = sum of slots 1..u."""
        return self.increments[:, :u].sum(axis=1)

    def records(self) -> list[tuple[int, int, float]]:
        """(slot, queue, work) rows for CSV serialization (1-based queues)."""
        return [(s, k + 1, float(self.increments[k, s - 1]))
                for s in range(1, self.horizon + 1)
                for k in range(self.num_queues)]


def step(w, a_slot, policy: pol.Policy, region: rg.RateRegion) -> np.ndarray:
    """One slot of the workload recursion: [w - R(w)]^+ + a."""
    w = np.asarray(w, dtype=float)
    a = np.asarray(a_slot, dtype=float)
    r = pol.select(policy, region, w)
    return np.maximum(w - r, 0.0) + a


def finite_horizon(path: ArrivalPath, policy: pol.Policy, region: rg.RateRegion,
                   w_init=None) -> np.ndarray:
    """Workload at time 0 from initial workload at time -t (default empty)."""
    return trajectory(path, policy, region, w_init)[-1]


def trajectory(path: ArrivalPath, policy: pol.Policy, region: rg.RateRegion,
               w_init=None) -> list[np.ndarray]:
    """Workload vectors (W_t, W_{t-1}, ..., W_0) along the path."""
    k = path.num_queues
    if w_init is None:
        w = np.zeros(k)
    else:
        w = np.asarray(w_init, dtype=float)
        if w.shape != (k,):
            raise InitError(f"w_init has shape {w.shape}, expected ({k},)")
        if np.any(w < 0):
            raise InitError("w_init must be nonnegative")
        if policy.kind == pol.WC_MAX_WEIGHT:
            # valid start only from inside the region: the first slot then
            # drains it completely and the zero-init workload map applies
            if not rg.contains(region, w):
                raise InitError("work-conserving start requires w_init inside the region")
        elif np.any(w > 0):
            raise InitError(f"policy {policy.kind!r} requires an empty initial workload")
    states = [w]
    for s in range(path.horizon, 0, -1):
        w = step(w, path.slot(s), policy, region)
        states.append(w)
    return states


def sum_workload(path: ArrivalPath, region: rg.RateRegion) -> float:
    """Normalized sum workload at time 0 under work-conserving max-weight:
    max_{1<=u<=t} a_hat(0,u] - (u-1)."""
    if region.kind != rg.SIMPLEX:
        raise UnsupportedRegion("sum workload reduction requires a simplex region")
    if path.horizon == 0:
        return 0.0
    hat = (path.increments / region.capacities[:, None]).sum(axis=0)
    cum = np.cumsum(hat)
    u = np.arange(1, path.horizon + 1)
    return float(np.max(cum - (u - 1)))


def settling_time(path: ArrivalPath, region: rg.RateRegion) -> int:
    """Smallest s such that the workload at time -s computed from the tail
    slots (s, t] under work-conserving max-weight lies inside the region.

    s = t always qualifies vacuously (the tail is empty and the initial
    workload is zero), mirroring the cap in the finite-horizon reduction.
    """
    if region.kind != rg.SIMPLEX:
        raise UnsupportedRegion("settling time requires a simplex region")
    t = path.horizon
    if t < 1:
        raise NoSettlingTime("empty horizon")
    policy = pol.Policy.wc_max_weight()
    for s in range(1, t):
        w_s = finite_horizon(path.suffix(s), policy, region)
        if rg.contains(region, w_s):
            return s
    return t
