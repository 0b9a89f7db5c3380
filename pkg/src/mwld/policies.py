"""Deterministic scheduler selections: max-weight, work-conserving max-weight,
GPS, and strict priority.

A policy maps the current workload vector to a service-rate vector inside the
region.  Max-weight picks a vertex maximizing ``<R, w>``; its work-conserving
variant serves the Euclidean projection of ``w`` whenever the workload lies in
the open box ``prod_k [0, C_k)``.  GPS and priority are the comparison
schedulers and are only defined on simplex regions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import regions as rg
from .errors import UnsupportedRegion

MAX_WEIGHT = "mw"
WC_MAX_WEIGHT = "wcmw"
GPS = "gps"
PRIORITY = "prio"

LOWEST_INDEX = "lowest"

TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Policy:
    kind: str
    tie_break: object = LOWEST_INDEX  # LOWEST_INDEX or an explicit branch index
    gps_weights: np.ndarray | None = field(default=None)
    priority_order: tuple[int, ...] | None = field(default=None)

    @staticmethod
    def max_weight(tie_break=LOWEST_INDEX) -> "Policy":
        return Policy(MAX_WEIGHT, tie_break)

    @staticmethod
    def wc_max_weight(tie_break=LOWEST_INDEX) -> "Policy":
        return Policy(WC_MAX_WEIGHT, tie_break)

    @staticmethod
    def gps(weights) -> "Policy":
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("GPS weights must be strictly positive and finite")
        return Policy(GPS, gps_weights=w)

    @staticmethod
    def priority(order) -> "Policy":
        order = tuple(int(i) for i in order)
        if sorted(order) != list(range(len(order))):
            raise ValueError("priority order must be a permutation of 0..K-1")
        return Policy(PRIORITY, priority_order=order)


def _in_open_box(w: np.ndarray, c: np.ndarray) -> bool:
    return bool(np.all(w < c))


def _mw_candidates(region: rg.RateRegion, w: np.ndarray) -> list[np.ndarray]:
    cands = rg.max_weight_set(region, w)
    if len(cands) > 1:
        # deterministic ordering: by queue served (largest component first key),
        # i.e. lexicographically by -vector
        cands = sorted(cands, key=lambda v: tuple(-v))
    return cands


def _tie_pick(policy: Policy, cands: list[np.ndarray]) -> np.ndarray:
    if policy.tie_break == LOWEST_INDEX:
        return cands[0]
    idx = int(policy.tie_break)
    if not 0 <= idx < len(cands):
        raise ValueError(f"explicit branch index {idx} out of range ({len(cands)} branches)")
    return cands[idx]


def select(policy: Policy, region: rg.RateRegion, w) -> np.ndarray:
    """Service-rate vector chosen by the policy at workload w."""
    w = np.asarray(w, dtype=float)
    c = region.capacities
    if policy.kind == MAX_WEIGHT:
        return _tie_pick(policy, _mw_candidates(region, w))
    if policy.kind == WC_MAX_WEIGHT:
        if _in_open_box(w, c):
            return rg.project(region, w)
        return _tie_pick(policy, _mw_candidates(region, w))
    if region.kind != rg.SIMPLEX:
        raise UnsupportedRegion(f"{policy.kind} requires a simplex region")
    if policy.kind == GPS:
        return _gps_rates(w / c, policy.gps_weights) * c
    if policy.kind == PRIORITY:
        return _priority_rates(w / c, policy.priority_order) * c
    raise ValueError(f"unknown policy kind {policy.kind!r}")


def _gps_rates(wn: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Work-conserving GPS in normalized units: proportional shares with
    iterative redistribution of the surplus of underloaded queues."""
    k = wn.shape[0]
    if float(wn.sum()) <= 1.0:
        return wn.copy()
    served = np.zeros(k)
    cap = 1.0
    need = wn.copy()
    active = need > 0
    while cap > 1e-15 and active.any():
        share = np.zeros(k)
        share[active] = phi[active] / phi[active].sum() * cap
        grant = np.minimum(share, need)
        served += grant
        need -= grant
        cap -= float(grant.sum())
        newly_done = active & (need <= 1e-15)
        if not newly_done.any():
            break  # nobody capped: capacity fully allocated
        active = active & ~newly_done
    return served


def _priority_rates(wn: np.ndarray, order: tuple[int, ...]) -> np.ndarray:
    rates = np.zeros_like(wn)
    cap = 1.0
    for k in order:
        grant = min(wn[k], cap)
        rates[k] = grant
        cap -= grant
        if cap <= 0:
            break
    return rates


def selection_branches(policy: Policy, region: rg.RateRegion, w) -> list[np.ndarray]:
    """Every extreme selection consistent with the policy at w.

    Work-conserving max-weight is single-valued (the projection) strictly
    inside the box and multi-valued only where tied vertices maximize the
    weight; the rate-function engine must branch over the whole list.
    """
    if policy.kind not in (MAX_WEIGHT, WC_MAX_WEIGHT):
        raise ValueError("selection branches are defined for max-weight policies only")
    w = np.asarray(w, dtype=float)
    if policy.kind == WC_MAX_WEIGHT and _in_open_box(w, region.capacities):
        return [rg.project(region, w)]
    return _mw_candidates(region, w)
