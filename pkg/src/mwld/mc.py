"""Monte Carlo estimation of finite-horizon overflow probabilities under
many-sources scaling.

Plain Monte Carlo with Wilson confidence intervals; replicates are chunked
into fixed-size blocks whose arrival draws come from counter-based streams
keyed by (seed, queue, slot, block), so estimates are bit-reproducible and
independent of worker scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import policies as pol
from . import regions as rg
from .sources import SourceModel, sample_matrix

_BLOCK = 262144  # replicates per seeding block, fixed regardless of threads


@dataclass
class OverflowEstimate:
    L: int
    T: int
    B: np.ndarray
    replicates: int
    successes: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    decay: float  # -(1/L) log p_hat; +inf when no successes


def wilson_interval(successes: int, total: int, z: float = 1.959963984540054):
    """95% Wilson score interval; one-sided at the boundaries."""
    if total == 0:
        return 0.0, 1.0
    n = total
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == total else min(1.0, center + half)
    return lo, hi


def _simulate_block(model, policy, region, L, T, block_id, seed, size) -> np.ndarray:
    """Terminal workloads (size, K) of `size` independent T-slot runs."""
    arrivals = sample_matrix(model, L, seed, slots=T, replicates=size, block=block_id)
    k = model.num_queues
    w = np.zeros((size, k))
    for s in range(T - 1, -1, -1):  # slot T first (slot s+1 in 1-based terms)
        w = _serve_batch(w, policy, region) + arrivals[:, s, :]
    return w


def _serve_batch(w: np.ndarray, policy: pol.Policy, region: rg.RateRegion) -> np.ndarray:
    """[w - R(w)]^+ vectorized across replicates."""
    c = region.capacities
    if policy.kind == pol.WC_MAX_WEIGHT and region.kind == rg.SIMPLEX:
        post = np.empty_like(w)
        s_hat = (w / c).sum(axis=1)
        in_region = s_hat <= 1.0
        post[in_region] = 0.0
        in_box = np.all(w < c, axis=1) & ~in_region
        if in_box.any():
            proj = rg._simplex_face_project_batch(c, w[in_box])
            post[in_box] = w[in_box] - proj
        outside = ~in_box & ~in_region
        if outside.any():
            wo = w[outside]
            scores = wo * c
            kstar = np.argmax(scores, axis=1)  # lowest index wins ties
            po = wo.copy()
            rows = np.arange(wo.shape[0])
            po[rows, kstar] = np.maximum(wo[rows, kstar] - c[kstar], 0.0)
            post[outside] = po
        return post
    post = np.empty_like(w)
    for i in range(w.shape[0]):
        r = pol.select(policy, region, w[i])
        post[i] = np.maximum(w[i] - r, 0.0)
    return post


def estimate_overflow(model: SourceModel, policy: pol.Policy, region: rg.RateRegion,
                      L: int, T: int, B, replicates: int, seed: int,
                      threads: int = 1) -> OverflowEstimate:
    """Fraction of T-slot runs from empty whose terminal workload dominates B
    componentwise, with Wilson 95% CI and the empirical decay exponent."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    B = np.atleast_1d(np.asarray(B, dtype=float))
    blocks = []
    start = 0
    bid = 0
    while start < replicates:
        size = min(_BLOCK, replicates - start)
        blocks.append((bid, size))
        start += size
        bid += 1

    def run(args):
        block_id, size = args
        w = _simulate_block(model, policy, region, L, T, block_id, seed, size)
        return int(np.all(w >= B, axis=1).sum())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            counts = list(ex.map(run, blocks))
    else:
        counts = [run(bk) for bk in blocks]
    successes = int(sum(counts))
    p_hat = successes / replicates
    lo, hi = wilson_interval(successes, replicates)
    if successes == 0:
        lo = 0.0
        decay = math.inf
    else:
        decay = -math.log(p_hat) / L + 0.0  # normalize -0.0 at p_hat = 1
    return OverflowEstimate(L, T, B, replicates, successes, p_hat, lo, hi, decay)


def decay_sweep(model: SourceModel, policy: pol.Policy, region: rg.RateRegion,
                Ls, T: int, B, replicates: int, seed: int,
                threads: int = 1) -> list[OverflowEstimate]:
    """One overflow estimate per L; each L derives its own seed so the sweep
    is reproducible elementwise."""
    Ls = list(Ls)
    if not Ls or any(x >= y for x, y in zip(Ls, Ls[1:])):
        raise ValueError("Ls must be nonempty and strictly ascending")
    out = []
    for L in Ls:
        out.append(estimate_overflow(model, policy, region, int(L), T, B,
                                     replicates, seed=seed * 1_000_003 + int(L),
                                     threads=threads))
    return out
