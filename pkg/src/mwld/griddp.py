"""Grid value iteration for finite-horizon rate functions.

Discretizes workloads and arrivals on a regular grid (normalized units) and
propagates the minimum path cost from the empty state, branching over every
scheduler selection.  Error is O(grid step); the branch-convex engine is the
sharp reference at K = 2 and this implementation cross-checks it and covers
the deterministic GPS/priority schedulers where no branching is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import policies as pol
from . import regions as rg
from .errors import ResourceError

_CELL_BUDGET = 2.5e7


@dataclass
class GridOutcome:
    value: float
    arrivals: np.ndarray          # (K, t) grid path, column s-1 = slot s
    services: list[np.ndarray]    # service vector per step, steps 1..t-1
    delta: float


def _scheduler_images(policy, region, w):
    """Scheduler images for a batch of workload rows w (n, K): list of
    (post_workload (n, K), mask (n,)) pairs covering every allowed selection."""
    n, k = w.shape
    c = region.capacities
    if policy.kind in (pol.GPS, pol.PRIORITY):
        post = np.empty_like(w)
        for i in range(n):
            r = pol.select(policy, region, w[i])
            post[i] = np.maximum(w[i] - r, 0.0)
        return [(post, np.ones(n, dtype=bool))]

    images = []
    s_hat = (w / c).sum(axis=1)
    in_box = np.all(w < c, axis=1)
    if policy.kind == pol.WC_MAX_WEIGHT:
        in_region = s_hat <= 1.0 + 1e-12
        # projection branch inside the box: drains to zero inside the region,
        # otherwise onto the face (exact water-filling, may clip for K >= 3)
        proj_mask = in_box & ~in_region
        post_proj = np.zeros_like(w)
        if proj_mask.any():
            post_proj[proj_mask] = w[proj_mask] - _face_project(c, w[proj_mask])
        images.append((post_proj, in_box))
        vertex_mask = ~in_box
    else:
        vertex_mask = np.ones(n, dtype=bool)
    scores = w * c
    top = scores.max(axis=1)
    for q in range(k):
        tied = vertex_mask & (scores[:, q] >= top * (1.0 - 1e-12))
        if not tied.any():
            continue
        post = w.copy()
        post[:, q] = np.maximum(w[:, q] - c[q], 0.0)
        images.append((post, tied))
    return images


def _face_project(c, w):
    from .regions import _simplex_face_project_batch
    return _simplex_face_project_batch(np.asarray(c, dtype=float), w)


def it_grid(model, b, t: int, policy=None, delta: float = 0.05,
            box_hi: float | None = None) -> GridOutcome:
    """Minimum path cost over t slots from empty to the grid cell of b,
    in capacity-normalized units (region is the unit simplex)."""
    b = np.atleast_1d(np.asarray(b, dtype=float))
    k = b.shape[0]
    if policy is None:
        policy = pol.Policy.wc_max_weight()
    region = rg.unit_simplex(k)
    if box_hi is None:
        box_hi = float(b.sum()) + t
    n = int(round(box_hi / delta)) + 1
    cells = n ** k
    if cells * max(t, 1) > _CELL_BUDGET:
        raise ResourceError(
            f"grid of {n}^{k} cells over {t} slots exceeds the budget",
            attempted_size=cells * t)
    grid = np.arange(n) * delta
    fk = [model.queues[q].rate_points(grid) for q in range(k)]

    shape = (n,) * k
    mesh = np.meshgrid(*([np.arange(n)] * k), indexing="ij")
    w_states = np.stack([m.ravel() for m in mesh], axis=1) * delta

    images = _scheduler_images(policy, region, w_states)
    img_flat = []
    for post, mask in images:
        idx = np.clip(np.rint(post / delta).astype(np.int64), 0, n - 1)
        flat = np.zeros(idx.shape[0], dtype=np.int64)
        for q in range(k):
            flat = flat * n + idx[:, q]
        img_flat.append((flat, mask))
    src_flat = np.arange(cells, dtype=np.int64)

    # one slot from empty: W = a_t, cost of the arrivals themselves
    d_cur = fk[0].copy()
    for q in range(1, k):
        d_cur = d_cur[..., None] + fk[q]
    parents = []
    arrive = []
    for _ in range(t - 1):
        # service collapse: c[post] = min over states mapping there
        vals_all = []
        tgt_all = []
        src_all = []
        dflat = d_cur.ravel()
        for tgt, mask in img_flat:
            vals_all.append(dflat[mask])
            tgt_all.append(tgt[mask])
            src_all.append(src_flat[mask])
        vals = np.concatenate(vals_all)
        tgt = np.concatenate(tgt_all)
        src = np.concatenate(src_all)
        order = np.argsort(vals, kind="stable")[::-1]
        coll = np.full(cells, np.inf)
        par = np.full(cells, -1, dtype=np.int64)
        coll[tgt[order]] = vals[order]   # descending writes: the minimum lands last
        par[tgt[order]] = src[order]
        parents.append(par)
        cgrid = coll.reshape(shape)
        # arrival min-plus convolution along each queue axis
        steps = []
        for q in range(k):
            moved = np.moveaxis(cgrid, q, -1)
            out = np.full_like(moved, np.inf)
            amin = np.zeros(moved.shape, dtype=np.int32)
            for d in range(n):
                cand = moved[..., : n - d] + fk[q][d]
                upd = cand < out[..., d:]
                out[..., d:][upd] = cand[upd]
                amin[..., d:][upd] = d
            cgrid = np.moveaxis(out, -1, q)
            steps.append(np.moveaxis(amin, -1, q))
        arrive.append(steps)
        d_cur = cgrid

    bi = np.clip(np.rint(b / delta).astype(np.int64), 0, n - 1)
    value = float(d_cur[tuple(bi)])
    arrivals = np.zeros((k, t))
    services = []
    cell = tuple(int(i) for i in bi)
    for s in range(1, t):               # slot s arrivals were applied in iteration t-s
        steps = arrive[t - 1 - s]
        d = np.zeros(k, dtype=np.int64)
        cur = list(cell)
        for q in range(k - 1, -1, -1):  # invert the convolutions in reverse order
            d[q] = steps[q][tuple(cur)]
            cur[q] -= int(d[q])
        arrivals[:, s - 1] = d * delta
        parent = int(parents[t - 1 - s][int(np.ravel_multi_index(cur, shape))])
        pcell = list(np.unravel_index(parent, shape))
        services.append((np.array(pcell) - np.array(cur)) * delta)
        cell = tuple(pcell)
    arrivals[:, t - 1] = np.array(cell) * delta
    return GridOutcome(value, arrivals, services, delta)
