"""Command-line front end.

Subcommands: ratefn, bounds, i2, mc, compare, trajectory, oracle.  Parameters
come from an optional flat config file plus flag overrides; outputs are JSON
and CSV with full-precision numbers, each embedding the resolved config and
its digest.  Exit codes: 0 success, 2 configuration error, 3 resource budget.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import policies as pol
from .config import RunConfig, canonical_json, write_csv
from .errors import ConfigError, MwldError, ResourceError
from .mc import decay_sweep, estimate_overflow
from .oracle import OracleConfig, brute_force_it_path
from .ratefn import (
    BRANCH_CONVEX,
    GRID_DP,
    exact_i2,
    it_bounds,
    it_exact,
    it_policy,
    j_rate_fn,
)


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat dotted-key configuration file")
    p.add_argument("--out", help="output JSON path")
    p.add_argument("--csv", help="output CSV path (commands with tabular output)")
    p.add_argument("--capacities", help="per-queue peak rates, e.g. 1,1")
    p.add_argument("--lambda", dest="lam", help="compound-Poisson packet rate per slot")
    p.add_argument("--mu", help="inverse mean packet size")
    p.add_argument("--nu", help="exponential-increment rate")
    p.add_argument("--m", help="deterministic increment")
    p.add_argument("--source", help="source kind: cpe|cpe_derived|exp|det")
    p.add_argument("--policy", help="mw|wcmw|gps|prio")
    p.add_argument("--gps-weights", dest="gps_weights", help="GPS weights, e.g. 1,1")
    p.add_argument("--prio-order", dest="prio_order", help="priority order, e.g. 0,1")
    p.add_argument("--tie-break", dest="tie_break", help="lowest or explicit branch index")
    p.add_argument("--seed", help="random seed")
    p.add_argument("--threads", help="worker threads (default MWLD_THREADS or 1)")


def _overrides(args) -> dict:
    pairs = {
        "region.capacities": args.capacities,
        "source.lambda": args.lam,
        "source.mu": args.mu,
        "source.nu": args.nu,
        "source.m": args.m,
        "source.kind": args.source,
        "policy.kind": args.policy,
        "policy.gps_weights": args.gps_weights,
        "policy.prio_order": args.prio_order,
        "policy.tie_break": args.tie_break,
        "run.seed": args.seed,
        "run.threads": args.threads,
        "out.json": args.out,
        "out.csv": args.csv,
    }
    for name in ("b", "t", "t_cap", "B", "L", "replicates", "delta", "grid", "method"):
        if hasattr(args, name) and getattr(args, name) is not None:
            key = {"b": "run.b", "B": "run.B", "L": "run.L_list"}.get(name, f"run.{name}")
            pairs[key] = getattr(args, name)
    for name, key in (("odelta", "oracle.delta"), ("omax", "oracle.max_coordinate"),
                      ("otol", "oracle.tolerance")):
        if hasattr(args, name) and getattr(args, name) is not None:
            pairs[key] = getattr(args, name)
    return {k: v for k, v in pairs.items() if v is not None}


def _resolve_b(cfg: RunConfig, model) -> np.ndarray:
    b = cfg.require("run.b")
    if b == "mean":
        return model.mean_vector
    return np.asarray(b, dtype=float)


def _num_queues(cfg: RunConfig) -> int:
    b = cfg.get("run.b")
    if isinstance(b, list):
        return len(b)
    caps = cfg.get("region.capacities")
    if caps is not None:
        return len(caps)
    big = cfg.get("run.B")
    if isinstance(big, list):
        return len(big)
    return 2


def _threads(cfg: RunConfig) -> int:
    t = cfg.get("run.threads")
    if t is None:
        t = int(os.environ.get("MWLD_THREADS", "1"))
    return max(1, int(t))


def _emit(cfg: RunConfig, payload: dict) -> None:
    doc = {"config": cfg.entries, "config_digest": cfg.digest()}
    doc.update(payload)
    text = canonical_json(doc)
    out = cfg.get("out.json")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    sys.stdout.write(text + "\n")


def _outcome_payload(out) -> dict:
    d = {
        "value": out.value,
        "t_star": out.timescale,
        "method": out.method,
        "truncated": out.truncated,
    }
    if out.optimal_path is not None:
        d["path"] = out.optimal_path.increments
    if out.branch_sequence is not None:
        d["services"] = [np.asarray(s) for s in out.branch_sequence]
    if out.profile is not None:
        d["profile"] = out.profile
    return d


def cmd_ratefn(cfg: RunConfig) -> int:
    k = _num_queues(cfg)
    model = cfg.source(k)
    region = cfg.region(k)
    b = _resolve_b(cfg, model)
    policy = cfg.policy()
    t_cap = cfg.get("run.t_cap")
    method = cfg.get("run.method", BRANCH_CONVEX)
    if policy.kind in (pol.GPS, pol.PRIORITY):
        t = cfg.require("run.t")
        out = it_policy(model, b, t, policy, region=region,
                        delta=cfg.get("run.delta", 0.05))
    elif t_cap is not None:
        t = t_cap
        out = j_rate_fn(model, b, t_cap, region=region)
    else:
        t = cfg.require("run.t")
        out = it_exact(model, b, t, method=method, region=region,
                       delta=cfg.get("run.delta", 0.05))
    csv_path = cfg.get("out.csv")
    if csv_path and out.optimal_path is not None:
        write_csv(csv_path, ["slot", "queue", "work"], out.optimal_path.records())
    payload = {"b": b, "t": t}
    payload.update(_outcome_payload(out))
    if k == 2 and policy.kind in (pol.MAX_WEIGHT, pol.WC_MAX_WEIGHT):
        bp = it_bounds(model, b, t, region=region)
        payload["bounds"] = {"lower": bp.lower, "upper": bp.upper}
    _emit(cfg, {"command": "ratefn", "result": payload})
    return 0


def cmd_bounds(cfg: RunConfig) -> int:
    k = _num_queues(cfg)
    model = cfg.source(k)
    b = _resolve_b(cfg, model)
    bp = it_bounds(model, b, cfg.require("run.t"), region=cfg.region(k))
    _emit(cfg, {"command": "bounds",
                "result": {"lower": bp.lower, "upper": bp.upper,
                           "u_lower": bp.u_lower, "u_upper": bp.u_upper}})
    return 0


def cmd_i2(cfg: RunConfig) -> int:
    k = _num_queues(cfg)
    model = cfg.source(k)
    b = _resolve_b(cfg, model)
    out = exact_i2(model, b, region=cfg.region(k))
    _emit(cfg, {"command": "i2", "result": _outcome_payload(out)})
    return 0


def cmd_mc(cfg: RunConfig) -> int:
    k = _num_queues(cfg)
    model = cfg.source(k)
    region = cfg.region(k)
    policy = cfg.policy()
    big_b = np.asarray(cfg.require("run.B"), dtype=float)
    ls = cfg.get("run.L_list") or [cfg.require("run.L")]
    ls = [int(x) for x in ls]
    t = cfg.require("run.t")
    reps = cfg.get("run.replicates", 100000)
    seed = cfg.get("run.seed", 0)
    threads = _threads(cfg)
    if len(ls) == 1:
        ests = [estimate_overflow(model, policy, region, ls[0], t, big_b, reps,
                                  seed, threads=threads)]
    else:
        ests = decay_sweep(model, policy, region, ls, t, big_b, reps, seed,
                           threads=threads)
    rows = [[e.L, e.T, *e.B.tolist(), e.replicates, e.p_hat, e.ci_lo, e.ci_hi, e.decay]
            for e in ests]
    header = ["L", "T", *[f"B{q+1}" for q in range(k)],
              "replicates", "p_hat", "ci_lo", "ci_hi", "decay"]
    csv_path = cfg.get("out.csv")
    if csv_path:
        write_csv(csv_path, header, rows)
    _emit(cfg, {"command": "mc",
                "result": {"header": header, "rows": rows}})
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"grid spec {spec!r} must be lo:hi:step") from exc
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def cmd_compare(cfg: RunConfig) -> int:
    model = cfg.source(2)
    region = cfg.region(2)
    t = cfg.get("run.t", 2)
    grid = _parse_grid(cfg.get("run.grid", "0:5:0.5"))
    gps = pol.Policy.gps(cfg.get("policy.gps_weights", [1.0, 1.0]))
    prio = pol.Policy.priority([int(i) for i in cfg.get("policy.prio_order", [0, 1])])
    rows = []
    for b1 in grid:
        for b2 in grid:
            b = np.array([b1, b2])
            mw = it_exact(model, b, t, region=region).value
            g = it_policy(model, b, t, gps, region=region).value
            p = it_policy(model, b, t, prio, region=region).value
            rows.append([b1, b2, mw, g, p])
    header = ["b1", "b2", "mw", "gps", "prio"]
    csv_path = cfg.get("out.csv")
    if csv_path:
        write_csv(csv_path, header, rows)
    _emit(cfg, {"command": "compare", "result": {"header": header, "rows": rows}})
    return 0


def cmd_trajectory(cfg: RunConfig) -> int:
    k = _num_queues(cfg)
    model = cfg.source(k)
    region = cfg.region(k)
    b = _resolve_b(cfg, model)
    out = it_exact(model, b, cfg.require("run.t"), region=region)
    path = out.optimal_path
    t = path.horizon
    # replay with the recorded branch services so tied selections match the
    # optimal branch sequence rather than the default tie-break
    states = [np.zeros(k), path.slot(t).copy()]
    w = states[-1]
    for v in range(t - 1, 0, -1):
        w = np.maximum(w - out.branch_sequence[v - 1], 0.0) + path.slot(v)
        states.append(w)
    rows = []
    for i, w in enumerate(states):
        s = t - i  # time -s
        arr = path.slot(s) if s >= 1 else np.zeros(k)
        for q in range(k):
            rows.append([s, q + 1, w[q], arr[q] if s >= 1 else 0.0])
    header = ["slot", "queue", "workload", "arrival"]
    csv_path = cfg.get("out.csv")
    if csv_path:
        write_csv(csv_path, header, rows)
    _emit(cfg, {"command": "trajectory",
                "result": {"value": out.value, "t_star": out.timescale,
                           "path": path.increments, "header": header, "rows": rows}})
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    model = cfg.source(2)
    b = _resolve_b(cfg, model)
    t = cfg.require("run.t")
    ocfg = OracleConfig(
        grid_step=cfg.get("oracle.delta", 0.02),
        max_coordinate=cfg.get("oracle.max_coordinate", float(b.sum()) + 1.5),
        target_tolerance=cfg.get("oracle.tolerance", 0.05),
    )
    res = brute_force_it_path(model, b, t, ocfg)
    _emit(cfg, {"command": "oracle",
                "result": {"instance": {"b": b, "t": t},
                           "delta": ocfg.grid_step,
                           "tolerance": ocfg.target_tolerance,
                           "value": res.value,
                           "argmin_path": res.arrivals}})
    return 0


_COMMANDS = {
    "ratefn": cmd_ratefn,
    "bounds": cmd_bounds,
    "i2": cmd_i2,
    "mc": cmd_mc,
    "compare": cmd_compare,
    "trajectory": cmd_trajectory,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mwld", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, helptext, extra):
        p = sub.add_parser(name, help=helptext)
        _common_flags(p)
        for flag, kw in extra:
            p.add_argument(flag, **kw)
        return p

    add("ratefn", "finite/infinite-horizon rate function", [
        ("--b", {"help": "target workload, e.g. 3,1 or 'mean'"}),
        ("--t", {"type": int, "help": "horizon"}),
        ("--t-cap", {"dest": "t_cap", "type": int,
                     "help": "compute J = inf_t I_t with this cap"}),
        ("--method", {"choices": [BRANCH_CONVEX, GRID_DP]}),
        ("--delta", {"type": float, "help": "grid step for GridDP"}),
    ])
    add("bounds", "closed-form sandwich for I_t", [
        ("--b", {"help": "target workload"}),
        ("--t", {"type": int}),
    ])
    add("i2", "exact two-slot rate function", [
        ("--b", {"help": "target workload"}),
    ])
    add("mc", "Monte Carlo overflow estimate / L sweep", [
        ("--B", {"help": "overflow level, e.g. 0.65 or 1,1"}),
        ("--L", {"help": "source count, or comma list for a sweep"}),
        ("--T", {"dest": "t", "type": int, "help": "horizon"}),
        ("--replicates", {"type": int}),
    ])
    add("compare", "MW vs GPS vs priority over a b-grid", [
        ("--grid", {"help": "lo:hi:step"}),
        ("--t", {"type": int}),
    ])
    add("trajectory", "optimal arrival/workload trajectory", [
        ("--b", {"help": "target workload"}),
        ("--t", {"type": int}),
    ])
    add("oracle", "brute-force golden value", [
        ("--b", {"help": "target workload"}),
        ("--t", {"type": int}),
        ("--odelta", {"type": float, "help": "oracle grid step"}),
        ("--omax", {"type": float, "help": "oracle max coordinate"}),
        ("--otol", {"type": float, "help": "oracle target tolerance"}),
    ])
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        over = _overrides(args)
        try:
            if getattr(args, "b", None) is not None:
                over["run.b"] = args.b if args.b == "mean" else [float(x) for x in args.b.split(",")]
            if getattr(args, "B", None) is not None:
                over["run.B"] = [float(x) for x in args.B.split(",")]
            if "run.L_list" in over and isinstance(over["run.L_list"], str):
                over["run.L_list"] = [int(x) for x in over["run.L_list"].split(",")]
        except ValueError as exc:
            raise ConfigError(f"malformed numeric flag: {exc}") from exc
        cfg = RunConfig.load(getattr(args, "config", None), over)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"resource budget exceeded: {exc}", file=sys.stderr)
        return 3
    except MwldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
