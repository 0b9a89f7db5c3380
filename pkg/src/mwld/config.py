"""Run configuration: a flat dotted-key text file plus command-line overrides.

Every run output embeds the fully resolved configuration and its digest, so a
result file can be reproduced from itself.  Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from . import policies as pol
from .errors import ConfigError
from .regions import RateRegion
from .sources import (
    CompoundPoissonExp,
    Deterministic,
    ExpIncrement,
    SourceModel,
    derived_compound_poisson_exp,
)

_SCALARS = {
    "region.kind": str,
    "policy.kind": str,
    "policy.tie_break": str,
    "source.kind": str,
    "source.lambda": float,
    "source.mu": float,
    "source.nu": float,
    "source.m": float,
    "run.t": int,
    "run.t_cap": int,
    "run.replicates": int,
    "run.seed": int,
    "run.L": int,
    "run.delta": float,
    "run.grid": str,
    "run.threads": int,
    "run.method": str,
    "oracle.delta": float,
    "oracle.max_coordinate": float,
    "oracle.tolerance": float,
    "out.json": str,
    "out.csv": str,
}
_VECTORS = {
    "region.capacities", "policy.gps_weights", "policy.prio_order",
    "run.b", "run.B", "run.L_list",
}
_MATRICES = {"region.vertices"}
_QUEUE_KEYS = {"kind": str, "lambda": float, "mu": float, "nu": float, "m": float}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _MATRICES:
        rows = [r for r in raw.split(";") if r.strip()]
        return [[float(x) for x in r.split(",")] for r in rows]
    if key in _VECTORS:
        if key == "run.b" and raw == "mean":
            return "mean"
        return [float(x) for x in raw.split(",")]
    parts = key.split(".")
    if len(parts) == 3 and parts[0] == "source":
        # per-queue override, e.g. source.1.kind
        try:
            int(parts[1])
        except ValueError as exc:
            raise ConfigError(f"bad per-queue key {key!r}") from exc
        leaf = parts[2]
        if leaf not in _QUEUE_KEYS:
            raise ConfigError(f"unknown source key {key!r}")
        typ = _QUEUE_KEYS[leaf]
        return typ(raw)
    if key not in _SCALARS:
        raise ConfigError(f"unknown configuration key {key!r}")
    typ = _SCALARS[key]
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {typ.__name__}") from exc


class RunConfig:
    """Resolved flat configuration (dotted keys -> typed values)."""

    def __init__(self, entries: dict):
        self.entries = dict(sorted(entries.items()))

    @staticmethod
    def load(path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        entries: dict = {}
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from exc
            for lineno, line in enumerate(text.splitlines(), 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, raw = line.partition("=")
                key = key.strip()
                entries[key] = _parse_value(key, raw)
        for key, raw in (overrides or {}).items():
            if raw is None:
                continue
            entries[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
        return RunConfig(entries)

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def require(self, key):
        if key not in self.entries:
            raise ConfigError(f"missing required configuration key {key!r}")
        return self.entries[key]

    # ---- canonical form -------------------------------------------------
    def canonical(self) -> str:
        return canonical_json({"config": self.entries})

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    # ---- domain objects --------------------------------------------------
    def region(self, k: int) -> RateRegion:
        kind = self.get("region.kind", "simplex")
        if kind == "simplex":
            caps = self.get("region.capacities", [1.0] * k)
            return RateRegion.simplex(caps)
        if kind == "vertex_polytope":
            return RateRegion.vertex_polytope(self.require("region.vertices"))
        raise ConfigError(f"unknown region kind {kind!r}")

    def policy(self) -> pol.Policy:
        kind = self.get("policy.kind", "wcmw")
        if kind == "mw" or kind == "wcmw":
            tb = self.get("policy.tie_break", "lowest")
            tie = pol.LOWEST_INDEX if tb == "lowest" else int(tb)
            return pol.Policy(pol.MAX_WEIGHT if kind == "mw" else pol.WC_MAX_WEIGHT, tie)
        if kind == "gps":
            return pol.Policy.gps(self.get("policy.gps_weights", [1.0, 1.0]))
        if kind == "prio":
            return pol.Policy.priority([int(i) for i in self.get("policy.prio_order", [0, 1])])
        raise ConfigError(f"unknown policy kind {kind!r}")

    def _queue_model(self, q: int):
        kind = self.get(f"source.{q}.kind", self.get("source.kind", "cpe"))

        def par(name, default=None):
            v = self.get(f"source.{q}.{name}", self.get(f"source.{name}", default))
            if v is None:
                raise ConfigError(f"source parameter {name!r} required for kind {kind!r}")
            return v

        if kind == "cpe":
            return CompoundPoissonExp(par("lambda"), par("mu"))
        if kind == "cpe_derived":
            return derived_compound_poisson_exp(par("lambda"), par("mu"))
        if kind == "exp":
            return ExpIncrement(par("nu"))
        if kind == "det":
            return Deterministic(par("m"))
        raise ConfigError(f"unknown source kind {kind!r}")

    def source(self, k: int) -> SourceModel:
        return SourceModel(tuple(self._queue_model(q) for q in range(k)))


def fmt_float(x) -> str:
    """Full-precision float formatting shared by JSON and CSV emitters."""
    x = float(x)
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if math.isnan(x):
        return "NaN"
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    out = []
    _emit(obj, out)
    return "".join(out)


def _emit(obj, out):
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        out.append("[")
        for i, v in enumerate(seq):
            if i:
                out.append(", ")
            _emit(v, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(", ")
            out.append(json.dumps(str(key)))
            out.append(": ")
            _emit(obj[key], out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(path: str, header: list[str], rows) -> None:
    """RFC-4180-style CSV with full-precision numbers."""
    def cell(v):
        if isinstance(v, str):
            if any(c in v for c in ',"\n'):
                return '"' + v.replace('"', '""') + '"'
            return v
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return fmt_float(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")
