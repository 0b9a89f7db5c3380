"""Arrival-process models: per-slot cost functions (convex conjugates of the
cumulant), path costs, and seeded samplers for the L-averaged process.

The compound-Poisson-exponential model deliberately carries two conjugates.
``CompoundPoissonExp.rate_point`` is the closed form mu*(sqrt(x)-sqrt(lam))^2
used throughout the numerical comparisons, with zero at x = lam.  The
Fenchel-Legendre transform of the process cumulant lam*theta/(mu-theta) is
(sqrt(mu*x)-sqrt(lam))^2, with zero at the process mean lam/mu; it is exposed
via :func:`derived_compound_poisson_exp` and is the one consistent with the
sampler.  The two are NOT reconciled: the deterministic comparisons use the
first, stochastic validation the second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .dynamics import ArrivalPath
from .errors import BracketError, DomainError

# cost-kind descriptors understood by the conic solver (_cone.py)
SQRT_AFFINE = "sqrt_affine"   # f(x) = a*x - b*sqrt(x) + c       on x >= 0
EXP_LOG = "exp_log"           # f(x) = nu*x - 1 - log(nu*x)      on x > 0
QUADRATIC = "quad"            # f(x) = a*(x - m)^2               on x >= 0
PINNED = "pinned"             # f(x) = 0 at x = m, +inf elsewhere

_PIN_TOL = 1e-12


def _stream(seed, *key) -> np.random.Generator:
    """Counter-based generator: deterministic and order-independent across
    (queue, slot, replicate-block) key paths."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class IncrementModel:
    """One queue's per-slot increment law."""

    mean: float

    def rate_point(self, x: float) -> float:
        raise NotImplementedError

    def rate_points(self, xs) -> np.ndarray:
        """Vectorized rate function; subclasses override with array math."""
        xs = np.asarray(xs, dtype=float)
        out = np.empty(xs.shape)
        flat = xs.ravel()
        res = out.ravel()
        for i, x in enumerate(flat):
            res[i] = self.rate_point(float(x))
        return out

    def cost_kind(self):
        """Conic descriptor of the cost, or None when not cone-representable."""
        return None

    def sample(self, L: int, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no sampler")

    def scaled(self, c: float) -> "IncrementModel":
        """Model of the increments divided by c (unit-capacity normalization)."""
        raise NotImplementedError


def _check_domain(x):
    if x < 0:
        raise DomainError(f"rate function argument must be >= 0, got {x}")


@dataclass(frozen=True)
class CompoundPoissonExp(IncrementModel):
    """Packet arrivals Poisson(lam)/slot, packet sizes Exponential(mu)."""

    lam: float
    mu: float

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0:
            raise ValueError("lam and mu must be positive")

    @property
    def mean(self) -> float:
        # zero of the closed-form conjugate; the sampled process has mean lam/mu
        return self.lam

    def rate_point(self, x: float) -> float:
        _check_domain(x)
        return self.mu * (math.sqrt(x) - math.sqrt(self.lam)) ** 2

    def rate_points(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return self.mu * (np.sqrt(xs) - math.sqrt(self.lam)) ** 2

    def cumulant(self, theta: float) -> float:
        if theta >= self.mu:
            return math.inf
        return self.lam * theta / (self.mu - theta)

    def cost_kind(self):
        return (SQRT_AFFINE, self.mu, 2.0 * self.mu * math.sqrt(self.lam), self.mu * self.lam)

    def sample(self, L: int, rng: np.random.Generator, size) -> np.ndarray:
        n = rng.poisson(L * self.lam, size=size)
        total = rng.standard_gamma(n) / self.mu
        return total / L

    def scaled(self, c: float) -> "CompoundPoissonExp":
        # mu*(sqrt(c y)-sqrt(lam))^2 = (mu c)*(sqrt(y)-sqrt(lam/c))^2
        return CompoundPoissonExp(self.lam / c, self.mu * c)


@dataclass(frozen=True)
class ExpIncrement(IncrementModel):
    """I.i.d. exponential work increments with rate nu (mean 1/nu)."""

    nu: float

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")

    @property
    def mean(self) -> float:
        return 1.0 / self.nu

    def rate_point(self, x: float) -> float:
        _check_domain(x)
        if x == 0:
            return math.inf
        return self.nu * x - 1.0 - math.log(self.nu * x)

    def rate_points(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(xs > 0, self.nu * xs - 1.0 - np.log(self.nu * np.maximum(xs, 1e-300)), np.inf)

    def cumulant(self, theta: float) -> float:
        if theta >= self.nu:
            return math.inf
        return -math.log1p(-theta / self.nu)

    def cost_kind(self):
        return (EXP_LOG, self.nu)

    def sample(self, L: int, rng: np.random.Generator, size) -> np.ndarray:
        return rng.standard_gamma(L, size=size) / (L * self.nu)

    def scaled(self, c: float) -> "ExpIncrement":
        return ExpIncrement(self.nu * c)


@dataclass(frozen=True)
class Deterministic(IncrementModel):
    """Constant increment m every slot."""

    m: float

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be nonnegative")

    @property
    def mean(self) -> float:
        return self.m

    def rate_point(self, x: float) -> float:
        _check_domain(x)
        return 0.0 if abs(x - self.m) <= _PIN_TOL * max(1.0, self.m) else math.inf

    def rate_points(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return np.where(np.abs(xs - self.m) <= _PIN_TOL * max(1.0, self.m), 0.0, np.inf)

    def cost_kind(self):
        return (PINNED, self.m)

    def sample(self, L: int, rng: np.random.Generator, size) -> np.ndarray:
        return np.full(size, self.m)

    def scaled(self, c: float) -> "Deterministic":
        return Deterministic(self.m / c)


@dataclass(frozen=True, eq=False)
class Custom(IncrementModel):
    """Arbitrary convex conjugate handle, with optional sampler and conic kind."""

    rate_fn: object
    mean_value: float
    sampler: object = None
    kind: tuple | None = None
    label: str = "custom"

    @property
    def mean(self) -> float:
        return self.mean_value

    def rate_point(self, x: float) -> float:
        _check_domain(x)
        return float(self.rate_fn(x))

    def cost_kind(self):
        return self.kind

    def sample(self, L: int, rng: np.random.Generator, size) -> np.ndarray:
        if self.sampler is None:
            raise NotImplementedError(f"custom model {self.label!r} has no sampler")
        return self.sampler(L, rng, size)

    def scaled(self, c: float) -> "Custom":
        kind = _scale_kind(self.kind, c)
        fn = self.rate_fn
        sampler = self.sampler
        return Custom(
            rate_fn=lambda y, _fn=fn, _c=c: _fn(_c * y),
            mean_value=self.mean_value / c,
            sampler=None if sampler is None else (lambda L, rng, size, _s=sampler, _c=c: _s(L, rng, size) / _c),
            kind=kind,
            label=f"{self.label}/c={c:g}",
        )


def _scale_kind(kind, c):
    if kind is None:
        return None
    tag = kind[0]
    if tag == SQRT_AFFINE:
        _, a, b, g = kind
        return (SQRT_AFFINE, a * c, b * math.sqrt(c), g)
    if tag == EXP_LOG:
        return (EXP_LOG, kind[1] * c)
    if tag == QUADRATIC:
        _, a, m = kind
        return (QUADRATIC, a * c * c, m / c)
    if tag == PINNED:
        return (PINNED, kind[1] / c)
    raise ValueError(f"unknown cost kind {tag!r}")


def derived_compound_poisson_exp(lam: float, mu: float) -> Custom:
    """Fenchel-Legendre conjugate of the compound-Poisson-exponential cumulant,
    (sqrt(mu x) - sqrt(lam))^2, paired with the true process sampler."""
    base = CompoundPoissonExp(lam, mu)

    def rate(x):
        return (math.sqrt(mu * x) - math.sqrt(lam)) ** 2

    return Custom(
        rate_fn=rate,
        mean_value=lam / mu,
        sampler=lambda L, rng, size: base.sample(L, rng, size),
        kind=(SQRT_AFFINE, mu, 2.0 * math.sqrt(lam * mu), lam),
        label=f"cpe-conjugate(lam={lam:g},mu={mu:g})",
    )


@dataclass(frozen=True, eq=False)
class SourceModel:
    """Mutually independent per-queue increment models."""

    queues: tuple

    def __post_init__(self):
        object.__setattr__(self, "queues", tuple(self.queues))

    @property
    def num_queues(self) -> int:
        return len(self.queues)

    @property
    def mean_vector(self) -> np.ndarray:
        return np.array([q.mean for q in self.queues])

    @staticmethod
    def iid(model: IncrementModel, k: int) -> "SourceModel":
        return SourceModel((model,) * k)

    def scaled(self, c) -> "SourceModel":
        c = np.asarray(c, dtype=float)
        return SourceModel(tuple(q.scaled(ci) for q, ci in zip(self.queues, c)))


def rate_fn_point(model: SourceModel, k: int, x: float) -> float:
    """Per-slot cost Lambda*_k(x) of queue k receiving x units of work."""
    return model.queues[k].rate_point(float(x))


def path_cost(model: SourceModel, path: ArrivalPath) -> float:
    """Additive path cost: sum over queues and slots of the per-slot cost.
    Returns +inf when any entry leaves the cost domain."""
    total = 0.0
    for k in range(path.num_queues):
        q = model.queues[k]
        for x in path.increments[k]:
            v = q.rate_point(float(x))
            if not math.isfinite(v):
                return math.inf
            total += v
    return total


def sample_slot(model: SourceModel, k: int, L: int, seed, *key) -> float:
    """One slot of the L-averaged arrival process for queue k, drawn from the
    counter-based stream addressed by (seed, queue, *key)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    rng = _stream(seed, k, *key)
    return float(model.queues[k].sample(int(L), rng, size=()))


def sample_matrix(model: SourceModel, L: int, seed, slots: int, replicates: int,
                  block: int = 0) -> np.ndarray:
    """(replicates, slots, K) array of L-averaged arrivals; per (queue, slot)
    streams keep the draws independent of evaluation order."""
    k = model.num_queues
    out = np.empty((replicates, slots, k))
    for q in range(k):
        for s in range(slots):
            rng = _stream(seed, q, s, block)
            out[:, s, q] = model.queues[q].sample(int(L), rng, size=replicates)
    return out


def fenchel_legendre(cumulant, x: float, bracket) -> float:
    """sup_theta { theta*x - Lambda(theta) } by bounded scalar maximization.

    Raises BracketError when the maximizer sits at the bracket boundary, since
    the supremum is then not certified.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise BracketError(f"empty bracket ({lo}, {hi})")

    def neg(theta):
        v = cumulant(theta)
        if not math.isfinite(v):
            return math.inf
        return v - theta * x

    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10, "maxiter": 500})
    width = hi - lo
    if min(res.x - lo, hi - res.x) < 1e-6 * width:
        raise BracketError(f"maximizer {res.x:g} is at the bracket boundary ({lo:g}, {hi:g})")
    return float(-res.fun)
