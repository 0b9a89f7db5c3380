import math

import numpy as np
import pytest

from mwld.dynamics import ArrivalPath
from mwld.errors import BracketError, DomainError
from mwld.sources import (
    CompoundPoissonExp,
    Custom,
    Deterministic,
    ExpIncrement,
    SourceModel,
    derived_compound_poisson_exp,
    fenchel_legendre,
    path_cost,
    rate_fn_point,
    sample_slot,
)


def test_cpe_closed_form_values():
    m = SourceModel.iid(CompoundPoissonExp(0.1, 0.01), 2)
    assert rate_fn_point(m, 0, 0.1) == pytest.approx(0.0, abs=1e-15)
    # (sqrt(0.4) - sqrt(0.1))^2 = 0.5 - 2*0.2 = 0.1, times mu
    assert rate_fn_point(m, 0, 0.4) == pytest.approx(0.001, abs=1e-15)
    assert rate_fn_point(m, 1, 0.0) == pytest.approx(0.01 * 0.1)
    with pytest.raises(DomainError):
        rate_fn_point(m, 0, -0.5)


def test_path_cost_additive():
    m = SourceModel.iid(CompoundPoissonExp(0.1, 0.01), 2)
    mean_path = ArrivalPath(np.full((2, 4), 0.1))
    assert path_cost(m, mean_path) == pytest.approx(0.0, abs=1e-15)
    p = ArrivalPath(np.full((2, 2), 0.4))
    assert path_cost(m, p) == pytest.approx(0.004, abs=1e-14)
    a = ArrivalPath(np.array([[0.3], [0.2]]))
    b = ArrivalPath(np.array([[0.5], [0.05]]))
    ab = ArrivalPath(np.hstack([a.increments, b.increments]))
    assert path_cost(m, ab) == pytest.approx(path_cost(m, a) + path_cost(m, b))


def test_rate_fn_nonneg_convex_zero_at_mean():
    models = [
        CompoundPoissonExp(0.25, 0.02),
        ExpIncrement(2.0),
        derived_compound_poisson_exp(0.3, 0.01),
        Deterministic(0.4),
    ]
    for q in models:
        assert q.rate_point(q.mean) <= 1e-9
        xs = np.linspace(0.01, 3.0, 100)
        vals = q.rate_points(xs)
        finite = np.isfinite(vals)
        assert np.all(vals[finite] >= -1e-12)
        v = vals[finite]
        if v.size > 2:  # discrete convexity on the grid
            assert np.all(v[:-2] + v[2:] - 2 * v[1:-1] >= -1e-9)


def test_fenchel_legendre_quadratic():
    lam = lambda th: th * th / 2.0
    assert fenchel_legendre(lam, 1.0, (-3, 3)) == pytest.approx(0.5, abs=1e-9)
    assert fenchel_legendre(lam, 0.0, (-3, 3)) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(BracketError):
        fenchel_legendre(lam, 10.0, (-1, 1))  # maximizer at the edge


def test_fenchel_legendre_cpe_cumulant():
    # conjugate of lam*theta/(mu-theta) vanishes at the mean lam/mu and equals
    # (sqrt(mu x) - sqrt(lam))^2 elsewhere
    lam, mu = 0.3, 0.01
    m = CompoundPoissonExp(lam, mu)
    assert fenchel_legendre(m.cumulant, lam / mu, (-0.5, mu * (1 - 1e-9))) == \
        pytest.approx(0.0, abs=1e-9)
    x = 45.0
    expect = (math.sqrt(mu * x) - math.sqrt(lam)) ** 2
    got = fenchel_legendre(m.cumulant, x, (-0.5, mu * (1 - 1e-9)))
    assert got == pytest.approx(expect, abs=1e-9)


def test_closed_form_and_transform_conjugates_disagree():
    # the two shipped forms are intentionally different: the closed form is
    # zero at lam, the transform of the cumulant is zero at lam/mu
    lam, mu = 0.3, 0.01
    closed = CompoundPoissonExp(lam, mu)
    derived = derived_compound_poisson_exp(lam, mu)
    assert closed.rate_point(lam) == pytest.approx(0.0, abs=1e-15)
    assert derived.rate_point(lam / mu) == pytest.approx(0.0, abs=1e-15)
    assert derived.rate_point(lam) > 1e-3


def test_exp_increment_values():
    q = ExpIncrement(2.0)
    assert q.mean == 0.5
    assert q.rate_point(0.5) == pytest.approx(0.0, abs=1e-15)
    assert q.rate_point(0.675) == pytest.approx(2 * 0.675 - 1 - math.log(2 * 0.675))
    assert q.rate_point(0.0) == math.inf


def test_sampler_determinism():
    m = SourceModel.iid(CompoundPoissonExp(0.3, 0.01), 2)
    a = sample_slot(m, 0, 25, 12345, 7)
    b = sample_slot(m, 0, 25, 12345, 7)
    assert a == b
    c = sample_slot(m, 1, 25, 12345, 7)
    assert a != c  # queue key separates streams


def test_deterministic_sampler():
    m = SourceModel.iid(Deterministic(0.4), 1)
    assert sample_slot(m, 0, 17, 99) == 0.4


def test_cpe_sample_mean_matches_process():
    # the sampled process has mean lam/mu (the derived conjugate's zero)
    lam, mu = 0.1, 0.01
    q = CompoundPoissonExp(lam, mu)
    rng = np.random.Generator(np.random.Philox(123))
    xs = q.sample(1, rng, size=100_000)
    target = lam / mu
    se = xs.std() / math.sqrt(xs.size)
    assert abs(xs.mean() - target) <= 3 * se


def test_exp_increment_sample_mean_and_scaling():
    q = ExpIncrement(2.0)
    rng = np.random.Generator(np.random.Philox(42))
    xs = q.sample(30, rng, size=50_000)
    se = xs.std() / math.sqrt(xs.size)
    assert abs(xs.mean() - 0.5) <= 3 * se
    # larger L concentrates the average
    rng = np.random.Generator(np.random.Philox(43))
    xs_wide = q.sample(3, rng, size=50_000)
    assert xs.std() < xs_wide.std()


def test_many_sources_decay_of_slot_tail():
    # -(1/L) log P(slot sample > x) approaches the conjugate from above
    q = ExpIncrement(2.0)
    x = 0.7
    target = q.rate_point(x)
    decays = []
    for i, L in enumerate((5, 20, 80)):
        rng = np.random.Generator(np.random.Philox(1000 + i))
        xs = q.sample(L, rng, size=400_000)
        p = float((xs > x).mean())
        decays.append(-math.log(p) / L)
    # Chernoff: the empirical exponent sits above the conjugate and the gap
    # (a log(L)/L prefactor effect) shrinks as L grows
    assert decays[0] > decays[1] > decays[2] > target
    assert decays[2] - target <= 0.5 * target


def test_scaled_models_match_rescaled_rate():
    models = [CompoundPoissonExp(0.3, 0.01), ExpIncrement(2.0),
              Deterministic(0.4), derived_compound_poisson_exp(0.2, 0.05)]
    for q in models:
        s = q.scaled(2.5)
        for x in (0.0, 0.1, 0.7, 2.0):
            a, b = s.rate_point(x), q.rate_point(2.5 * x)
            if math.isinf(a) or math.isinf(b):
                assert a == b
            else:
                assert a == pytest.approx(b, abs=1e-12)
        assert s.mean == pytest.approx(q.mean / 2.5)


def test_custom_model_handles():
    q = Custom(rate_fn=lambda x: (x - 1.0) ** 2, mean_value=1.0)
    assert q.rate_point(2.0) == 1.0
    with pytest.raises(NotImplementedError):
        q.sample(1, np.random.default_rng(0), size=3)
