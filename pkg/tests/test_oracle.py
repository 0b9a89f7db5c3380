import math

import numpy as np
import pytest

from mwld.errors import ResourceError
from mwld.oracle import (
    OracleConfig,
    agreement_slack,
    brute_force_it,
    brute_force_it_path,
    cost_modulus,
)
from mwld.ratefn import it_exact, one_slot_cost
from mwld.sources import CompoundPoissonExp, SourceModel


def cpe(lam, mu=0.01):
    return SourceModel.iid(CompoundPoissonExp(lam, mu), 2)


def test_t1_matches_one_slot_cost_up_to_modulus():
    m = cpe(0.3)
    cfg = OracleConfig(grid_step=0.01, max_coordinate=5.0, target_tolerance=0.02)
    b = [2.0, 1.0]
    golden = brute_force_it(m, b, 1, cfg)
    direct = one_slot_cost(m, b)
    slack = 2 * cost_modulus(m, 0, 5.0, cfg.target_tolerance)
    assert golden <= direct + 1e-12  # tolerance window can only help
    assert abs(golden - direct) <= slack


def test_unreachable_target_returns_inf():
    m = cpe(0.3)
    cfg = OracleConfig(grid_step=0.05, max_coordinate=1.0, target_tolerance=0.02)
    assert brute_force_it(m, [4.0, 2.0], 1, cfg) == math.inf


def test_oracle_path_replays_to_target():
    m = cpe(0.3)
    cfg = OracleConfig(grid_step=0.02, max_coordinate=6.0, target_tolerance=0.05)
    res = brute_force_it_path(m, [4.0, 2.0], 2, cfg)
    assert res.arrivals is not None
    from mwld.policies import Policy, selection_branches
    from mwld.regions import unit_simplex
    # some allowed branch at the intermediate state must land on the target
    w1 = res.arrivals[:, 1]
    a1 = res.arrivals[:, 0]
    hits = []
    for r in selection_branches(Policy.wc_max_weight(), unit_simplex(2), w1):
        w0 = np.maximum(w1 - r, 0.0) + a1
        hits.append(np.all(np.abs(w0 - [4.0, 2.0]) <= cfg.target_tolerance + 1e-9))
    assert any(hits)


def test_halving_delta_never_increases_much():
    m = cpe(0.3)
    b = [1.5, 0.5]
    coarse = brute_force_it(m, b, 2, OracleConfig(0.08, 3, 4.0, 0.08))
    fine = brute_force_it(m, b, 2, OracleConfig(0.04, 3, 4.0, 0.08))
    slack = agreement_slack(m, 2, OracleConfig(0.08, 3, 4.0, 0.08))
    assert fine <= coarse + slack


def test_t3_small_instance_consistent_with_engine():
    m = cpe(0.3)
    b = [1.2, 0.4]
    cfg = OracleConfig(grid_step=0.1, max_horizon=3, max_coordinate=2.4,
                       target_tolerance=0.1)
    golden = brute_force_it(m, b, 3, cfg)
    exact = it_exact(m, b, 3).value
    assert abs(golden - exact) <= agreement_slack(m, 3, cfg)


def test_budget_guard():
    m = cpe(0.3)
    cfg = OracleConfig(grid_step=0.01, max_horizon=3, max_coordinate=8.0,
                       target_tolerance=0.05)
    with pytest.raises(ResourceError):
        brute_force_it(m, [1.0, 1.0], 3, cfg)
