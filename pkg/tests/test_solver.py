import math

import numpy as np
import pytest

from ctrisk import (NumericalError, TimeGrid, ValidationError, bellman_rhs,
                    constant_policy, extract_policy, linear_oracle,
                    load_tabular, shift_consistency, solve)
from ctrisk.solver import shifted_model

from conftest import random_linear_model, two_state_doc


def single_state_model(c0=0.7, g=0.3, horizon=1.0):
    return load_tabular({
        "model": {"kind": "tabular"},
        "horizon": horizon,
        "states": {"count": 1},
        "actions": {"global": [0.0]},
        "rates": [],
        "costs": [{"state": 0, "value": c0}],
        "terminal": [{"state": 0, "value": g}],
    })


def test_timegrid():
    grid = TimeGrid(T=2.0, steps=4)
    assert grid.h == 0.5
    assert np.array_equal(grid.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(ValidationError):
        TimeGrid(T=0.0, steps=4)
    with pytest.raises(ValidationError):
        TimeGrid(T=1.0, steps=0)


def test_terminal_row_exact(two_state_model):
    vf, _ = solve(two_state_model, TimeGrid(T=1.0, steps=17))
    assert np.array_equal(vf.psi[-1], two_state_model.terminal)


def test_single_state_closed_form():
    c0, g = 0.7, 0.3
    m = single_state_model(c0, g)
    grid = TimeGrid(T=1.0, steps=100)
    vf, _ = solve(m, grid)
    exact = c0 * (1.0 - grid.times) + g
    assert np.max(np.abs(vf.psi[:, 0] - exact)) <= 1e-12 * np.max(np.abs(exact))


def test_two_state_matches_oracle(two_state_model):
    grid = TimeGrid(T=1.0, steps=2000)
    vf, _ = solve(two_state_model, grid)
    phi = linear_oracle(two_state_model, 0.0)
    assert np.max(np.abs(vf.phi[0] - phi) / phi) < 1e-10


def test_random_models_match_oracle_midpoints():
    rng = np.random.default_rng(7)
    for _ in range(5):
        m = random_linear_model(rng)
        grid = TimeGrid(T=1.0, steps=1000)
        vf, _ = solve(m, grid)
        # interior time point too, not just s = 0
        k = grid.steps // 2
        phi = linear_oracle(m, grid.times[k])
        assert np.max(np.abs(vf.phi[k] - phi) / np.abs(phi)) < 1e-6


def test_bellman_rhs_uncontrolled(two_state_model):
    psi = np.zeros(2)
    r0, a0 = bellman_rhs(two_state_model, psi, 0.0, 0)
    r1, _ = bellman_rhs(two_state_model, psi, 0.0, 1)
    # c - q + sum of rates (psi flat): 0 - 1 + 1 and 1 - 1 + 1
    assert r0 == pytest.approx(0.0, abs=1e-15)
    assert r1 == pytest.approx(1.0)
    assert a0 == 0.0


def test_bellman_argmin_smallest_tie(mm_model):
    # with psi == 0 the bracket is C1*i + a - a*i*(1 - 1); at i = 1 the
    # death-rate term cancels the effort exactly, so all actions tie
    psi = np.zeros(mm_model.n_states)
    _, a = bellman_rhs(mm_model, psi, 0.0, 1)
    assert a == 0.0  # smallest minimizer wins ties


def test_policy_values_on_grid(mm_model, grid_2000):
    _, policy = solve(mm_model, grid_2000)
    allowed = set(np.round(mm_model.actions(0), 12))
    assert set(np.round(np.unique(policy.actions), 12)) <= allowed


def test_extract_policy_matches_solve(mm_model):
    grid = TimeGrid(T=1.0, steps=200)
    vf, policy = solve(mm_model, grid)
    again = extract_policy(vf, mm_model)
    assert np.array_equal(policy.action_idx, again.action_idx)


def test_extract_policy_rejects_wrong_model(two_state_model, mm_model):
    vf, _ = solve(two_state_model, TimeGrid(T=1.0, steps=10))
    with pytest.raises(ValidationError, match="different model"):
        extract_policy(vf, mm_model)


def test_solve_is_deterministic(mm_model):
    grid = TimeGrid(T=1.0, steps=300)
    vf1, p1 = solve(mm_model, grid)
    vf2, p2 = solve(mm_model, grid)
    assert np.array_equal(vf1.psi, vf2.psi)
    assert np.array_equal(p1.action_idx, p2.action_idx)


def test_grid_horizon_must_match(mm_model):
    with pytest.raises(ValidationError, match="horizon"):
        solve(mm_model, TimeGrid(T=2.0, steps=100))


def test_certificate_bound_enforced(mm_model, mm_cert, grid_2000):
    vf, _ = solve(mm_model, grid_2000, certificate=mm_cert)  # must not raise
    assert np.isfinite(vf.psi).all()


def test_certificate_violation_raises(mm_cert):
    # a model whose start value breaks the (valid-for-another-model) bound
    doc = two_state_doc()
    doc["states"] = {"count": 40}
    doc["rates"] = []
    doc["costs"] = [{"state": i, "value": 500.0} for i in range(40)]
    doc["terminal"] = []
    hot = load_tabular(doc)
    with pytest.raises(NumericalError, match="exceeds the certificate bound"):
        solve(hot, TimeGrid(T=1.0, steps=10), certificate=mm_cert)


def test_linear_oracle_requires_linear_model(mm_model):
    with pytest.raises(ValidationError, match="singleton"):
        linear_oracle(mm_model, 0.0)


def test_solver_reports_blowup():
    doc = two_state_doc()
    doc["terminal"] = [{"state": 1, "value": 1000.0}]
    m = load_tabular(doc)
    # exp(psi_1 - psi_0) = exp(1000) overflows on the very first stage
    with pytest.raises(NumericalError, match="state 0"):
        solve(m, TimeGrid(T=1.0, steps=3))


def test_shifted_model_drops_past_segments():
    doc = two_state_doc()
    doc["rates"][0] = {"from": 0, "to": 1,
                       "schedule": {"breakpoints": [0.25, 0.5],
                                    "values": [1.0, 2.0, 3.0]}}
    m = load_tabular(doc)
    sh = shifted_model(m, 0.3)
    assert sh.horizon_T == pytest.approx(0.7)
    assert np.allclose(sh.breakpoints, [0.2])
    assert sh.rate(1, 0.0, 0, 0.0) == 2.0
    assert sh.rate(1, 0.3, 0, 0.0) == 3.0


def test_shift_consistency_time_homogeneous(mm_model):
    grid = TimeGrid(T=1.0, steps=400)
    vf, _ = solve(mm_model, grid)
    # identical arithmetic on the sub-grid: discrepancy is exactly zero
    assert shift_consistency(mm_model, vf, 0) == 0.0
    assert shift_consistency(mm_model, vf, 200) == 0.0
    assert shift_consistency(mm_model, vf, 400) == 0.0


def test_shift_consistency_time_varying():
    doc = two_state_doc()
    doc["costs"] = [{"state": 1, "schedule": {"breakpoints": [0.5],
                                              "values": [1.0, 3.0]}}]
    m = load_tabular(doc)
    vf, _ = solve(m, TimeGrid(T=1.0, steps=1000))
    assert shift_consistency(m, vf, 500) <= 1e-6


def test_constant_policy_values(mm_model):
    grid = TimeGrid(T=1.0, steps=5)
    pol = constant_policy(mm_model, grid, 2.0)
    assert np.all(pol.actions == 2.0)
    with pytest.raises(ValidationError, match="not on the grid"):
        constant_policy(mm_model, grid, 0.123)
