import math

import numpy as np
import pytest

from ctrisk import (MMInfinityParams, ValidationError, build_mm_infinity,
                    load_tabular, q_star, truncate)
from ctrisk.errors import ModelDocumentError

from conftest import two_state_doc


def test_mm_infinity_rates_and_costs():
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=3, horizon_T=1.0)
    m = build_mm_infinity(p)
    assert m.rate(2, 0.3, 1, 0.5) == 1.0
    assert m.rate(0, 0.0, 1, 0.5) == 0.5
    assert m.cost(0.0, 1, 0.5) == 1.5
    assert m.g(1) == 0.0
    # conservativeness forces the diagonal
    assert m.rate(1, 0.0, 1, 0.5) == -1.5


def test_mm_infinity_degenerate_interval():
    p = MMInfinityParams(lam=2.0, mu_min=1.0, mu_max=1.0, C1=0.0, C2=1.0,
                         N=2, horizon_T=1.0)
    m = build_mm_infinity(p)
    assert m.n_act.tolist() == [1, 1]
    assert m.g(1) == -1.0


def test_mm_infinity_boundary_absorbs_arrivals():
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=4, horizon_T=1.0)
    m = build_mm_infinity(p)
    top = m.n_states - 1
    # arrival dropped at the window edge, deaths still active
    for a in m.actions(top):
        assert m.exit_rate(0.0, top, a) == a * top


def test_mm_infinity_rejects_bad_params():
    with pytest.raises(ValidationError, match="lam"):
        MMInfinityParams(lam=0.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=3, horizon_T=1.0).validate()
    with pytest.raises(ValidationError, match="mu_min"):
        MMInfinityParams(lam=1.0, mu_min=3.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=3, horizon_T=1.0).validate()
    with pytest.raises(ValidationError, match="N"):
        build_mm_infinity(MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0,
                                           C1=1.0, C2=0.0, N=1, horizon_T=1.0))


def test_mm_infinity_deterministic():
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.5,
                         N=6, horizon_T=2.0)
    assert build_mm_infinity(p).model_hash() == build_mm_infinity(p).model_hash()


def test_conservativeness_on_grid():
    p = MMInfinityParams(lam=1.3, mu_min=0.2, mu_max=1.7, C1=0.4, C2=-0.3,
                         N=7, horizon_T=1.5)
    m = build_mm_infinity(p)
    for i in range(m.n_states):
        sums = m.rates[0, i, : m.n_act[i]].sum(axis=1)
        assert np.all(np.abs(sums) <= 1e-12 * np.maximum(
            np.abs(m.rates[0, i, : m.n_act[i]]).sum(axis=1), 1.0))


def test_q_star_examples():
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=6, horizon_T=1.0)
    m = build_mm_infinity(p)
    assert q_star(m, 3) == 1.0 + 2.0 * 3
    # absorbing state has q* = 0
    doc = two_state_doc()
    doc["rates"] = [{"from": 0, "to": 1, "value": 1.0}]
    m2 = load_tabular(doc)
    assert q_star(m2, 1) == 0.0


def test_q_star_over_schedule_segments():
    doc = two_state_doc()
    doc["rates"] = [{"from": 0, "to": 1,
                     "schedule": {"breakpoints": [0.5], "values": [1.0, 3.0]}},
                    {"from": 1, "to": 0, "value": 1.0}]
    m = load_tabular(doc)
    assert q_star(m, 0) == 3.0


def test_q_star_dominates_grid():
    p = MMInfinityParams(lam=0.7, mu_min=0.1, mu_max=1.9, C1=0.5, C2=0.2,
                         N=8, horizon_T=1.0)
    m = build_mm_infinity(p)
    for i in range(m.n_states):
        for a in m.actions(i):
            assert m.exit_rate(0.0, i, a) <= q_star(m, i) + 1e-15


# ---------------------------------------------------------------------------
# tabular documents

def test_load_two_state():
    m = load_tabular(two_state_doc())
    assert m.rate(1, 0.0, 0, 0.0) == 1.0
    assert m.rate(0, 0.0, 0, 0.0) == -1.0
    assert m.rate(1, 0.0, 1, 0.0) == -1.0
    assert m.cost(0.0, 1, 0.0) == 1.0
    assert m.g(0) == 0.0


def test_load_rejects_negative_rate():
    doc = two_state_doc()
    doc["rates"][0]["value"] = -0.5
    with pytest.raises(ModelDocumentError, match=r"rates\[0\].*negative"):
        load_tabular(doc)


def test_load_rejects_unsorted_breakpoints():
    doc = two_state_doc()
    doc["rates"][0] = {"from": 0, "to": 1,
                       "schedule": {"breakpoints": [0.5, 0.2],
                                    "values": [1.0, 2.0, 3.0]}}
    with pytest.raises(ModelDocumentError, match="breakpoints not ascending"):
        load_tabular(doc)


def test_load_rejects_diagonal_entry():
    doc = two_state_doc()
    doc["rates"].append({"from": 1, "to": 1, "value": 2.0})
    with pytest.raises(ModelDocumentError, match="diagonal"):
        load_tabular(doc)


def test_load_rejects_duplicates_and_unknown_keys():
    doc = two_state_doc()
    doc["rates"].append({"from": 0, "to": 1, "value": 2.0})
    with pytest.raises(ModelDocumentError, match="duplicate"):
        load_tabular(doc)
    doc = two_state_doc()
    doc["typo"] = 1
    with pytest.raises(ModelDocumentError, match="unknown key"):
        load_tabular(doc)
    doc = two_state_doc()
    doc["rates"][0]["weight"] = 2.0
    with pytest.raises(ModelDocumentError, match="unknown key"):
        load_tabular(doc)


def test_load_time_schedule_segments():
    doc = two_state_doc()
    doc["rates"][0] = {"from": 0, "to": 1,
                       "schedule": {"breakpoints": [0.25], "values": [1.0, 2.0]}}
    doc["costs"] = [{"state": 1,
                     "schedule": {"breakpoints": [0.5], "values": [1.0, 4.0]}}]
    m = load_tabular(doc)
    assert m.n_segments == 3
    assert m.rate(1, 0.0, 0, 0.0) == 1.0
    assert m.rate(1, 0.3, 0, 0.0) == 2.0
    assert m.cost(0.3, 1, 0.0) == 1.0
    assert m.cost(0.75, 1, 0.0) == 4.0


def test_load_mm_infinity_document():
    doc = {"model": {"kind": "mm_infinity", "lambda": 1.0, "mu_min": 0.0,
                     "mu_max": 2.0, "C1": 1.0, "C2": 0.0},
           "states": {"count": 5}, "horizon": 1.0}
    m = load_tabular(doc)
    assert m.n_states == 5
    assert m.n_act[0] == 21


# ---------------------------------------------------------------------------
# truncation

def test_truncate_level_set():
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=5, horizon_T=1.0)
    m = build_mm_infinity(p)
    log_V = 4.0 * np.arange(5)
    tr = truncate(m, log_V, level=60.0)
    # exp(4) ~ 54.6 <= 60 < exp(8)
    assert tr.active_set.tolist() == [0, 1]
    # inside: untouched; outside: absorbing and free
    assert np.array_equal(tr.model.rates[:, :2], m.rates[:, :2])
    assert np.all(tr.model.rates[:, 2:] == 0.0)
    assert np.all(tr.model.costs[:, 2:, : 1] == 0.0)
    assert np.all(tr.model.terminal[2:] == 0.0)
    assert np.array_equal(tr.model.terminal[:2], m.terminal[:2])


def test_truncate_idempotent():
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=6, horizon_T=1.0)
    m = build_mm_infinity(p)
    log_V = 2.0 * np.arange(6)
    once = truncate(m, log_V, log_level=5.0)
    twice = truncate(once.model, log_V, log_level=5.0)
    assert np.array_equal(once.model.rates, twice.model.rates)
    assert np.array_equal(once.model.costs, twice.model.costs)
    assert np.array_equal(once.model.terminal, twice.model.terminal)


def test_truncate_empty_level_set():
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                         N=4, horizon_T=1.0)
    m = build_mm_infinity(p)
    with pytest.raises(ValidationError, match="empty level set"):
        truncate(m, 1.0 + np.arange(4), log_level=0.5)
