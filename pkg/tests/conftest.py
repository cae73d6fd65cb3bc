import numpy as np
import pytest

from ctrisk import (MMInfinityParams, TimeGrid, build_mm_infinity,
                    check_certificate, derive_example_weights, load_tabular)


@pytest.fixture(scope="session")
def mm_params():
    return MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=1.0, C2=0.0,
                            N=40, horizon_T=1.0)


@pytest.fixture(scope="session")
def mm_model(mm_params):
    return build_mm_infinity(mm_params)


@pytest.fixture(scope="session")
def mm_cert(mm_params, mm_model):
    cert = derive_example_weights(mm_params)
    check_certificate(mm_model, cert)
    return cert


@pytest.fixture(scope="session")
def grid_2000():
    return TimeGrid(T=1.0, steps=2000)


def two_state_doc():
    """Symmetric two-state chain, cost only in state 1, no terminal cost."""
    return {
        "model": {"kind": "tabular"},
        "horizon": 1.0,
        "states": {"count": 2},
        "actions": {"global": [0.0]},
        "rates": [
            {"from": 0, "to": 1, "value": 1.0},
            {"from": 1, "to": 0, "value": 1.0},
        ],
        "costs": [{"state": 1, "value": 1.0}],
        "terminal": [],
    }


@pytest.fixture(scope="session")
def two_state_model():
    return load_tabular(two_state_doc())


def random_linear_model(rng, n_max=8, rate_hi=3.0, cost_hi=1.0, horizon=1.0):
    """A random time-homogeneous singleton-action model for oracle tests."""
    n = int(rng.integers(2, n_max + 1))
    rates = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.7:
                rates.append({"from": i, "to": j,
                              "value": float(rng.uniform(0.0, rate_hi))})
    doc = {
        "model": {"kind": "tabular"},
        "horizon": horizon,
        "states": {"count": n},
        "actions": {"global": [0.0]},
        "rates": rates,
        "costs": [{"state": i, "value": float(rng.uniform(-cost_hi, cost_hi))}
                  for i in range(n)],
        "terminal": [{"state": i, "value": float(rng.uniform(-cost_hi, cost_hi))}
                     for i in range(n)],
    }
    return load_tabular(doc)
