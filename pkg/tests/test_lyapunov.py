import math

import numpy as np
import pytest

from ctrisk import (CertificateError, LyapunovCertificate, MMInfinityParams,
                    ValidationError, build_mm_infinity, check_certificate,
                    derive_example_weights, export_certificate,
                    import_certificate, value_bound)
from ctrisk.lyapunov import CONDITION_NAMES


def test_example_weights_closed_form(mm_params):
    cert = derive_example_weights(mm_params)
    # d1 = 2(1+T)(C1+|C2|) = 4, d2 = 8
    assert np.allclose(cert.log_V, 4.0 * np.arange(40))
    assert np.allclose(cert.log_V1, 8.0 * np.arange(40))
    assert cert.log_rho == pytest.approx(5.0)
    assert cert.log_rho1 == pytest.approx(17.0)
    assert cert.log_M == pytest.approx(math.log(math.exp(8.0) + 3.0))
    assert cert.log_M1 == 0.0


def test_degenerate_costs_give_flat_weights():
    p = MMInfinityParams(lam=1.0, mu_min=0.5, mu_max=1.5, C1=0.0, C2=0.0,
                         N=10, horizon_T=1.0)
    cert = derive_example_weights(p)
    assert np.all(cert.log_V == 0.0)
    assert np.all(cert.log_V1 == 0.0)
    assert cert.log_rho == pytest.approx(1.0)


def test_all_conditions_pass_on_example(mm_model, mm_cert):
    assert set(mm_cert.checks) == set(CONDITION_NAMES)
    for name, check in mm_cert.checks.items():
        assert check.passed, name
    assert mm_cert.all_pass()


def test_check_locates_failure(mm_model, mm_params):
    cert = derive_example_weights(mm_params)
    bad = LyapunovCertificate(
        log_V=cert.log_V, log_V1=cert.log_V1,
        log_rho=math.log(0.5),  # too small: drift must fail
        log_rho1=cert.log_rho1, log_M=cert.log_M, log_M1=cert.log_M1)
    checks = check_certificate(mm_model, bad)
    assert not checks["drift"].passed
    assert checks["drift"].where is not None
    assert checks["majorant"].passed
    assert not bad.all_pass()


def test_check_failure_is_verdict_not_error(mm_model, mm_params):
    cert = derive_example_weights(mm_params)
    tiny = LyapunovCertificate(
        log_V=cert.log_V, log_V1=cert.log_V1, log_rho=cert.log_rho,
        log_rho1=cert.log_rho1, log_M=math.log(1.0 + 1e-12), log_M1=0.0)
    checks = check_certificate(mm_model, tiny)  # must not raise
    # exp(2(1+T)|c(0, a=2)|) = e^8 cannot fit under M ~ 1 at state 0
    assert not checks["cost-growth"].passed


def test_weight_length_mismatch(mm_model, mm_params):
    cert = derive_example_weights(mm_params)
    short = LyapunovCertificate(
        log_V=cert.log_V[:10], log_V1=cert.log_V1[:10], log_rho=cert.log_rho,
        log_rho1=cert.log_rho1, log_M=cert.log_M, log_M1=cert.log_M1)
    with pytest.raises(ValidationError, match="state window"):
        check_certificate(mm_model, short)


def test_validate_rejects_small_weights():
    with pytest.raises(ValidationError, match="V >= 1"):
        LyapunovCertificate(
            log_V=np.array([-0.1]), log_V1=np.array([0.0]),
            log_rho=0.0, log_rho1=0.0, log_M=1.0, log_M1=0.0).validate()
    with pytest.raises(ValidationError, match="M must be > 1"):
        LyapunovCertificate(
            log_V=np.array([0.0]), log_V1=np.array([0.0]),
            log_rho=0.0, log_rho1=0.0, log_M=0.0, log_M1=0.0).validate()


def test_log_domain_weights_beyond_double_range(mm_params, mm_model):
    # push d1 far past the overflow point of exp(); checks must stay exact
    p = MMInfinityParams(lam=1.0, mu_min=0.0, mu_max=2.0, C1=200.0, C2=0.0,
                         N=40, horizon_T=1.0)
    cert = derive_example_weights(p)
    assert cert.log_V[-1] > 710.0  # exp would overflow
    model = build_mm_infinity(p)
    checks = check_certificate(model, cert)
    for name in ("drift", "majorant", "squared-drift", "weight-coupling"):
        assert checks[name].passed, name


def test_value_bound_log_arithmetic():
    cert = LyapunovCertificate(
        log_V=np.array([0.0]), log_V1=np.array([0.0]),
        log_rho=0.0, log_rho1=0.0, log_M=1.0, log_M1=0.0)
    cert.checks = {}
    from ctrisk.lyapunov import ConditionCheck
    for name in CONDITION_NAMES:
        cert.checks[name] = ConditionCheck(name=name, passed=True,
                                           lhs_log=0.0, rhs_log=1.0,
                                           margin=1.0, where=None)
    # log M + T * rho + log V = 1 + 1*1 + 0
    assert value_bound(cert, 1.0, 0) == pytest.approx(2.0)


def test_value_bound_requires_passing_checks(mm_params):
    cert = derive_example_weights(mm_params)
    with pytest.raises(CertificateError, match="without certificate"):
        value_bound(cert, 1.0, 0)  # never checked


def test_roundtrip_json(tmp_path, mm_cert):
    path = tmp_path / "cert.json"
    export_certificate(mm_cert, path)
    back = import_certificate(path)
    assert np.array_equal(back.log_V, mm_cert.log_V)
    assert np.array_equal(back.log_V1, mm_cert.log_V1)
    assert back.log_rho == mm_cert.log_rho
    assert back.log_rho1 == mm_cert.log_rho1
    assert back.log_M == mm_cert.log_M
    assert back.log_M1 == mm_cert.log_M1
    assert back.all_pass()
    assert back.checks["drift"].where == mm_cert.checks["drift"].where
