"""Drift-condition certificates.

A certificate carries two per-state weight vectors (stored as log-values,
since the natural weights grow like exp(d*i)) and four constants.  Five
inequalities are checked numerically at every (segment, state, action) grid
point, all comparisons done in log domain so that weights far beyond the
double range remain exact:

  (1a)  sum_j q(j|t,i,a) V(j)      <= rho  * V(i)
  (1b)  q*(i)                      <= M    * V(i)
  (1c)  exp(2(1+T)|c|), exp(2(1+T)|g|) <= M * V(i)
  (2a)  sum_j V1(j)^2 q(j|t,i,a)   <= rho1 * V1(i)^2
  (2b)  V(i)^2                     <= M1   * V1(i)

A passing certificate feeds the uniform value bound M * exp(T*rho) * V(i)
and defines the level sets used by the truncation ladder.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateError, ValidationError
from .model import MMInfinityParams, ModelSpec, q_star

CHECK_RTOL = 1e-12

CONDITION_NAMES = ("drift", "majorant", "cost-growth", "squared-drift",
                   "weight-coupling")


@dataclass
class ConditionCheck:
    name: str
    passed: bool
    lhs_log: float          # log of the left side at the tightest grid point
    rhs_log: float
    margin: float           # linear-domain rhs - lhs at that point (inf-safe)
    where: tuple | None     # (segment, state, action index) or (state,)

    def to_dict(self):
        return {
            "name": self.name, "passed": self.passed,
            "lhs_log": self.lhs_log, "rhs_log": self.rhs_log,
            "margin": self.margin,
            "where": list(self.where) if self.where is not None else None,
        }


def _lin_margin(lhs_log, rhs_log):
    with np.errstate(over="ignore"):
        lhs, rhs = float(np.exp(lhs_log)), float(np.exp(rhs_log))
    if math.isinf(lhs) and math.isinf(rhs):
        # both overflow: report the sign of the (well-defined) log gap
        gap = rhs_log - lhs_log
        return 0.0 if gap == 0 else math.copysign(math.inf, gap)
    return rhs - lhs


@dataclass
class LyapunovCertificate:
    """Weights and constants for the drift conditions, log-domain canonical."""

    log_V: np.ndarray
    log_V1: np.ndarray
    log_rho: float
    log_rho1: float
    log_M: float
    log_M1: float
    checks: dict | None = field(default=None)

    @property
    def rho(self):
        return math.exp(self.log_rho)

    @property
    def rho1(self):
        return math.exp(self.log_rho1)

    @property
    def M(self):
        return math.exp(self.log_M)

    @property
    def M1(self):
        return math.exp(self.log_M1)

    def validate(self):
        if np.any(np.asarray(self.log_V) < 0) or np.any(np.asarray(self.log_V1) < 0):
            raise ValidationError("weights must satisfy V >= 1 and V1 >= 1")
        if not self.log_M > 0:
            raise ValidationError(f"M must be > 1, got M = {self.M}")
        if math.isnan(self.log_M1) or self.log_M1 == -math.inf:
            raise ValidationError("M1 must be > 0")
        if self.log_rho == -math.inf or self.log_rho1 == -math.inf:
            raise ValidationError("rho and rho1 must be > 0")
        return self

    def all_pass(self):
        return self.checks is not None and all(
            c.passed for c in self.checks.values())

    def to_dict(self):
        return {
            "log_V": [float(v) for v in self.log_V],
            "log_V1": [float(v) for v in self.log_V1],
            "log_rho": self.log_rho, "log_rho1": self.log_rho1,
            "log_M": self.log_M, "log_M1": self.log_M1,
            "checks": None if self.checks is None else
                      {k: c.to_dict() for k, c in self.checks.items()},
        }

    @classmethod
    def from_dict(cls, data):
        checks = data.get("checks")
        if checks is not None:
            checks = {
                k: ConditionCheck(
                    name=c["name"], passed=c["passed"], lhs_log=c["lhs_log"],
                    rhs_log=c["rhs_log"], margin=c["margin"],
                    where=None if c["where"] is None else tuple(c["where"]),
                )
                for k, c in checks.items()
            }
        return cls(
            log_V=np.asarray(data["log_V"], dtype=np.float64),
            log_V1=np.asarray(data["log_V1"], dtype=np.float64),
            log_rho=float(data["log_rho"]), log_rho1=float(data["log_rho1"]),
            log_M=float(data["log_M"]), log_M1=float(data["log_M1"]),
            checks=checks,
        ).validate()


def export_certificate(cert: LyapunovCertificate, path):
    with open(path, "w") as fh:
        json.dump(cert.to_dict(), fh, indent=1)
        fh.write("\n")


def import_certificate(path) -> LyapunovCertificate:
    with open(path) as fh:
        return LyapunovCertificate.from_dict(json.load(fh))


def derive_example_weights(params: MMInfinityParams) -> LyapunovCertificate:
    """Analytic weights for the M/M/inf example.

    V(i) = exp(d1*i) with d1 = 2(1+T)(C1+|C2|), rho = exp(d1+1)*lam,
    M = exp(2(1+T)*mu_max) + mu_max + lam; V1 uses d2 = 2*d1 with M1 = 1.
    The squared-weight drift constant is rho1 = exp(2*d2+1)*lam: the drift
    inequality for V1^2 weighs states by exp(2*d2*i), so the exponent in the
    generic birth-death drift bound exp(d+1)*lam must be d = 2*d2.
    """
    params.validate()
    T = params.horizon_T
    d1 = 2.0 * (1.0 + T) * (params.C1 + abs(params.C2))
    d2 = 2.0 * d1
    i = np.arange(params.N, dtype=np.float64)
    return LyapunovCertificate(
        log_V=d1 * i,
        log_V1=d2 * i,
        log_rho=d1 + 1.0 + math.log(params.lam),
        log_rho1=2.0 * d2 + 1.0 + math.log(params.lam),
        log_M=float(np.logaddexp(2.0 * (1.0 + T) * params.mu_max,
                                 math.log(params.mu_max + params.lam))),
        log_M1=0.0,
    ).validate()


def _logsumexp(terms):
    if len(terms) == 0:
        return -math.inf
    arr = np.asarray(terms)
    hi = arr.max()
    return float(hi + np.log(np.sum(np.exp(arr - hi))))


def _worst(points):
    """Reduce (lhs_log, rhs_log, where) tuples to the tightest one."""
    best = None
    for lhs, rhs, where in points:
        gap = rhs - lhs
        if best is None or gap < best[0]:
            best = (gap, lhs, rhs, where)
    return best


def _as_check(name, points, rtol):
    gap, lhs, rhs, where = _worst(points)
    return ConditionCheck(
        name=name, passed=bool(gap >= -rtol), lhs_log=lhs, rhs_log=rhs,
        margin=_lin_margin(lhs, rhs), where=where,
    )


def check_certificate(model: ModelSpec, cert: LyapunovCertificate,
                      rtol=CHECK_RTOL) -> dict:
    """Evaluate all five inequalities on the model's full (t, i, a) grid.

    Time is scanned over the schedule segments (exact for piecewise-constant
    rates and costs).  Returns a dict of ConditionCheck keyed by condition
    name and stores it on the certificate; failures are verdicts, not errors.
    """
    cert.validate()
    N = model.n_states
    if len(cert.log_V) != N or len(cert.log_V1) != N:
        raise ValidationError("certificate weights do not cover the state window")
    log_V, log_V1 = cert.log_V, cert.log_V1
    T = model.horizon_T
    two1T = 2.0 * (1.0 + T)

    drift, sq_drift, cost_growth = [], [], []
    for s in range(model.n_segments):
        for i in range(N):
            for m in range(int(model.n_act[i])):
                row = model.rates[s, i, m]
                q = -row[i]
                js = [j for j in range(N) if j != i and row[j] > 0]
                log_r = [math.log(row[j]) for j in js]
                lhs_v = _logsumexp([lr + log_V[j] for lr, j in zip(log_r, js)])
                lhs_v1 = _logsumexp([lr + 2.0 * log_V1[j] for lr, j in zip(log_r, js)])
                log_q = math.log(q) if q > 0 else -math.inf
                drift.append((
                    lhs_v, np.logaddexp(log_q, cert.log_rho) + log_V[i],
                    (s, i, m)))
                sq_drift.append((
                    lhs_v1, np.logaddexp(log_q, cert.log_rho1) + 2.0 * log_V1[i],
                    (s, i, m)))
                cost_growth.append((
                    two1T * abs(model.costs[s, i, m]),
                    cert.log_M + log_V[i], (s, i, m)))

    majorant = [(math.log(q_star(model, i)) if q_star(model, i) > 0 else -math.inf,
                 cert.log_M + log_V[i], (i,)) for i in range(N)]
    terminal_growth = [(two1T * abs(model.terminal[i]),
                        cert.log_M + log_V[i], (i,)) for i in range(N)]
    coupling = [(2.0 * log_V[i], cert.log_M1 + log_V1[i], (i,)) for i in range(N)]

    checks = {
        "drift": _as_check("drift", drift, rtol),
        "majorant": _as_check("majorant", majorant, rtol),
        "cost-growth": _as_check("cost-growth", cost_growth + terminal_growth, rtol),
        "squared-drift": _as_check("squared-drift", sq_drift, rtol),
        "weight-coupling": _as_check("weight-coupling", coupling, rtol),
    }
    cert.checks = checks
    return checks


def value_bound(cert: LyapunovCertificate, T, i) -> float:
    """Log of the uniform value bound M * exp(T*rho) * V(i).

    Requires a certificate whose drift/majorant/cost-growth checks passed.
    """
    needed = ("drift", "majorant", "cost-growth")
    if cert.checks is None or not all(cert.checks[k].passed for k in needed):
        raise CertificateError("bound unavailable without certificate")
    return float(cert.log_M + T * cert.rho + cert.log_V[i])
