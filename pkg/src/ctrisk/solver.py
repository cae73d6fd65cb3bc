"""Backward integration of the risk-sensitive optimality equation.

The value function is carried in log domain (psi = log phi), where the
backward equation reads, per state,

    d(psi)/ds = -min_a [ c(s,i,a) - q(s,i,a)
                         + sum_{j != i} q(j|s,i,a) exp(psi_j - psi_i) ],

with psi(T, i) = g(i).  A fixed-step classical RK4 march handles the time
axis; the minimizing action at each node is recorded as a piecewise-constant
right-continuous Markov policy.  For uncontrolled time-homogeneous models a
matrix-exponential oracle gives the exact solution of the (linear) equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._backend import kernels
from .errors import NumericalError, ValidationError
from .lyapunov import LyapunovCertificate, value_bound
from .model import ModelSpec

BOUND_SLACK = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValidationError(f"horizon must be > 0, got {self.T}")
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")

    @property
    def h(self):
        return self.T / self.steps

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.h

    def spec(self):
        return f"T={self.T!r},steps={self.steps}"


@dataclass(frozen=True)
class ValueFunction:
    """psi(k, i) = log phi(t_k, i) on a uniform grid; linear view on demand."""

    grid: TimeGrid
    psi: np.ndarray = field(repr=False)
    model_hash: str = ""

    @property
    def phi(self):
        with np.errstate(over="ignore"):
            return np.exp(self.psi)

    def psi0(self, i):
        return float(self.psi[0, i])


@dataclass(frozen=True)
class Policy:
    """Deterministic Markov policy, constant on [t_k, t_{k+1})."""

    grid: TimeGrid
    action_idx: np.ndarray = field(repr=False)  # (steps, N) int64 grid indices
    actions: np.ndarray = field(repr=False)     # (steps, N) action values
    model_hash: str = ""

    def action(self, k, i):
        return float(self.actions[k, i])


def _policy_from_idx(model, grid, idx):
    vals = model.act_vals[np.arange(model.n_states)[None, :], idx]
    vals = np.ascontiguousarray(vals)
    vals.flags.writeable = False
    return Policy(grid=grid, action_idx=idx, actions=vals,
                  model_hash=model.model_hash())


def constant_policy(model: ModelSpec, grid: TimeGrid, a) -> Policy:
    """Policy playing the fixed grid action a at every (t, i)."""
    idx = np.empty((grid.steps, model.n_states), dtype=np.int64)
    for i in range(model.n_states):
        idx[:, i] = model.action_index(i, a)
    idx.flags.writeable = False
    return _policy_from_idx(model, grid, idx)


def bellman_rhs(model: ModelSpec, psi_row, t, i):
    """Minimized log-domain Bellman rate at (t, i) and the smallest
    minimizing action on the grid."""
    psi_row = np.asarray(psi_row, dtype=np.float64)
    if not np.all(np.isfinite(psi_row)):
        raise ValidationError("psi_row must be finite")
    if model.n_act[i] < 1:
        raise ValidationError(f"state {i} has an empty action grid")
    rmin, amin = kernels.bellman_row(
        model.breakpoints, model.rates, model.costs, model.n_act, psi_row, t)
    return float(rmin[i]), float(model.act_vals[i, amin[i]])


def solve(model: ModelSpec, grid: TimeGrid,
          certificate: LyapunovCertificate | None = None):
    """March the optimality equation from psi(T,.) = g down to s = 0.

    Returns (ValueFunction, Policy).  Deterministic: identical inputs give
    bit-identical outputs.  With a passing certificate attached, the start
    values are checked against the uniform value bound.
    """
    if abs(grid.T - model.horizon_T) > 1e-12 * max(1.0, model.horizon_T):
        raise ValidationError(
            f"grid horizon {grid.T} does not match model horizon {model.horizon_T}")
    psi, pol = kernels.solve_backward(
        model.breakpoints, model.rates, model.costs, model.n_act,
        model.terminal, grid.T, grid.steps)
    psi.flags.writeable = False
    pol.flags.writeable = False
    vf = ValueFunction(grid=grid, psi=psi, model_hash=model.model_hash())
    policy = _policy_from_idx(model, grid, pol)
    if certificate is not None:
        for i in range(model.n_states):
            bound = value_bound(certificate, grid.T, i)
            if psi[0, i] > bound + BOUND_SLACK:
                raise NumericalError(
                    f"psi(0,{i}) = {psi[0, i]:.6g} exceeds the certificate "
                    f"bound {bound:.6g}: solver or certificate defect")
    return vf, policy


def extract_policy(vf: ValueFunction, model: ModelSpec) -> Policy:
    """Re-derive the argmin table from a solved value function.

    Matches the policy emitted by solve exactly (same kernel, same
    tie-break: smallest minimizing action)."""
    if vf.model_hash != model.model_hash():
        raise ValidationError("value function was solved on a different model")
    steps = vf.grid.steps
    h = vf.grid.h
    idx = np.empty((steps, model.n_states), dtype=np.int64)
    for k in range(steps):
        _, amin = kernels.bellman_row(
            model.breakpoints, model.rates, model.costs, model.n_act,
            vf.psi[k], k * h)
        idx[k] = amin
    idx.flags.writeable = False
    return _policy_from_idx(model, vf.grid, idx)


def linear_oracle(model: ModelSpec, s, i=None):
    """Exact value of the (uncontrolled) linear backward equation at time s.

    Requires singleton action grids and time-homogeneous rates.  Computes
    row(s) of expm((T-s) (Q + diag(c))) applied to exp(g) via
    scaling-and-squaring, independent of the RK4 path.
    """
    if np.any(model.n_act != 1):
        raise ValidationError("linear oracle needs singleton action grids")
    if model.n_segments != 1:
        raise ValidationError("linear oracle needs time-homogeneous rates")
    if not 0 <= s <= model.horizon_T:
        raise ValidationError(f"s = {s} outside [0, T]")
    Q = model.rates[0, :, 0, :]
    c = model.costs[0, :, 0]
    A = Q + np.diag(c)
    phi = scipy.linalg.expm((model.horizon_T - s) * A) @ np.exp(model.terminal)
    return phi if i is None else float(phi[i])


def shifted_model(model: ModelSpec, t_s) -> ModelSpec:
    """The model restarted at time t_s: horizon T - t_s, schedules shifted."""
    if not 0 <= t_s < model.horizon_T:
        raise ValidationError(f"shift time {t_s} outside [0, T)")
    seg0 = model.segment_of(t_s)
    keep = model.breakpoints > t_s
    new_breaks = np.ascontiguousarray(model.breakpoints[keep] - t_s)
    new_breaks.flags.writeable = False
    rates = np.ascontiguousarray(model.rates[seg0:])
    costs = np.ascontiguousarray(model.costs[seg0:])
    rates.flags.writeable = False
    costs.flags.writeable = False
    return ModelSpec(
        n_states=model.n_states,
        horizon_T=model.horizon_T - t_s,
        breakpoints=new_breaks,
        act_vals=model.act_vals,
        n_act=model.n_act,
        rates=rates,
        costs=costs,
        terminal=model.terminal,
        boundary_mode=model.boundary_mode,
    ).validate()


def shift_consistency(model: ModelSpec, vf: ValueFunction, s_index) -> float:
    """Max log-domain discrepancy between psi(t_s, .) and a fresh solve of
    the t_s-shifted model, witnessing uniqueness of the solution."""
    steps = vf.grid.steps
    if not 0 <= s_index <= steps:
        raise ValidationError(f"s_index {s_index} outside 0..{steps}")
    if s_index == steps:
        return float(np.max(np.abs(vf.psi[steps] - model.terminal)))
    if s_index == 0:
        shifted = model
    else:
        shifted = shifted_model(model, s_index * vf.grid.h)
    sub_grid = TimeGrid(T=shifted.horizon_T, steps=steps - s_index)
    sub_vf, _ = solve(shifted, sub_grid)
    return float(np.max(np.abs(sub_vf.psi[0] - vf.psi[s_index])))


def weighted_derivative_norm(vf: ValueFunction, cert: LyapunovCertificate) -> float:
    """Diagnostic: max over nodes of |dpsi/dt| * phi / V1 from forward
    differences; finite values are consistent with the solution class the
    uniqueness argument works in."""
    dpsi = np.abs(np.diff(vf.psi, axis=0)) / vf.grid.h
    with np.errstate(divide="ignore", over="ignore"):
        log_term = np.log(dpsi) + vf.psi[:-1] - cert.log_V1[None, :]
        return float(np.exp(np.max(log_term)))
