"""Monte Carlo simulation of the controlled jump process.

Paths are generated by thinning: candidate events arrive at the per-state
majorant rate q*(i) and are accepted with probability q(t,i,f(t,i))/q*(i),
which is exact for the piecewise-constant policies produced by the solver.
Running cost is integrated in closed form over each sojourn (the integrand
is piecewise constant in t given the state), so the only randomness is in
the jump skeleton.

Each path owns a Philox stream keyed by (master_seed, path index); results
are bit-reproducible for a fixed seed regardless of backend or worker count,
and common random numbers across policies come for free by reusing the keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels_py
from ._backend import kernels
from .errors import ValidationError
from .model import ModelSpec, q_star
from .solver import Policy

DEFAULT_EXPLOSION_GUARD = 10 ** 6


@dataclass(frozen=True)
class PathOutcome:
    jump_times: np.ndarray = field(repr=False)
    visited_states: np.ndarray = field(repr=False)  # starts at the initial state
    log_utility: float = 0.0
    jump_count: int = 0


@dataclass(frozen=True)
class MCEstimate:
    """Log-domain estimate of E[exp(integral c dt + g)] with a delta-method
    standard error; exactly reproducible from (model, policy, seed)."""

    n_paths: int
    log_mean: float
    log_second_moment: float
    std_error: float
    master_seed: int

    @property
    def estimate(self):
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_mean))

    @property
    def rel_std_error(self):
        """std_error / estimate, stable even when the estimate overflows."""
        if self.std_error == 0.0:
            return 0.0
        spread = self.log_second_moment - 2.0 * self.log_mean
        return math.sqrt(max(math.expm1(spread), 0.0) / (self.n_paths - 1))


def _check_pair(model, policy):
    if policy.model_hash != model.model_hash():
        raise ValidationError("policy was extracted from a different model")
    if abs(policy.grid.T - model.horizon_T) > 1e-12 * max(1.0, model.horizon_T):
        raise ValidationError("policy grid does not cover the model horizon")


def _sim_tables(model: ModelSpec, policy: Policy):
    """Per-state majorants plus the cumulative-cost tables shared by both
    kernel backends: F(i,t) = cum[i,p] + (t - nodes[p]) * val[i,p]."""
    grid = policy.grid
    qs = np.array([q_star(model, i) for i in range(model.n_states)])
    nodes = np.union1d(grid.times, model.breakpoints)
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    kk = np.minimum((mids / grid.h).astype(np.int64), grid.steps - 1)
    ss = np.searchsorted(model.breakpoints, mids, side="right")
    P = len(nodes) - 1
    val = np.empty((model.n_states, P))
    states = np.arange(model.n_states)
    for p in range(P):
        val[:, p] = model.costs[ss[p], states, policy.action_idx[kk[p], states]]
    widths = np.diff(nodes)
    cum = np.zeros((model.n_states, P))
    cum[:, 1:] = np.cumsum(val[:, :-1] * widths[:-1], axis=1)
    return qs, np.ascontiguousarray(nodes), np.ascontiguousarray(val), cum


def simulate_path(model: ModelSpec, policy: Policy, i0, seed, path_index=0,
                  max_jumps=DEFAULT_EXPLOSION_GUARD) -> PathOutcome:
    """One thinned path with its full jump record.

    Uses the stream keyed by (seed, path_index), so outcome `p` of
    estimate_value(master_seed=seed) is replayed by path_index=p.
    """
    _check_pair(model, policy)
    if not 0 <= i0 < model.n_states:
        raise ValidationError(f"initial state {i0} outside the window")
    qs, nodes, val, cum = _sim_tables(model, policy)
    logu, jumps, _, record = _kernels_py.simulate_one(
        model.breakpoints, model.rates, qs, policy.action_idx,
        policy.grid.h, policy.grid.steps, model.horizon_T, model.terminal,
        nodes, val, cum, int(i0), int(seed), int(path_index), int(max_jumps))
    times = np.array([t for t, _ in record])
    states = np.array([i0] + [j for _, j in record], dtype=np.int64)
    return PathOutcome(jump_times=times, visited_states=states,
                       log_utility=float(logu), jump_count=int(jumps))


def _path_log_utils(model, policy, i0, n_paths, master_seed,
                    max_jumps=DEFAULT_EXPLOSION_GUARD):
    _check_pair(model, policy)
    if not 0 <= i0 < model.n_states:
        raise ValidationError(f"initial state {i0} outside the window")
    if n_paths < 1:
        raise ValidationError(f"n_paths must be >= 1, got {n_paths}")
    qs, nodes, val, cum = _sim_tables(model, policy)
    return kernels.simulate_batch(
        model.breakpoints, model.rates, qs, policy.action_idx,
        policy.grid.h, policy.grid.steps, model.horizon_T, model.terminal,
        nodes, val, cum, int(i0), int(n_paths), int(master_seed),
        int(max_jumps))


def _stream_logsumexp(values):
    """Sequential log-sum-exp in the given order; order-fixed for
    bit-reproducible aggregation."""
    m = -math.inf
    s = 0.0
    for v in values:
        if v == -math.inf:
            continue
        if v <= m:
            s += math.exp(v - m)
        else:
            s = s * math.exp(m - v) + 1.0
            m = v
    return -math.inf if m == -math.inf else m + math.log(s)


def _aggregate(log_utils, master_seed) -> MCEstimate:
    n = len(log_utils)
    log_m1 = _stream_logsumexp(log_utils) - math.log(n)
    log_m2 = _stream_logsumexp(2.0 * log_utils) - math.log(n)
    if n == 1 or np.all(log_utils == log_utils[0]):
        se = 0.0
    else:
        rel = math.sqrt(max(math.expm1(log_m2 - 2.0 * log_m1), 0.0) / (n - 1))
        with np.errstate(over="ignore"):
            se = float(np.exp(log_m1) * rel)
    return MCEstimate(n_paths=n, log_mean=float(log_m1),
                      log_second_moment=float(log_m2), std_error=se,
                      master_seed=int(master_seed))


def estimate_value(model: ModelSpec, policy: Policy, i0, n_paths, master_seed,
                   max_jumps=DEFAULT_EXPLOSION_GUARD) -> MCEstimate:
    """Monte Carlo estimate of the policy's risk-sensitive value from i0."""
    log_utils, _ = _path_log_utils(model, policy, i0, n_paths, master_seed,
                                   max_jumps)
    return _aggregate(log_utils, master_seed)


@dataclass(frozen=True)
class PolicyComparison:
    labels: tuple
    estimates: tuple          # MCEstimate per policy, same order as labels
    mean_diffs: dict = field(repr=False)  # (label_a, label_b) -> paired mean of e^uA - e^uB
    se_diffs: dict = field(repr=False)    # (label_a, label_b) -> paired standard error

    def ranking(self):
        order = np.argsort([e.log_mean for e in self.estimates], kind="stable")
        return [self.labels[k] for k in order]

    def difference(self, a, b):
        """Paired (mean, std error) of estimate(a) - estimate(b)."""
        if (a, b) in self.mean_diffs:
            return self.mean_diffs[(a, b)], self.se_diffs[(a, b)]
        return -self.mean_diffs[(b, a)], self.se_diffs[(b, a)]


def compare_policies(model: ModelSpec, policies, i0, n_paths, master_seed,
                     labels=None,
                     max_jumps=DEFAULT_EXPLOSION_GUARD) -> PolicyComparison:
    """Estimate several policies under common random numbers.

    Every policy replays the same per-path streams, so paired differences
    are free of between-path noise; identical policies differ by exactly 0.
    """
    if len(policies) < 2:
        raise ValidationError("need at least two policies to compare")
    if labels is None:
        labels = [f"policy{k}" for k in range(len(policies))]
    if len(labels) != len(policies):
        raise ValidationError("labels must match policies one to one")
    utils = []
    for policy in policies:
        u, _ = _path_log_utils(model, policy, i0, n_paths, master_seed,
                               max_jumps)
        utils.append(u)
    estimates = tuple(_aggregate(u, master_seed) for u in utils)
    mean_diffs, se_diffs = {}, {}
    with np.errstate(over="ignore"):
        lin = [np.exp(u) for u in utils]
    for a in range(len(policies)):
        for b in range(a + 1, len(policies)):
            d = lin[a] - lin[b]
            mean_diffs[(labels[a], labels[b])] = float(np.mean(d))
            if np.all(d == 0.0) or n_paths < 2:
                se = 0.0
            else:
                se = float(np.std(d, ddof=1) / math.sqrt(n_paths))
            se_diffs[(labels[a], labels[b])] = se
    return PolicyComparison(labels=tuple(labels), estimates=estimates,
                            mean_diffs=mean_diffs, se_diffs=se_diffs)
