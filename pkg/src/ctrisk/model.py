"""CTMDP model definitions: the built-in M/M/inf service-rate control system,
generic tabular models loaded from JSON documents, and level-set truncation.

A model lives on a finite state window 0..N-1 with a per-state finite action
grid.  Transition rates and running costs may be piecewise constant in time
(interior breakpoints partition [0, T] into segments); diagonals of the rate
kernel are always derived from the off-diagonals so every row sums to zero.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelDocumentError, ValidationError

ROW_SUM_RTOL = 1e-12

BOUNDARY_MODES = ("absorbing-at-window-edge", "reject-if-exit")


@dataclass(frozen=True)
class MMInfinityParams:
    """Parameters of the controlled M/M/inf queue on a truncation window.

    Arrivals at rate ``lam``; each of the ``i`` busy servers works at the
    chosen common rate ``a`` from [mu_min, mu_max]; holding cost ``C1*i``
    plus the service effort ``a`` per unit time; terminal reward ``C2*i``.
    """

    lam: float
    mu_min: float
    mu_max: float
    C1: float
    C2: float
    N: int
    horizon_T: float
    action_points: int = 21
    boundary_mode: str = "absorbing-at-window-edge"

    def validate(self):
        problems = []
        if not self.lam > 0:
            problems.append(f"lam must be > 0, got {self.lam}")
        if not 0 <= self.mu_min <= self.mu_max:
            problems.append(
                f"need 0 <= mu_min <= mu_max, got [{self.mu_min}, {self.mu_max}]"
            )
        if self.C1 < 0:
            problems.append(f"C1 must be >= 0, got {self.C1}")
        if self.N < 2:
            problems.append(f"N must be >= 2, got {self.N}")
        if not self.horizon_T > 0:
            problems.append(f"horizon_T must be > 0, got {self.horizon_T}")
        if self.action_points < 1:
            problems.append(f"action_points must be >= 1, got {self.action_points}")
        if self.boundary_mode not in BOUNDARY_MODES:
            problems.append(f"unknown boundary_mode {self.boundary_mode!r}")
        if problems:
            raise ValidationError("; ".join(problems))


@dataclass(frozen=True)
class ModelSpec:
    """A validated CTMDP instance in dense-array form.

    rates[s, i, m, j] is q(j | t, i, a_m) on time segment s; the diagonal
    entry is minus the row's off-diagonal sum.  Unused action slots m >=
    n_act[i] carry zero rates and +inf cost so they can never be selected.
    """

    n_states: int
    horizon_T: float
    breakpoints: np.ndarray  # interior segment boundaries, ascending in (0, T)
    act_vals: np.ndarray     # (N, A_max), each row ascending, padded with its last value
    n_act: np.ndarray        # (N,) int64
    rates: np.ndarray        # (n_seg, N, A_max, N)
    costs: np.ndarray        # (n_seg, N, A_max)
    terminal: np.ndarray     # (N,)
    boundary_mode: str = "absorbing-at-window-edge"

    @property
    def n_segments(self):
        return len(self.breakpoints) + 1

    def segment_of(self, t):
        """Index of the time segment containing t (right-continuous)."""
        return int(np.searchsorted(self.breakpoints, t, side="right"))

    def segment_start(self, s):
        return 0.0 if s == 0 else float(self.breakpoints[s - 1])

    def actions(self, i):
        return self.act_vals[i, : self.n_act[i]]

    def action_index(self, i, a, tol=1e-12):
        """Grid index of action value a at state i; exact-match lookup."""
        grid = self.actions(i)
        hits = np.nonzero(np.abs(grid - a) <= tol * max(1.0, abs(a)))[0]
        if len(hits) == 0:
            raise ValidationError(f"action {a} not on the grid of state {i}")
        return int(hits[0])

    def rate(self, j, t, i, a):
        s = self.segment_of(t)
        return float(self.rates[s, i, self.action_index(i, a), j])

    def exit_rate(self, t, i, a):
        return -self.rate(i, t, i, a)

    def cost(self, t, i, a):
        s = self.segment_of(t)
        return float(self.costs[s, i, self.action_index(i, a)])

    def g(self, i):
        return float(self.terminal[i])

    def model_hash(self):
        h = hashlib.sha256()
        h.update(f"{self.n_states}:{self.horizon_T!r}:{self.boundary_mode}".encode())
        for arr in (self.breakpoints, self.act_vals, self.n_act,
                    self.rates, self.costs, self.terminal):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def validate(self):
        if self.n_states < 1:
            raise ValidationError("model needs at least one state")
        if not self.horizon_T > 0:
            raise ValidationError(f"horizon_T must be > 0, got {self.horizon_T}")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValidationError("time breakpoints not ascending")
        if len(self.breakpoints) and not (
            0 < self.breakpoints[0] and self.breakpoints[-1] < self.horizon_T
        ):
            raise ValidationError("time breakpoints must lie inside (0, T)")
        if np.any(self.n_act < 1):
            bad = int(np.argmin(self.n_act))
            raise ValidationError(f"state {bad} has an empty action grid")
        for i in range(self.n_states):
            grid = self.actions(i)
            if np.any(np.diff(grid) < 0):
                raise ValidationError(f"action grid of state {i} not sorted ascending")
        for s in range(self.n_segments):
            for i in range(self.n_states):
                for m in range(int(self.n_act[i])):
                    row = self.rates[s, i, m]
                    neg = [j for j in np.nonzero(row < 0)[0] if j != i]
                    if neg:
                        raise ValidationError(
                            f"negative off-diagonal rate at segment {s}, state {i}, "
                            f"action index {m}, target {neg[0]}"
                        )
                    total = float(row.sum())
                    scale = float(np.abs(row).sum())
                    if abs(total) > ROW_SUM_RTOL * max(scale, 1.0):
                        raise ValidationError(
                            f"rate row does not sum to zero at segment {s}, state {i}, "
                            f"action index {m}: sum={total:g}"
                        )
        return self


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64 if arr.dtype != np.int64 else np.int64)
    arr.flags.writeable = False
    return arr


def _assemble(n_states, horizon_T, breakpoints, act_grids, off_rates, costs,
              terminal, boundary_mode):
    """Build a validated ModelSpec from off-diagonal rates (diagonals derived)."""
    n_act = np.array([len(g) for g in act_grids], dtype=np.int64)
    a_max = int(n_act.max())
    act_vals = np.empty((n_states, a_max))
    for i, g in enumerate(act_grids):
        act_vals[i, : len(g)] = g
        act_vals[i, len(g):] = g[-1]
    rates = np.array(off_rates, dtype=np.float64)
    cost_arr = np.full((rates.shape[0], n_states, a_max), np.inf)
    for s in range(rates.shape[0]):
        for i in range(n_states):
            cost_arr[s, i, : n_act[i]] = costs[s][i][: n_act[i]]
    # derive diagonals; padded action slots stay all-zero
    for s in range(rates.shape[0]):
        for i in range(n_states):
            rates[s, i, :, i] = 0.0
            rates[s, i, : n_act[i], i] = -rates[s, i, : n_act[i]].sum(axis=1)
            rates[s, i, n_act[i]:, :] = 0.0
    spec = ModelSpec(
        n_states=n_states,
        horizon_T=float(horizon_T),
        breakpoints=_freeze(np.asarray(breakpoints, dtype=np.float64)),
        act_vals=_freeze(act_vals),
        n_act=_freeze(n_act),
        rates=_freeze(rates),
        costs=_freeze(cost_arr),
        terminal=_freeze(np.asarray(terminal, dtype=np.float64)),
        boundary_mode=boundary_mode,
    )
    return spec.validate()


def build_mm_infinity(params: MMInfinityParams) -> ModelSpec:
    """Instantiate the M/M/inf service-rate control model on 0..N-1.

    Births at rate lam (dropped at the top state under the default
    absorbing-at-window-edge mode), deaths at rate a*i, running cost
    C1*i + a, terminal -C2*i.
    """
    params.validate()
    N = params.N
    if params.mu_min == params.mu_max:
        grid = np.array([params.mu_min])
    else:
        grid = np.linspace(params.mu_min, params.mu_max, params.action_points)
    if params.boundary_mode == "reject-if-exit":
        raise ValidationError(
            "mm_infinity always has an arrival rate out of the top window state; "
            "reject-if-exit cannot hold (use absorbing-at-window-edge or enlarge N)"
        )
    A = len(grid)
    off = np.zeros((1, N, A, N))
    costs = [[params.C1 * i + grid for i in range(N)]]
    terminal = [-params.C2 * i for i in range(N)]
    for i in range(N):
        if i + 1 < N:
            off[0, i, :, i + 1] = params.lam
        if i >= 1:
            off[0, i, :, i - 1] = grid * i
    return _assemble(
        N, params.horizon_T, [], [grid] * N, off, costs, terminal,
        params.boundary_mode,
    )


def q_star(model: ModelSpec, i) -> float:
    """Majorant exit rate: max over time segments and grid actions of q(t,i,a)."""
    m = int(model.n_act[i])
    return float(max(0.0, -model.rates[:, i, :m, i].min(initial=0.0)))


# ---------------------------------------------------------------------------
# truncation

@dataclass(frozen=True)
class TruncatedModel:
    """A level set {i: V(i) <= level} with the outside made absorbing and free."""

    base: ModelSpec
    log_level: float
    active_set: np.ndarray = field(repr=False)
    model: ModelSpec = field(repr=False)

    @property
    def active_count(self):
        return int(len(self.active_set))


def truncate(base: ModelSpec, log_V, level=None, *, log_level=None) -> TruncatedModel:
    """Make every state with V(i) > level absorbing with zero costs.

    Weights are passed as log V(i) (they overflow doubles quickly); the
    threshold may be given linearly (``level``) or directly in log domain.
    """
    if (level is None) == (log_level is None):
        raise ValidationError("pass exactly one of level / log_level")
    if log_level is None:
        if not level > 0:
            raise ValidationError(f"level must be > 0, got {level}")
        log_level = math.log(level)
    log_V = np.asarray(log_V, dtype=np.float64)
    if log_V.shape != (base.n_states,):
        raise ValidationError("weight vector does not cover the state window")
    active = np.nonzero(log_V <= log_level)[0]
    if len(active) == 0:
        raise ValidationError("empty level set: raise the truncation level")
    keep = np.zeros(base.n_states, dtype=bool)
    keep[active] = True
    rates = np.array(base.rates)
    costs = np.array(base.costs)
    terminal = np.array(base.terminal)
    rates[:, ~keep] = 0.0
    costs[:, ~keep] = 0.0
    # padded action slots of killed states keep +inf cost so argmins still skip them
    for i in np.nonzero(~keep)[0]:
        costs[:, i, base.n_act[i]:] = np.inf
    terminal[~keep] = 0.0
    spec = ModelSpec(
        n_states=base.n_states,
        horizon_T=base.horizon_T,
        breakpoints=base.breakpoints,
        act_vals=base.act_vals,
        n_act=base.n_act,
        rates=_freeze(rates),
        costs=_freeze(costs),
        terminal=_freeze(terminal),
        boundary_mode=base.boundary_mode,
    ).validate()
    return TruncatedModel(base=base, log_level=float(log_level),
                          active_set=_freeze(active), model=spec)


# ---------------------------------------------------------------------------
# tabular documents

_TOP_KEYS = {"model", "states", "actions", "rates", "costs", "terminal", "horizon"}
_MODEL_KEYS_TABULAR = {"kind", "boundary_mode"}
_MODEL_KEYS_MM = {"kind", "lambda", "mu_min", "mu_max", "C1", "C2",
                  "action_points", "boundary_mode"}
_RATE_KEYS = {"from", "to", "action", "value", "schedule"}
_COST_KEYS = {"state", "action", "value", "schedule"}
_SCHED_KEYS = {"breakpoints", "values"}


def _reject_unknown(mapping, allowed, where):
    extra = set(mapping) - allowed
    if extra:
        raise ModelDocumentError(f"unknown key(s) {sorted(extra)} in {where}")


def _parse_schedule(entry, horizon, where):
    """Return (breakpoints, per-segment values) for a row carrying either a
    constant 'value' or a piecewise-constant 'schedule'."""
    has_v = "value" in entry
    has_s = "schedule" in entry
    if has_v == has_s:
        raise ModelDocumentError(f"{where}: give exactly one of value/schedule")
    if has_v:
        return [], [float(entry["value"])]
    sched = entry["schedule"]
    _reject_unknown(sched, _SCHED_KEYS, where + ".schedule")
    bps = [float(b) for b in sched.get("breakpoints", [])]
    vals = [float(v) for v in sched.get("values", [])]
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise ModelDocumentError(f"{where}: breakpoints not ascending")
    if bps and not (bps[0] > 0 and bps[-1] < horizon):
        raise ModelDocumentError(f"{where}: breakpoints must lie inside (0, T)")
    if len(vals) != len(bps) + 1:
        raise ModelDocumentError(
            f"{where}: need len(values) == len(breakpoints) + 1, "
            f"got {len(vals)} vs {len(bps)}"
        )
    return bps, vals


def _eval_schedule(bps, vals, t):
    return vals[int(np.searchsorted(np.asarray(bps), t, side="right"))]


def load_tabular(document: dict) -> ModelSpec:
    """Build a validated ModelSpec from a parsed model document (see README
    for the schema).  Rejects unknown keys, negative off-diagonal rates,
    self-loops, duplicate entries, and unsorted schedules."""
    if not isinstance(document, dict):
        raise ModelDocumentError("model document must be a mapping")
    _reject_unknown(document, _TOP_KEYS, "document")
    model_sec = document.get("model", {})
    kind = model_sec.get("kind")
    if kind == "mm_infinity":
        _reject_unknown(model_sec, _MODEL_KEYS_MM, "model")
        if "states" not in document or "horizon" not in document:
            raise ModelDocumentError("mm_infinity needs states.count and horizon")
        return build_mm_infinity(mm_params_from_document(document))
    if kind != "tabular":
        raise ModelDocumentError(f"model.kind must be 'mm_infinity' or 'tabular', got {kind!r}")
    _reject_unknown(model_sec, _MODEL_KEYS_TABULAR, "model")
    boundary_mode = model_sec.get("boundary_mode", "reject-if-exit")
    if boundary_mode not in BOUNDARY_MODES:
        raise ModelDocumentError(f"unknown boundary_mode {boundary_mode!r}")
    try:
        horizon = float(document["horizon"])
        states_sec = document["states"]
    except KeyError as exc:
        raise ModelDocumentError(f"missing section {exc}") from exc
    _reject_unknown(states_sec, {"count"}, "states")
    N = int(states_sec["count"])
    if N < 1:
        raise ModelDocumentError(f"states.count must be >= 1, got {N}")
    if not horizon > 0:
        raise ModelDocumentError(f"horizon must be > 0, got {horizon}")

    actions_sec = document.get("actions", {"global": [0.0]})
    _reject_unknown(actions_sec, {"global", "per_state"}, "actions")
    if ("global" in actions_sec) == ("per_state" in actions_sec):
        raise ModelDocumentError("actions: give exactly one of global/per_state")
    if "global" in actions_sec:
        grid = np.asarray(actions_sec["global"], dtype=np.float64)
        grids = [grid] * N
    else:
        per = actions_sec["per_state"]
        if len(per) != N:
            raise ModelDocumentError(
                f"actions.per_state must list {N} grids, got {len(per)}")
        grids = [np.asarray(g, dtype=np.float64) for g in per]
    for i, g in enumerate(grids):
        if len(g) == 0:
            raise ModelDocumentError(f"empty action grid for state {i}")
        if np.any(np.diff(g) <= 0):
            raise ModelDocumentError(f"action grid for state {i} not strictly ascending")

    def check_state(v, where):
        iv = int(v)
        if not 0 <= iv < N:
            raise ModelDocumentError(f"{where}: state {iv} outside 0..{N - 1}")
        return iv

    def action_indices(i, entry, where):
        if "action" not in entry or entry["action"] is None:
            return None  # wildcard: all actions
        a = float(entry["action"])
        hits = np.nonzero(np.isclose(grids[i], a, rtol=1e-12, atol=0))[0]
        if len(hits) == 0:
            raise ModelDocumentError(f"{where}: action {a} not on the grid of state {i}")
        return int(hits[0])

    rate_rows = []
    seen = {}
    all_bps = set()
    for r, entry in enumerate(document.get("rates", [])):
        where = f"rates[{r}]"
        _reject_unknown(entry, _RATE_KEYS, where)
        i = check_state(entry.get("from"), where)
        j = check_state(entry.get("to"), where)
        if i == j:
            raise ModelDocumentError(
                f"{where}: diagonal entry ({i} -> {i}) not allowed; diagonals are derived")
        m = action_indices(i, entry, where)
        key = (i, j)
        prev = seen.get(key)
        if prev is not None and (m is None or None in prev or m in prev):
            raise ModelDocumentError(f"{where}: duplicate rate entry for ({i} -> {j})")
        seen.setdefault(key, set()).add(m)
        bps, vals = _parse_schedule(entry, horizon, where)
        if any(v < 0 for v in vals):
            raise ModelDocumentError(
                f"{where}: negative rate {min(vals)} for ({i} -> {j})")
        all_bps.update(bps)
        rate_rows.append((i, j, m, bps, vals))

    cost_rows = []
    seen_costs = {}
    for r, entry in enumerate(document.get("costs", [])):
        where = f"costs[{r}]"
        _reject_unknown(entry, _COST_KEYS, where)
        i = check_state(entry.get("state"), where)
        m = action_indices(i, entry, where)
        prev = seen_costs.get(i)
        if prev is not None and (m is None or None in prev or m in prev):
            raise ModelDocumentError(f"{where}: duplicate cost entry for state {i}")
        seen_costs.setdefault(i, set()).add(m)
        bps, vals = _parse_schedule(entry, horizon, where)
        all_bps.update(bps)
        cost_rows.append((i, m, bps, vals))

    terminal = np.zeros(N)
    seen_term = set()
    for r, entry in enumerate(document.get("terminal", [])):
        where = f"terminal[{r}]"
        _reject_unknown(entry, {"state", "value"}, where)
        i = check_state(entry.get("state"), where)
        if i in seen_term:
            raise ModelDocumentError(f"{where}: duplicate terminal entry for state {i}")
        seen_term.add(i)
        terminal[i] = float(entry["value"])

    breakpoints = sorted(all_bps)
    n_seg = len(breakpoints) + 1
    seg_starts = [0.0] + breakpoints
    a_max = max(len(g) for g in grids)
    off = np.zeros((n_seg, N, a_max, N))
    costs = [[np.zeros(len(grids[i])) for i in range(N)] for _ in range(n_seg)]
    for s, t0 in enumerate(seg_starts):
        for (i, j, m, bps, vals) in rate_rows:
            v = _eval_schedule(bps, vals, t0)
            if m is None:
                off[s, i, : len(grids[i]), j] = v
            else:
                off[s, i, m, j] = v
        for (i, m, bps, vals) in cost_rows:
            v = _eval_schedule(bps, vals, t0)
            if m is None:
                costs[s][i][:] = v
            else:
                costs[s][i][m] = v
    if boundary_mode == "reject-if-exit":
        pass  # all targets were validated to lie inside the window
    return _assemble(N, horizon, breakpoints, grids, off, costs, terminal,
                     boundary_mode)


def mm_params_from_document(document) -> MMInfinityParams | None:
    """Recover MMInfinityParams from a document of kind mm_infinity, or None."""
    model_sec = document.get("model", {}) if isinstance(document, dict) else {}
    if model_sec.get("kind") != "mm_infinity":
        return None
    try:
        return MMInfinityParams(
            lam=float(model_sec["lambda"]),
            mu_min=float(model_sec["mu_min"]),
            mu_max=float(model_sec["mu_max"]),
            C1=float(model_sec["C1"]),
            C2=float(model_sec["C2"]),
            N=int(document["states"]["count"]),
            horizon_T=float(document["horizon"]),
            action_points=int(model_sec.get("action_points", 21)),
            boundary_mode=model_sec.get("boundary_mode",
                                        "absorbing-at-window-edge"),
        )
    except KeyError as exc:
        raise ModelDocumentError(f"missing field {exc} for mm_infinity") from exc


def load_model_file(path) -> ModelSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelDocumentError(f"{path}: not valid JSON ({exc})") from exc
    return load_tabular(doc)
