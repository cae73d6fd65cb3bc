"""Pure-Python/numpy fallback for the hot kernels.

Same call signatures and the same draw protocol as the compiled extension
(ctrisk._kernels); selected automatically when the extension is missing or
when CTRISK_FORCE_PYTHON is set.  The backward sweep is vectorized over
(state, action); the path loop matches the compiled one draw for draw so
both backends consume identical Philox streams.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalError

BACKEND = "python"


def _seg(breaks, t):
    return int(np.searchsorted(breaks, t, side="right"))


def _rows(rates, costs, n_act, psi, seg):
    """Minimized log-domain Bellman rate per state and its argmin index."""
    R = rates[seg]
    C = costs[seg]
    used = np.abs(R).sum(axis=1) > 0  # (N, N): pair (i, j) carries any rate
    D = psi[None, :] - psi[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        W = np.where(used, np.exp(np.where(used, D, 0.0)), 0.0)
        r = C + np.einsum("imj,ij->im", R, W)
    amin = np.argmin(r, axis=1).astype(np.int64)  # first minimum; pads are +inf
    rmin = r[np.arange(len(psi)), amin]
    return rmin, amin


def bellman_row(breaks, rates, costs, n_act, psi_row, t):
    """Bellman integrand minimum and argmin index at time t for every state."""
    return _rows(rates, costs, n_act, np.asarray(psi_row, dtype=np.float64),
                 _seg(breaks, t))


def solve_backward(breaks, rates, costs, n_act, terminal, T, steps):
    """Classical RK4 march of d(psi)/ds = -rmin(s, psi) from s=T down to 0.

    Returns psi[(steps+1), N] and the argmin table pol[steps, N] recorded at
    each node (t_k, psi_k).
    """
    N = len(terminal)
    h = T / steps
    psi = np.empty((steps + 1, N))
    pol = np.empty((steps, N), dtype=np.int64)
    psi[steps] = terminal
    r_next = None  # rows at (t_{k+1}, psi[k+1]) cached from the previous node
    for k in range(steps - 1, -1, -1):
        t0 = k * h
        tm = (k + 0.5) * h
        t1 = (k + 1) * h
        y = psi[k + 1]
        r1 = r_next if r_next is not None else _rows(
            rates, costs, n_act, y, _seg(breaks, t1))[0]
        r2 = _rows(rates, costs, n_act, y + (0.5 * h) * r1, _seg(breaks, tm))[0]
        r3 = _rows(rates, costs, n_act, y + (0.5 * h) * r2, _seg(breaks, tm))[0]
        r4 = _rows(rates, costs, n_act, y + h * r3, _seg(breaks, t0))[0]
        ynew = y + (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        if not np.all(np.isfinite(ynew)):
            i = int(np.nonzero(~np.isfinite(ynew))[0][0])
            raise NumericalError(
                f"non-finite value at step {k}, state {i}: the linear-domain "
                "ratio exp(psi_j - psi_i) left the representable range; "
                "consider a larger truncation window or rescaled costs"
            )
        psi[k] = ynew
        rmin_k, amin_k = _rows(rates, costs, n_act, ynew, _seg(breaks, t0))
        pol[k] = amin_k
        r_next = rmin_k
    return psi, pol


# ---------------------------------------------------------------------------
# thinning simulation

def _cum_cost(nodes, val, cum, i, t):
    """Integral of the running cost of state i from 0 to t (piecewise linear)."""
    p = int(np.searchsorted(nodes, t, side="right")) - 1
    last = len(nodes) - 2
    if p > last:
        p = last
    return cum[i, p] + (t - nodes[p]) * val[i, p]


def _one_path(nd, breaks, rates, qstar, pol, h, steps, T, terminal,
              nodes, val, cum, i0, max_jumps, record):
    """Run one thinned path; nd() yields the next uniform double.

    record, when not None, collects (jump_time, new_state) pairs."""
    N = rates.shape[1]
    t = 0.0
    i = i0
    logu = 0.0
    jumps = 0
    qs = qstar[i]
    while True:
        if qs <= 0.0:
            logu += _cum_cost(nodes, val, cum, i, T) - _cum_cost(nodes, val, cum, i, t)
            break
        u1 = nd()
        tc = t + (-math.log(u1) / qs)
        if tc >= T:
            logu += _cum_cost(nodes, val, cum, i, T) - _cum_cost(nodes, val, cum, i, t)
            break
        logu += _cum_cost(nodes, val, cum, i, tc) - _cum_cost(nodes, val, cum, i, t)
        k = int(tc / h)
        if k > steps - 1:
            k = steps - 1
        m = pol[k, i]
        seg = _seg(breaks, tc)
        qcur = -rates[seg, i, m, i]
        u2 = nd()
        if u2 * qs < qcur:
            u3 = nd()
            target = u3 * qcur
            acc = 0.0
            j = -1
            for jj in range(N):
                if jj == i:
                    continue
                r = rates[seg, i, m, jj]
                if r > 0.0:
                    acc += r
                    j = jj
                    if target < acc:
                        break
            jumps += 1
            if jumps >= max_jumps:
                raise NumericalError(
                    f"explosion guard: more than {max_jumps} jumps on one path; "
                    "the model may be explosive or misconfigured"
                )
            if record is not None:
                record.append((tc, j))
            i = j
            qs = qstar[i]
        t = tc
    logu += terminal[i]
    return logu, jumps, i


def _path_rng(master_seed, path_index):
    key = (int(master_seed) << 64) | int(path_index)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_one(breaks, rates, qstar, pol, h, steps, T, terminal,
                 nodes, val, cum, i0, master_seed, path_index, max_jumps):
    """Single path with full jump record (python-side only)."""
    gen = _path_rng(master_seed, path_index)
    record = []
    logu, jumps, i_final = _one_path(
        gen.random, breaks, rates, qstar, pol, h, steps, T, terminal,
        nodes, val, cum, i0, max_jumps, record)
    return logu, jumps, i_final, record


def simulate_batch(breaks, rates, qstar, pol, h, steps, T, terminal,
                   nodes, val, cum, i0, n_paths, master_seed, max_jumps):
    log_utils = np.empty(n_paths)
    jump_counts = np.empty(n_paths, dtype=np.int64)
    for p in range(n_paths):
        gen = _path_rng(master_seed, p)
        try:
            logu, jumps, _ = _one_path(
                gen.random, breaks, rates, qstar, pol, h, steps, T, terminal,
                nodes, val, cum, i0, max_jumps, None)
        except NumericalError as exc:
            raise NumericalError(f"path {p}: {exc}") from exc
        log_utils[p] = logu
        jump_counts[p] = jumps
    return log_utils, jump_counts
