# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: the backward RK4 sweep and the thinning simulator.

Mirrors ctrisk._kernels_py call for call; the simulator consumes the same
Philox streams in the same order, so per-path results agree with the
fallback bit for bit.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, exp, isfinite, log
from numpy.random cimport bitgen_t

from numpy.random import Philox

from ctrisk.errors import NumericalError

BACKEND = "compiled"


cdef inline Py_ssize_t _upper_bound(const double[::1] arr, double t) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _rows_c(const double[:, :, :, ::1] rates, const double[:, :, ::1] costs,
                  const long[::1] n_act, const double[::1] psi, Py_ssize_t seg,
                  double[::1] rmin, long[::1] amin) noexcept nogil:
    cdef Py_ssize_t N = psi.shape[0]
    cdef Py_ssize_t i, m, j, bestm
    cdef double r, q, best
    for i in range(N):
        best = INFINITY
        bestm = 0
        for m in range(n_act[i]):
            r = costs[seg, i, m]
            for j in range(N):
                q = rates[seg, i, m, j]
                if q != 0.0:
                    if j == i:
                        r += q
                    else:
                        r += q * exp(psi[j] - psi[i])
            if r < best:
                best = r
                bestm = m
        rmin[i] = best
        amin[i] = bestm


def bellman_row(const double[::1] breaks, const double[:, :, :, ::1] rates,
                const double[:, :, ::1] costs, const long[::1] n_act,
                psi_row, double t):
    cdef cnp.ndarray[double, ndim=1] psi = np.ascontiguousarray(psi_row, dtype=np.float64)
    cdef Py_ssize_t N = psi.shape[0]
    rmin = np.empty(N)
    amin = np.empty(N, dtype=np.int64)
    cdef double[::1] rv = rmin
    cdef long[::1] av = amin
    _rows_c(rates, costs, n_act, psi, _upper_bound(breaks, t), rv, av)
    return rmin, amin


def solve_backward(const double[::1] breaks, const double[:, :, :, ::1] rates,
                   const double[:, :, ::1] costs, const long[::1] n_act,
                   const double[::1] terminal, double T, long steps):
    cdef Py_ssize_t N = terminal.shape[0]
    cdef double h = T / steps
    psi_arr = np.empty((steps + 1, N))
    pol_arr = np.empty((steps, N), dtype=np.int64)
    cdef double[:, ::1] psi = psi_arr
    cdef long[:, ::1] pol = pol_arr
    y2_arr = np.empty(N); y3_arr = np.empty(N); y4_arr = np.empty(N)
    r1_arr = np.empty(N); r2_arr = np.empty(N); r3_arr = np.empty(N); r4_arr = np.empty(N)
    sc_arr = np.empty(N, dtype=np.int64)
    cdef double[::1] y2 = y2_arr, y3 = y3_arr, y4 = y4_arr
    cdef double[::1] r1 = r1_arr, r2 = r2_arr, r3 = r3_arr, r4 = r4_arr
    cdef long[::1] scratch = sc_arr
    cdef Py_ssize_t k, i, bad
    cdef double t0, tm, t1, v
    cdef bint have_next = False
    for i in range(N):
        psi[steps, i] = terminal[i]
    for k in range(steps - 1, -1, -1):
        t0 = k * h
        tm = (k + 0.5) * h
        t1 = (k + 1) * h
        if not have_next:
            _rows_c(rates, costs, n_act, psi[k + 1], _upper_bound(breaks, t1),
                    r1, scratch)
        for i in range(N):
            y2[i] = psi[k + 1, i] + (0.5 * h) * r1[i]
        _rows_c(rates, costs, n_act, y2, _upper_bound(breaks, tm), r2, scratch)
        for i in range(N):
            y3[i] = psi[k + 1, i] + (0.5 * h) * r2[i]
        _rows_c(rates, costs, n_act, y3, _upper_bound(breaks, tm), r3, scratch)
        for i in range(N):
            y4[i] = psi[k + 1, i] + h * r3[i]
        _rows_c(rates, costs, n_act, y4, _upper_bound(breaks, t0), r4, scratch)
        bad = -1
        for i in range(N):
            v = psi[k + 1, i] + (h / 6.0) * (r1[i] + 2.0 * r2[i] + 2.0 * r3[i] + r4[i])
            psi[k, i] = v
            if not isfinite(v) and bad < 0:
                bad = i
        if bad >= 0:
            raise NumericalError(
                f"non-finite value at step {k}, state {bad}: the linear-domain "
                "ratio exp(psi_j - psi_i) left the representable range; "
                "consider a larger truncation window or rescaled costs"
            )
        _rows_c(rates, costs, n_act, psi[k], _upper_bound(breaks, t0), r1, scratch)
        for i in range(N):
            pol[k, i] = scratch[i]
        have_next = True
    return psi_arr, pol_arr


# ---------------------------------------------------------------------------
# thinning simulation

cdef inline double _cum_cost_c(const double[::1] nodes, const double[:, ::1] val,
                               const double[:, ::1] cum, Py_ssize_t i,
                               double t) noexcept nogil:
    cdef Py_ssize_t p = _upper_bound(nodes, t) - 1
    cdef Py_ssize_t last = nodes.shape[0] - 2
    if p > last:
        p = last
    return cum[i, p] + (t - nodes[p]) * val[i, p]


cdef int _one_path_c(bitgen_t *rng, const double[::1] breaks,
                     const double[:, :, :, ::1] rates, const double[::1] qstar,
                     const long[:, ::1] pol, double h, long steps, double T,
                     const double[::1] terminal, const double[::1] nodes,
                     const double[:, ::1] val, const double[:, ::1] cum,
                     long i0, long max_jumps, double *out_logu,
                     long *out_jumps) noexcept nogil:
    cdef Py_ssize_t N = rates.shape[1]
    cdef double t = 0.0, logu = 0.0
    cdef Py_ssize_t i = i0, j, jj, m, seg, k
    cdef long jumps = 0
    cdef double qs = qstar[i]
    cdef double u1, u2, u3, tc, qcur, target, acc, r
    while True:
        if qs <= 0.0:
            logu += _cum_cost_c(nodes, val, cum, i, T) - _cum_cost_c(nodes, val, cum, i, t)
            break
        u1 = rng.next_double(rng.state)
        tc = t + (-log(u1) / qs)
        if tc >= T:
            logu += _cum_cost_c(nodes, val, cum, i, T) - _cum_cost_c(nodes, val, cum, i, t)
            break
        logu += _cum_cost_c(nodes, val, cum, i, tc) - _cum_cost_c(nodes, val, cum, i, t)
        k = <Py_ssize_t>(tc / h)
        if k > steps - 1:
            k = steps - 1
        m = pol[k, i]
        seg = _upper_bound(breaks, tc)
        qcur = -rates[seg, i, m, i]
        u2 = rng.next_double(rng.state)
        if u2 * qs < qcur:
            u3 = rng.next_double(rng.state)
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
                out_jumps[0] = jumps
                return -1
            i = j
            qs = qstar[i]
        t = tc
    logu += terminal[i]
    out_logu[0] = logu
    out_jumps[0] = jumps
    return 0


def simulate_batch(const double[::1] breaks, const double[:, :, :, ::1] rates,
                   const double[::1] qstar, const long[:, ::1] pol, double h,
                   long steps, double T, const double[::1] terminal,
                   const double[::1] nodes, const double[:, ::1] val,
                   const double[:, ::1] cum, long i0, long n_paths,
                   object master_seed, long max_jumps):
    log_utils = np.empty(n_paths)
    jump_counts = np.empty(n_paths, dtype=np.int64)
    cdef double[::1] lu = log_utils
    cdef long[::1] jc = jump_counts
    cdef Py_ssize_t p
    cdef double logu
    cdef long jumps
    cdef bitgen_t *rng
    cdef int status
    base = int(master_seed) << 64
    for p in range(n_paths):
        bg = Philox(key=base | p)
        rng = <bitgen_t *> PyCapsule_GetPointer(bg.capsule, "BitGenerator")
        with nogil:
            status = _one_path_c(rng, breaks, rates, qstar, pol, h, steps, T,
                                 terminal, nodes, val, cum, i0, max_jumps,
                                 &logu, &jumps)
        if status != 0:
            raise NumericalError(
                f"path {p}: explosion guard: more than {max_jumps} jumps on "
                "one path; the model may be explosive or misconfigured"
            )
        lu[p] = logu
        jc[p] = jumps
    return log_utils, jump_counts
