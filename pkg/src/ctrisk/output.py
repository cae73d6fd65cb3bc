"""Plain-text table and manifest writers.

All files start with '#' header lines carrying the model hash, the grid
spec, and the tool version; floats are written with repr so two identical
runs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from datetime import datetime, timezone

from . import __version__
from ._backend import backend_name


def _fmt(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _header(fh, model_hash, grid=None):
    fh.write(f"# model_hash={model_hash}\n")
    if grid is not None:
        fh.write(f"# grid={grid.spec()}\n")
    fh.write(f"# version={__version__}\n")


def write_value_csv(path, vf, model_hash):
    times = vf.grid.times
    with open(path, "w") as fh:
        _header(fh, model_hash, vf.grid)
        fh.write("t,state,psi,phi\n")
        for k, t in enumerate(times):
            for i in range(vf.psi.shape[1]):
                psi = vf.psi[k, i]
                phi = math.exp(psi) if psi < 709.0 else math.inf
                fh.write(f"{_fmt(t)},{i},{_fmt(psi)},{_fmt(phi)}\n")


def write_policy_csv(path, policy, model_hash):
    times = policy.grid.times
    with open(path, "w") as fh:
        _header(fh, model_hash, policy.grid)
        fh.write("t,state,action\n")
        for k in range(policy.grid.steps):
            for i in range(policy.actions.shape[1]):
                fh.write(f"{_fmt(times[k])},{i},{_fmt(policy.actions[k, i])}\n")


def write_estimate_csv(path, rows, model_hash, grid=None):
    """rows: iterable of (policy_id, i0, MCEstimate)."""
    with open(path, "w") as fh:
        _header(fh, model_hash, grid)
        fh.write("policy_id,initial_state,log_estimate,estimate,std_error,"
                 "n_paths,master_seed\n")
        for policy_id, i0, est in rows:
            fh.write(f"{policy_id},{i0},{_fmt(est.log_mean)},"
                     f"{_fmt(est.estimate)},{_fmt(est.std_error)},"
                     f"{est.n_paths},{est.master_seed}\n")


def write_pairs_csv(path, comparison, model_hash):
    with open(path, "w") as fh:
        _header(fh, model_hash)
        fh.write("policy_a,policy_b,mean_diff,std_error_diff\n")
        for (a, b), d in comparison.mean_diffs.items():
            fh.write(f"{a},{b},{_fmt(d)},{_fmt(comparison.se_diffs[(a, b)])}\n")


def write_ladder_csv(path, report, model_hash, grid=None):
    with open(path, "w") as fh:
        _header(fh, model_hash, grid)
        fh.write("level,active_count,probe_state,psi0,diff_prev,bound_log,"
                 "policy_at_probe\n")
        for probe in report.probes:
            prev = None
            for rung in report.rungs:
                v = rung.psi0[probe]
                diff = "" if prev is None else _fmt(abs(v - prev))
                fh.write(f"{_fmt(rung.log_level)},{rung.active_count},{probe},"
                         f"{_fmt(v)},{diff},{_fmt(report.bound_logs[probe])},"
                         f"{_fmt(rung.policy_actions[probe][0])}\n")
                prev = v


def write_check_report(path, checks, model_hash):
    with open(path, "w") as fh:
        _header(fh, model_hash)
        fh.write("condition,verdict,lhs_log,rhs_log,margin,where\n")
        for name, c in checks.items():
            where = "" if c.where is None else ";".join(str(w) for w in c.where)
            fh.write(f"{name},{'PASS' if c.passed else 'FAIL'},"
                     f"{_fmt(c.lhs_log)},{_fmt(c.rhs_log)},{_fmt(c.margin)},"
                     f"{where}\n")


def write_manifest(path, config, model_hash, timestamp=True):
    data = {
        "config": config,
        "model_hash": model_hash,
        "version": __version__,
        "backend": backend_name(),
    }
    if timestamp:
        data["timestamp"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
