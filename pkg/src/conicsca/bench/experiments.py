"""Seeded experiment runs with CSV traces.

Each trial draws its instance from ``default_rng([seed, trial])`` so a trial's
data does not depend on how many trials run or in which order.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..apps import cognitive, mimo_relay, multicarrier, secure_relay
from ..sca import ScaConfig, ScaError, find_feasible, run_sca

__all__ = [
    "APPS", "APP_PARAMS", "TRACE_HEADER", "SUMMARY_HEADER", "ExperimentConfig",
    "TrialRecord", "TrialResult", "build_trial", "run_trial", "run_experiment", "write_csv",
]

TRACE_HEADER = ("trial", "iteration", "objective", "objective_bits", "violation", "slack_q",
                "status", "solve_ms")
SUMMARY_HEADER = ("trial", "final_objective", "final_objective_bits", "iterations",
                  "total_ms", "status")

# instance parameters per application with their defaults
APP_PARAMS = {
    "secure-relay": {"K": 4, "M": 2, "P_s_db": 20.0, "P_tot_db": 15.0, "restarts": 1},
    "cog-multicast": {"N": 8, "G": 2, "users_per_group": 4, "L": 2, "alpha_db": 10.0,
                      "beta_db": 5.0},
    "mimo-relay": {"R": 2, "N_R": 2, "M": 2, "sigma_s2_db": 20.0, "P_R_db": 10.0},
    "mc-wsr": {"K": 3, "N": 8, "p_bar_dbm": 32.0, "sigma2_dbm": -30.0, "shadow_scale": "db",
               "shadow_std": 3.0, "formulation": "wsr-socp", "rho": "provable",
               "shrink": 1.0},
    "mc-ee": {"K": 3, "N": 8, "p_bar_dbm": 32.0, "sigma2_dbm": -30.0, "p_c_dbm": 5.0,
              "shadow_scale": "db", "shadow_std": 3.0},
}
APPS = tuple(APP_PARAMS)
_RATE_APPS = ("secure-relay", "mc-wsr", "mc-ee")


@dataclass
class ExperimentConfig:
    """One batch of seeded trials of a single application."""

    app: str
    trials: int = 1
    seed: int = 0
    out: str = "runs"
    max_iter: int = 200
    tol: float = 1e-3
    timing: bool = True
    jobs: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.app not in APP_PARAMS:
            raise ValueError(f"unknown application {self.app!r}; choose from {', '.join(APPS)}")
        unknown = set(self.params) - set(APP_PARAMS[self.app])
        if unknown:
            raise ValueError(f"{self.app} does not take {', '.join(sorted(unknown))}")
        self.params = {**APP_PARAMS[self.app], **self.params}
        if self.trials < 1 or self.max_iter < 1 or self.jobs < 1:
            raise ValueError("trials, max_iter and jobs must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        for key, val in self.params.items():
            if key in ("K", "M", "N", "G", "L", "R", "N_R", "users_per_group",
                       "restarts") and val < 1:
                raise ValueError(f"{key} must be positive")
        fm = self.params.get("formulation")
        if fm is not None and fm not in multicarrier.FORMULATIONS[:3]:
            raise ValueError("formulation must be one of "
                             + ", ".join(multicarrier.FORMULATIONS[:3]))
        if self.params.get("rho", "provable") not in ("provable", "adaptive"):
            raise ValueError("rho must be 'provable' or 'adaptive'")
        if self.params.get("shrink", 1.0) <= 0:
            raise ValueError("shrink must be positive")
        if self.params.get("shadow_scale", "db") not in ("db", "natural"):
            raise ValueError("shadow_scale must be 'db' or 'natural'")

    @property
    def sca(self) -> ScaConfig:
        return ScaConfig(max_iter=self.max_iter, tol=self.tol)


@dataclass
class TrialRecord:
    trial: int
    iteration: int
    objective: float
    objective_bits: float | None
    violation: float
    slack_q: float | None
    status: str
    solve_ms: float | None

    def row(self) -> list:
        return [self.trial, self.iteration, _fmt(self.objective), _fmt(self.objective_bits),
                _fmt(self.violation), _fmt(self.slack_q), self.status, _fmt(self.solve_ms)]


@dataclass
class TrialResult:
    trial: int
    records: list
    status: str
    message: str = ""

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def summary_row(self) -> list:
        last = self.records[-1] if self.records else None
        total = None
        if self.records and self.records[-1].solve_ms is not None:
            total = sum(r.solve_ms for r in self.records)
        return [self.trial, _fmt(last.objective if last else None),
                _fmt(last.objective_bits if last else None),
                max(len(self.records) - 1, 0), _fmt(total), self.status]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def build_trial(app: str, params: dict, rng, start_rng=None):
    """Instance, problem and start point; ``needs_phase1`` for infeasible starts.

    ``start_rng``, if given, draws the secure-relay start instead of ``rng``.
    """
    p = dict(params)
    if app == "secure-relay":
        p.pop("restarts", None)
        inst = secure_relay.random_instance(rng, **p)
        prob, v0 = secure_relay.build_sca_problem(inst, rng if start_rng is None else start_rng)
        return prob, v0, False
    if app == "cog-multicast":
        inst = cognitive.random_instance(rng, **p)
        prob, v0 = cognitive.build_sca_problem(inst, rng)
        return prob, v0, True
    if app == "mimo-relay":
        inst = mimo_relay.random_instance(rng, **p)
        prob, v0 = mimo_relay.build_sca_problem(inst, rng)
        return prob, v0, False
    formulation = p.pop("formulation", "ee")
    qp = {k: p.pop(k) for k in ("rho", "shrink") if k in p}
    inst = multicarrier.random_instance(rng, **p)
    prob, v0 = multicarrier.build_problem(inst, formulation,
                                          **(qp if formulation == "wsr-qp" else {}))
    return prob, v0, False


def _records(trial, trace, app, metric, offset=0, timing=True, phase1=False):
    out = []
    skip = 1 if offset else 0       # the second phase starts where the first ended
    for r in trace.records[skip:]:
        obj = metric(r.point)
        out.append(TrialRecord(
            trial, offset + r.iteration - skip, obj,
            obj / math.log(2.0) if app in _RATE_APPS else None, r.violation,
            r.slack if phase1 else None, r.status,
            1e3 * r.solve_time if timing else None))
    return out


def run_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    """Run one seeded trial; failures are returned, not raised.

    With ``restarts > 1`` the instance is kept, extra starts come from their
    own streams and the run with the best final metric is reported.
    """
    records = []
    try:
        best = None
        for start in range(config.params.get("restarts", 1)):
            rng = np.random.default_rng([config.seed, trial])
            srng = np.random.default_rng([config.seed, trial, start]) if start else None
            prob, v0, phase1 = build_trial(config.app, config.params, rng, srng)
            cfg = config.sca
            run = []
            if phase1:
                v0, ftrace = find_feasible(prob, v0, cfg)
                run += _records(trial, ftrace, config.app, prob.metric, timing=config.timing,
                                phase1=True)
            v, trace = run_sca(prob, v0, cfg)
            run += _records(trial, trace, config.app, prob.metric, offset=len(run),
                            timing=config.timing)
            if best is None or prob.metric(v) > best:
                best, records = prob.metric(v), run
    except (ScaError, ValueError, np.linalg.LinAlgError) as exc:
        msg = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        records.append(TrialRecord(trial, len(records), math.nan, None, math.nan, None,
                                   "failed", None))
        return TrialResult(trial, records, "failed", msg)
    return TrialResult(trial, records, "ok")


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_experiment(config: ExperimentConfig) -> tuple:
    """Run all trials and write ``<app>_trace.csv`` and ``<app>_summary.csv``.

    Returns ``(results, trace_path, summary_path)``. Rows are written in
    ``(trial, iteration)`` order whatever the execution order.
    """
    trials = range(config.trials)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_trial, [config] * config.trials, trials))
    else:
        results = [run_trial(config, t) for t in trials]
    os.makedirs(config.out, exist_ok=True)
    trace_path = os.path.join(config.out, f"{config.app}_trace.csv")
    summary_path = os.path.join(config.out, f"{config.app}_summary.csv")
    write_csv(trace_path, TRACE_HEADER, [r.row() for res in results for r in res.records])
    write_csv(summary_path, SUMMARY_HEADER, [res.summary_row() for res in results])
    return results, trace_path, summary_path
