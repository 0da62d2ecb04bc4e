"""
    sim_engine.py

    Monte Carlo comparison of unit-level bounds against CATE intervals.

    Each replication draws a short panel in which units adopt one of two
    policy versions in the final period, computes five interval estimators
    for every unit's effect and counts how often each interval covers the
    true effect and how often it excludes zero with the right sign.
    Replication r always uses seed base_seed + r, and counts are summed in
    index order, so results do not depend on the number of workers.
"""
# This source file is part of the policybound open source project
#
# Copyright 2026 the policybound project authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

import logging
from collections import OrderedDict, namedtuple
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import cholesky
from scipy.special import ndtr

from .cate_baseline import cate_intervals, fit_cate_projection
from .did_estimators import NO_ADJUSTMENT, Adjuster, AdjusterKind, impute_all_coarsened
from .errors import (
    DegenerateSubsetError,
    DomainError,
    EmptyPoolError,
    InsufficientPrePeriodError,
    SimulationAbortedError,
    SingularDesignError,
)
from .estimands_analytic import DGPParams, curve_table, projection_oracle
from .panel_core import Panel
from .policybound_agent import ReplicationAgent
from .sensitivity_bounds import Norm, TauRule, TauStyle, tau_from_rule

logger = logging.getLogger(__name__)

ARM_LEVELS = ("versions", "coarsened")
MIN_LEVEL_SIZE = 3
MAX_FAILURE_RATE = 0.01
# Oracle bounds touch the truth exactly; allow for rounding.
COVERAGE_TOLERANCE = 1e-9

ESTIMATORS = OrderedDict(
    [
        ("tau", "ITE bounds: tau"),
        ("tau_x", "ITE bounds: tau(x)"),
        ("tau_star", "ITE bounds: tau*"),
        ("tau_star_x", "ITE bounds: tau*(x)"),
        ("cate", "CATE: OLS (LP target)"),
    ]
)
METRICS = OrderedDict([("coverage", "Coverage"), ("power_and_sign", "Power and sign")])
ARMS = OrderedDict([(1, "Treatment"), (0, "Control")])

# Estimator failures that void one cell of a replication rather than the run.
ESTIMATOR_FAILURES = (
    SingularDesignError,
    DegenerateSubsetError,
    EmptyPoolError,
    InsufficientPrePeriodError,
)

Latent = namedtuple("Latent", ["x", "u", "a", "m1", "m"])
ArmCounts = namedtuple("ArmCounts", ["covered", "signed", "units"])


@dataclass(frozen=True)
class SimDataset:
    panel: Panel
    latent: Latent
    potential_outcomes: np.ndarray
    true_ite: np.ndarray
    seed: int

    @property
    def true_counterfactual(self):
        """Y_T(0) for treated units, Y_T(M(1)) for untreated ones."""
        rows = np.arange(len(self.true_ite))
        own_version = self.potential_outcomes[rows, self.latent.m1]
        return np.where(self.latent.a == 1, self.potential_outcomes[:, 0], own_version)


def draw_latent(params, n, rng) -> Latent:
    chol = cholesky(params.covariance, lower=True)
    xu = rng.standard_normal((n, 2)) @ chol.T
    x, u = xu[:, 0], xu[:, 1]
    a = (rng.random(n) < ndtr(params.probit_offset + x)).astype(np.int64)
    m1 = np.where(rng.random(n) < ndtr(x), 2, 1).astype(np.int64)
    return Latent(x, u, a, m1, a * m1)


def draw_dataset(params, n, seed) -> SimDataset:
    if n < 2:
        raise DomainError("a dataset needs at least two units, got {}".format(n))
    rng = np.random.default_rng(seed)
    latent = draw_latent(params, n, rng)
    T = params.T

    time_effects = rng.normal(0.0, params.time_effect_sd, T)
    untreated = (
        time_effects[None, :]
        + params.alpha[0] * latent.u[:, None]
        + params.beta[0] * latent.x[:, None]
        + params.untreated_error.draw(rng, (n, T))
    )
    potential = np.empty((n, 3))
    potential[:, 0] = untreated[:, -1]
    for m in (1, 2):
        potential[:, m] = (
            untreated[:, -1]
            + params.delta[m - 1]
            + params.alpha[m] * latent.u
            + params.beta[m] * latent.x
            + params.version_errors[m - 1].draw(rng, n)
        )

    outcomes = untreated.copy()
    outcomes[:, -1] = potential[np.arange(n), latent.m]
    true_ite = potential[np.arange(n), latent.m1] - potential[:, 0]

    width = len(str(n))
    units = ["u{:0{}d}".format(i + 1, width) for i in range(n)]
    covariates = pd.DataFrame({"x": latent.x}, index=units)
    panel = Panel(units, range(1, T + 1), outcomes, latent.m, covariates, coarsened=latent.a)
    return SimDataset(panel, latent, potential, true_ite, seed)


def accept_dataset(ds, arm_levels="versions", min_size=MIN_LEVEL_SIZE):
    if arm_levels not in ARM_LEVELS:
        raise DomainError("arm_levels must be one of {}".format(ARM_LEVELS))
    labels = ds.latent.m if arm_levels == "versions" else ds.latent.a
    levels = (0, 1, 2) if arm_levels == "versions" else (0, 1)
    return all((labels == level).sum() >= min_size for level in levels)


def interval_counts(true_ite, lo, hi, arms, tol=0.0):
    """Per-arm integer counts of covering and correctly signed intervals."""
    true_ite, lo, hi, arms = (np.asarray(v) for v in (true_ite, lo, hi, arms))
    covered = (lo - tol <= true_ite) & (true_ite <= hi + tol)
    signed = ((lo > 0) & (true_ite > 0)) | ((hi < 0) & (true_ite < 0))
    out = {}
    for arm in ARMS:
        mask = arms == arm
        out[arm] = ArmCounts(int(covered[mask].sum()), int(signed[mask].sum()), int(mask.sum()))
    return out


def evaluate_intervals(ds, lo, hi, tol=0.0):
    """Per-arm (coverage, power_and_sign) fractions for one interval per unit."""
    counts = interval_counts(ds.true_ite, lo, hi, ds.latent.a, tol)
    out = {}
    for arm, c in counts.items():
        if c.units == 0:
            out[arm] = (float("nan"), float("nan"))
        else:
            out[arm] = (c.covered / c.units, c.signed / c.units)
    return out


def _bound_estimators(ds, rule, adjuster, suffix):
    imputed = impute_all_coarsened(ds.panel, adjuster)
    points = imputed.points
    half = np.array([tau_from_rule(row, rule).half_width for row in imputed.residuals])
    oracle = np.abs(imputed.predicted - ds.true_counterfactual)
    return {
        "tau" + suffix: (points - half, points + half),
        "tau_star" + suffix: (points - oracle, points + oracle),
    }


def estimator_intervals(ds, Z=2.0, level=0.95):
    """
    Intervals of every estimator for one dataset. An estimator that cannot
    be computed maps to the exception it raised.
    """
    rule = TauRule(TauStyle.NORM_BASED, Norm.L1_MEAN, Z)
    out = {}
    for adjuster, suffix in ((NO_ADJUSTMENT, ""), (Adjuster(AdjusterKind.LINEAR, ("x",)), "_x")):
        try:
            out.update(_bound_estimators(ds, rule, adjuster, suffix))
        except ESTIMATOR_FAILURES as e:
            out["tau" + suffix] = out["tau_star" + suffix] = e
    try:
        fit = fit_cate_projection(ds.panel, "x")
        _, lo, hi = cate_intervals(fit, ds.latent.x, level)
        out["cate"] = (lo, hi)
    except ESTIMATOR_FAILURES as e:
        out["cate"] = e
    return out


@dataclass(frozen=True)
class ReplicationOutcome:
    index: int
    seed: int
    status: str
    counts: Dict = field(default_factory=dict)
    failed: Tuple[str, ...] = ()


def run_replication(params, n, seed, index=0, Z=2.0, arm_levels="versions", level=0.95):
    ds = draw_dataset(params, n, seed)
    if not accept_dataset(ds, arm_levels):
        return ReplicationOutcome(index, seed, "rejected")
    counts = {}
    failed = []
    for name, intervals in estimator_intervals(ds, Z, level).items():
        if isinstance(intervals, Exception):
            logger.debug("replication {} estimator {} failed: {}".format(index, name, intervals))
            failed.append(name)
            continue
        counts[name] = interval_counts(ds.true_ite, intervals[0], intervals[1], ds.latent.a, COVERAGE_TOLERANCE)
    return ReplicationOutcome(index, seed, "failed" if failed else "accepted", counts, tuple(failed))


@dataclass
class SimReport:
    n: int
    reps: int
    base_seed: int
    Z: float
    arm_levels: str
    totals: Dict
    rejected: int
    failed: Dict

    def fraction(self, estimator, arm, metric):
        c = self.totals[(estimator, arm)]
        if c.units == 0:
            return float("nan")
        value = c.covered if metric == "coverage" else c.signed
        return value / c.units

    @property
    def cells(self):
        return {
            (estimator, arm, metric): self.fraction(estimator, arm, metric)
            for estimator in ESTIMATORS
            for arm in ARMS
            for metric in METRICS
        }

    def to_frame(self):
        records = [
            {"estimator": e, "arm": ARMS[a], "metric": m, "value": v}
            for (e, a, m), v in self.cells.items()
        ]
        return pd.DataFrame.from_records(records)

    def as_dict(self):
        return {
            "n": self.n,
            "reps": self.reps,
            "base_seed": self.base_seed,
            "Z": self.Z,
            "arm_levels": self.arm_levels,
            "rejected": self.rejected,
            "failed": dict(self.failed),
            "cells": [
                {"estimator": e, "arm": ARMS[a], "metric": m, "value": v}
                for (e, a, m), v in self.cells.items()
            ],
            "counts": [
                {"estimator": e, "arm": ARMS[a], "covered": c.covered, "signed": c.signed, "units": c.units}
                for (e, a), c in self.totals.items()
            ],
        }


def run_replications(
    params=None, n=50, reps=1000, base_seed=0, Z=2.0, arm_levels="versions", workers=None, level=0.95
) -> SimReport:
    params = params or DGPParams()
    if reps < 1:
        raise DomainError("reps must be at least 1")
    if arm_levels not in ARM_LEVELS:
        raise DomainError("arm_levels must be one of {}".format(ARM_LEVELS))

    def work(index):
        return run_replication(params, n, base_seed + index, index, Z, arm_levels, level)

    agent = ReplicationAgent(work, workers)
    totals = {(e, a): ArmCounts(0, 0, 0) for e in ESTIMATORS for a in ARMS}
    failed = {e: 0 for e in ESTIMATORS}
    accepted = rejected = 0
    next_index = 0
    max_candidates = 100 * reps + 100
    while accepted < reps:
        if next_index >= max_candidates:
            raise SimulationAbortedError(
                "only {} of {} candidate draws were accepted".format(accepted, next_index)
            )
        batch = range(next_index, next_index + max(reps - accepted, agent.workers))
        outcomes = agent.run(batch)
        for index in batch:
            outcome = outcomes[index]
            next_index = index + 1
            if outcome.status == "rejected":
                rejected += 1
                continue
            accepted += 1
            for name in outcome.failed:
                failed[name] += 1
            for (name, counts) in outcome.counts.items():
                for arm, c in counts.items():
                    t = totals[(name, arm)]
                    totals[(name, arm)] = ArmCounts(t.covered + c.covered, t.signed + c.signed, t.units + c.units)
            if accepted == reps:
                break
        logger.info("N={}: {} of {} replications accepted, {} rejected".format(n, accepted, reps, rejected))

    for name, count in failed.items():
        if count > MAX_FAILURE_RATE * reps:
            raise SimulationAbortedError(
                "estimator {} failed in {} of {} replications".format(name, count, reps)
            )
        if count:
            logger.warning("estimator {} failed in {} replications".format(name, count))
    return SimReport(n, reps, base_seed, float(Z), arm_levels, totals, rejected, failed)


def report_table(reports):
    """Rows of estimator x statistic, columns of arm x N."""
    reports = sorted(reports, key=lambda r: -r.n)
    records = []
    for estimator, label in ESTIMATORS.items():
        for metric, statistic in METRICS.items():
            row = OrderedDict([("Estimator", label), ("Statistic", statistic)])
            for arm, arm_label in ARMS.items():
                for report in reports:
                    row["{} N={}".format(arm_label, report.n)] = report.fraction(estimator, arm, metric)
            records.append(row)
    # Coverage rows first, then power and sign, as in the published layout.
    frame = pd.DataFrame.from_records(records)
    order = list(METRICS.values())
    frame["_order"] = frame["Statistic"].map(order.index)
    return frame.sort_values("_order", kind="stable").drop(columns="_order").reset_index(drop=True)


@dataclass(frozen=True)
class Illustration:
    grid: pd.DataFrame
    scatter: pd.DataFrame
    metadata: Dict


def make_illustration(seed=0, n=1000, xs=None, params=None) -> Illustration:
    params = params or DGPParams(sigma_xu=0.25)
    xs = np.linspace(-3.0, 3.0, 121) if xs is None else np.asarray(xs, dtype=float)
    ds = draw_dataset(params, n, seed)
    scatter = pd.DataFrame(
        {
            "unit": ds.panel.units,
            "x": ds.latent.x,
            "u": ds.latent.u,
            "a": ds.latent.a,
            "m1": ds.latent.m1,
            "m": ds.latent.m,
            "ite": ds.true_ite,
            "ite_1": ds.potential_outcomes[:, 1] - ds.potential_outcomes[:, 0],
            "ite_2": ds.potential_outcomes[:, 2] - ds.potential_outcomes[:, 0],
        }
    )
    line = projection_oracle(params, "cate")
    metadata = {
        "seed": seed,
        "n": n,
        "sigma_xu": params.sigma_xu,
        "projection_intercept": line.intercept,
        "projection_slope": line.slope,
        "params": params.as_dict(),
    }
    return Illustration(curve_table(params, xs), scatter, metadata)
