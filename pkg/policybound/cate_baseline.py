"""
    cate_baseline.py

    Comparison estimators: the OLS projection of the coarsened CATE on
    first-differenced outcomes with heteroskedasticity-robust errors, and the
    two-way fixed-effects average effect with unit-clustered errors.
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
from collections import namedtuple
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy.stats import norm

from .errors import DegenerateSubsetError, DomainError, SchemaError, SingularDesignError

logger = logging.getLogger(__name__)

CATE_TERMS = ("intercept", "treated", "x", "treated_x")
ROBUST_VARIANTS = ("HC0", "HC1", "HC2", "HC3")
CLUSTER_VARIANT = "cluster(unit), G/(G-1)*(n-1)/(n-p)"
MIN_ARM_SIZE = 3

Interval = namedtuple("Interval", ["point", "lo", "hi", "se"])


@dataclass(frozen=True)
class CateFit:
    coefficients: Tuple[float, float, float, float]
    covariance: np.ndarray
    n: int
    variant: str = "HC1"

    def as_dict(self):
        return {
            "terms": list(CATE_TERMS),
            "coefficients": dict(zip(CATE_TERMS, self.coefficients)),
            "covariance": self.covariance.tolist(),
            "n": self.n,
            "variant": self.variant,
        }


@dataclass(frozen=True)
class TwfeEstimate:
    estimate: float
    se: Optional[float]
    lo: Optional[float]
    hi: Optional[float]
    n_units: int
    n_treated: int
    variant: str = CLUSTER_VARIANT


def critical_value(level):
    if not 0 < level < 1:
        raise DomainError("confidence level must be in (0, 1), got {}".format(level))
    return float(norm.ppf(0.5 + level / 2.0))


def cate_design(treated, x):
    treated = np.asarray(treated, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones(len(x)), treated, x, treated * x])


def fit_cate_arrays(delta_y, treated, x, variant="HC1") -> CateFit:
    if variant not in ROBUST_VARIANTS:
        raise DomainError("unknown robust variant {!r}".format(variant))
    treated = np.asarray(treated)
    for arm in (0, 1):
        if (treated == arm).sum() < MIN_ARM_SIZE:
            raise DegenerateSubsetError(
                "arm {} has fewer than {} units".format(arm, MIN_ARM_SIZE)
            )
    design = cate_design(treated, x)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise SingularDesignError("CATE design is rank deficient")
    result = sm.OLS(np.asarray(delta_y, dtype=float), design).fit(cov_type=variant)
    cov = np.asarray(result.cov_params())
    return CateFit(tuple(float(b) for b in result.params), (cov + cov.T) / 2.0, len(design), variant)


def fit_cate_projection(panel, x_column, variant="HC1") -> CateFit:
    rows = np.arange(panel.n_units)
    x = panel.covariate_matrix(rows, [x_column])[:, 0]
    delta_y = panel.outcomes[:, -1] - panel.outcomes[:, -2]
    fit = fit_cate_arrays(delta_y, panel.arms, x, variant)
    logger.debug("CATE fit on {} units: {}".format(fit.n, fit.coefficients))
    return fit


def cate_standard_errors(fit, xs):
    xs = np.asarray(xs, dtype=float)
    cov = fit.covariance
    var = cov[1, 1] + 2.0 * xs * cov[1, 3] + xs ** 2 * cov[3, 3]
    return np.sqrt(np.maximum(var, 0.0))


def cate_intervals(fit, xs, level=0.95):
    xs = np.asarray(xs, dtype=float)
    points = fit.coefficients[1] + fit.coefficients[3] * xs
    spread = critical_value(level) * cate_standard_errors(fit, xs)
    return points, points - spread, points + spread


def cate_interval(fit, x, level=0.95) -> Interval:
    """
    >>> fit = CateFit((0.0, 1.0, 0.0, 0.0), np.diag([0.0, 0.04, 0.0, 0.0]), 10)
    >>> [round(v, 3) for v in cate_interval(fit, 0.0)[:3]]
    [1.0, 0.608, 1.392]
    """
    points, lo, hi = cate_intervals(fit, [x], level)
    se = cate_standard_errors(fit, [x])
    return Interval(float(points[0]), float(lo[0]), float(hi[0]), float(se[0]))


def _subset_rows(panel, subset):
    if subset is None:
        return np.arange(panel.n_units)
    if callable(subset):
        return np.array([i for i, u in enumerate(panel.units) if subset(u)], dtype=np.int64)
    return panel.rows(subset)


def twfe_ate(panel, subset=None, level=0.95) -> TwfeEstimate:
    rows = _subset_rows(panel, subset)
    arms = panel.arms[rows]
    n_treated = int(arms.sum())
    n_control = len(rows) - n_treated
    if n_treated == 0 or n_control == 0:
        raise DegenerateSubsetError(
            "subset needs treated and control units, got {} and {}".format(n_treated, n_control)
        )

    T = panel.T
    units = np.repeat(rows, T)
    times = np.tile(np.arange(1, T + 1), len(rows))
    frame = pd.DataFrame(
        {
            "y": panel.outcomes[rows].ravel(),
            "unit": units,
            "time": times,
            "treated_post": np.repeat(arms, T) * (times == T),
        }
    )
    design = pd.concat(
        [
            frame[["treated_post"]].astype(float),
            pd.get_dummies(frame["unit"], prefix="u", drop_first=True, dtype=float),
            pd.get_dummies(frame["time"], prefix="t", drop_first=True, dtype=float),
        ],
        axis=1,
    )
    design = sm.add_constant(design, has_constant="add")
    model = sm.OLS(frame["y"], design)

    if n_treated >= 2 and n_control >= 2:
        result = model.fit(cov_type="cluster", cov_kwds={"groups": frame["unit"], "use_correction": True})
        estimate = float(result.params["treated_post"])
        se = float(result.bse["treated_post"])
        crit = critical_value(level)
        return TwfeEstimate(estimate, se, estimate - crit * se, estimate + crit * se, len(rows), n_treated)

    logger.debug("twfe subset with {} treated / {} control: no standard error".format(n_treated, n_control))
    estimate = float(model.fit().params["treated_post"])
    return TwfeEstimate(estimate, None, None, None, len(rows), n_treated)


def average_effects_table(panel, rural_column="rural", pdmp_columns=("pdmp_2014", "pdmp_2013"), level=0.95):
    """
    TWFE average effects on the whole panel and on rurality and PDMP-history
    subsets. D = 1 when every history column is 1 and D = 0 when all are 0.
    """
    columns = [rural_column] + list(pdmp_columns)
    missing = [c for c in columns if c not in panel.covariate_columns]
    if missing:
        raise SchemaError("average effects table needs columns {}".format(missing))
    cov = panel.covariates
    rural = cov[rural_column].to_numpy()
    history = cov[list(pdmp_columns)].to_numpy()
    d_one = (history == 1).all(axis=1)
    d_zero = (history == 0).all(axis=1)
    everyone = np.ones(panel.n_units, dtype=bool)

    subsets = [("all", everyone)]
    subsets += [("R={}".format(r), rural == r) for r in (0, 1)]
    for label, d_mask in (("D=0", d_zero), ("D=1", d_one)):
        subsets.append((label, d_mask))
        subsets += [("{},R={}".format(label, r), d_mask & (rural == r)) for r in (0, 1)]

    records = []
    for label, mask in subsets:
        units = [u for u, keep in zip(panel.units, mask) if keep]
        n_treated = int(panel.arms[mask].sum())
        row = {"estimand": label, "n": len(units), "n_treated": n_treated,
               "estimate": np.nan, "se": np.nan, "lo": np.nan, "hi": np.nan}
        try:
            est = twfe_ate(panel, units, level)
        except DegenerateSubsetError as e:
            logger.info("average effect {} not estimable: {}".format(label, e))
        else:
            row["estimate"] = est.estimate
            if est.se is not None:
                row.update(se=est.se, lo=est.lo, hi=est.hi)
        records.append(row)
    return pd.DataFrame.from_records(records)
