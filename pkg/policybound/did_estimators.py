"""
    did_estimators.py

    Group trends, counterfactual imputation and unit-level
    difference-in-differences estimates, plus the pre-period residuals that
    calibrate the sensitivity rules.
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

import enum
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from .errors import DomainError, EmptyPoolError, PoolError, SchemaError, SingularDesignError

logger = logging.getLogger(__name__)

# Relative size of a pivot of R below which the design counts as rank deficient.
RANK_TOLERANCE = 1e-10

OBSERVED_MINUS_PREDICTED = "observed_minus_predicted"


class AdjusterKind(enum.Enum):
    NONE = "none"
    DISCRETE = "discrete"
    LINEAR = "linear"
    TWFE = "twfe"


@dataclass(frozen=True)
class Adjuster:
    kind: AdjusterKind = AdjusterKind.NONE
    columns: Tuple[str, ...] = ()

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", AdjusterKind(self.kind))
        except ValueError:
            raise SchemaError("unknown adjuster kind {!r}".format(self.kind))
        object.__setattr__(self, "columns", tuple(self.columns))
        needs_columns = self.kind in (AdjusterKind.DISCRETE, AdjusterKind.LINEAR)
        if needs_columns and not self.columns:
            raise SchemaError("{} adjustment needs covariate columns".format(self.kind.value))
        if not needs_columns and self.columns:
            raise SchemaError("{} adjustment takes no columns".format(self.kind.value))

    @classmethod
    def parse(cls, text):
        """
        >>> Adjuster.parse("linear:x,z").columns
        ('x', 'z')
        >>> Adjuster.parse("twfe").kind.value
        'twfe'
        """
        kind, _, columns = text.partition(":")
        return cls(kind.strip().lower(), tuple(c.strip() for c in columns.split(",") if c.strip()))

    @property
    def label(self):
        if self.columns:
            return "{}({})".format(self.kind.value, ",".join(self.columns))
        return self.kind.value

    def validate(self, panel):
        panel.check_columns(self.columns)
        frame = panel.covariates
        for col in self.columns:
            dtype = frame[col].dtype
            if self.kind is AdjusterKind.LINEAR and not pd.api.types.is_numeric_dtype(dtype):
                raise SchemaError("linear adjustment needs numeric column {!r}".format(col))
            if self.kind is AdjusterKind.DISCRETE and pd.api.types.is_float_dtype(dtype):
                raise SchemaError("discrete adjustment needs categorical column {!r}".format(col))


NO_ADJUSTMENT = Adjuster()


@dataclass(frozen=True)
class TrendCoefficients:
    intercept: float
    slopes: Tuple[float, ...]
    columns: Tuple[str, ...]
    n: int

    def predict(self, x):
        return self.intercept + float(np.dot(self.slopes, x))


@dataclass(frozen=True)
class ResidualVector:
    unit: str
    values: Tuple[float, ...]
    adjuster: Adjuster
    sign_convention: str = OBSERVED_MINUS_PREDICTED
    insufficient: bool = False

    def __len__(self):
        return len(self.values)

    def as_array(self):
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class UnitDidEstimate:
    unit: str
    target_code: int
    point: float
    predicted_counterfactual: float
    observed: float
    treated: bool
    pool: object
    adjuster: Adjuster


@dataclass(frozen=True)
class CoarsenedImputation:
    """Opposite-arm imputations for every unit of a panel at once."""

    units: Tuple[str, ...]
    arms: np.ndarray
    predicted: np.ndarray
    observed: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    adjuster: Adjuster


def ols_qr(design, y):
    n, p = design.shape
    if n <= p:
        raise SingularDesignError(
            "need more observations than parameters, got n={} p={}".format(n, p)
        )
    q, r = np.linalg.qr(design)
    pivots = np.abs(np.diag(r))
    if pivots.min() <= RANK_TOLERANCE * max(pivots.max(), 1.0):
        raise SingularDesignError("rank-deficient design (pivots {})".format(pivots))
    return solve_triangular(r, q.T @ y)


def _pool_rows(panel, pool, code):
    if pool.target_code != code:
        raise PoolError(
            "pool carries code {}, expected {}".format(pool.target_code, code)
        )
    return panel.rows(pool.members)


def _check_diff_period(panel, t):
    if not isinstance(t, (int, np.integer)) or not 2 <= t <= panel.T:
        raise DomainError("trend period must be in 2..{}, got {!r}".format(panel.T, t))


def group_trend(panel, code, t, pool):
    _check_diff_period(panel, t)
    if pool is None or not len(pool):
        raise EmptyPoolError("group trend over an empty pool")
    rows = _pool_rows(panel, pool, code)
    return float(np.mean(panel.outcomes[rows, t - 1] - panel.outcomes[rows, t - 2]))


def fit_linear_trend_model(panel, code, t, columns, pool=None) -> TrendCoefficients:
    _check_diff_period(panel, t)
    columns = tuple(columns)
    if pool is None:
        rows = np.flatnonzero(panel.treatment == code)
    else:
        rows = _pool_rows(panel, pool, code)
    if len(rows) == 0:
        raise EmptyPoolError("no units carry code {}".format(code))
    coef = _fit_rows(panel, rows, t, panel.covariate_matrix(rows, columns))
    return TrendCoefficients(float(coef[0]), tuple(float(c) for c in coef[1:]), columns, len(rows))


def _fit_rows(panel, rows, t, x):
    design = np.column_stack([np.ones(len(rows)), x])
    y = panel.outcomes[rows, t - 1] - panel.outcomes[rows, t - 2]
    return ols_qr(design, y)


def _predict_rows(panel, targets, pool_rows, adjuster, t, leave_out=False, covariates=None):
    """
    Counterfactual outcome at period t for each row in `targets`, borrowing
    the trend of `pool_rows`. With `leave_out` the twfe unit effect skips
    period t itself.
    """
    y = panel.outcomes
    kind = adjuster.kind
    if kind is AdjusterKind.TWFE and panel.T == 2:
        logger.warning("twfe adjustment on a 2-period panel reduces to first differences")
        kind = AdjusterKind.NONE

    if kind is AdjusterKind.NONE:
        trend = np.mean(y[pool_rows, t - 1] - y[pool_rows, t - 2])
        return y[targets, t - 2] + trend

    if kind is AdjusterKind.LINEAR:
        if covariates is None:
            covariates = panel.covariate_matrix(np.arange(panel.n_units), adjuster.columns)
        coef = _fit_rows(panel, pool_rows, t, covariates[pool_rows])
        return y[targets, t - 2] + coef[0] + covariates[targets] @ coef[1:]

    if kind is AdjusterKind.DISCRETE:
        if covariates is None:
            covariates = panel.covariates[list(adjuster.columns)].to_numpy()
        diffs = y[pool_rows, t - 1] - y[pool_rows, t - 2]
        out = np.empty(len(targets))
        for k, row in enumerate(targets):
            match = (covariates[pool_rows] == covariates[row]).all(axis=1)
            if not match.any():
                raise EmptyPoolError(
                    "no comparator of unit {} matches on {}".format(
                        panel.units[row], list(adjuster.columns)
                    )
                )
            out[k] = y[row, t - 2] + diffs[match].mean()
        return out

    # twfe: pool period means as time effects, de-timed pre-period mean as unit effect
    time_effects = y[pool_rows].mean(axis=0)
    if leave_out:
        periods = [s for s in range(1, panel.T) if s != t]
    else:
        periods = list(range(1, t))
    cols = np.asarray(periods) - 1
    unit_effects = (y[np.ix_(targets, cols)] - time_effects[cols]).mean(axis=1)
    return unit_effects + time_effects[t - 1]


def _own_label(panel, unit, pool):
    return panel.arm(unit) if pool.coarsened else panel.code(unit)


def impute_counterfactual(panel, unit, code, adjuster, pool, t):
    _check_diff_period(panel, t)
    if pool.target_unit != str(unit):
        raise PoolError("pool was built for {}, not {}".format(pool.target_unit, unit))
    if _own_label(panel, unit, pool) == code:
        raise DomainError("unit {} already carries code {}".format(unit, code))
    adjuster.validate(panel)
    rows = _pool_rows(panel, pool, code)
    target = np.array([panel.row(unit)])
    return float(_predict_rows(panel, target, rows, adjuster, t)[0])


def unit_did(panel, unit, target_code, adjuster, pool) -> UnitDidEstimate:
    own = _own_label(panel, unit, pool)
    if pool.coarsened:
        if target_code != 1:
            raise DomainError("coarsened contrasts compare arm 1 against arm 0")
    elif target_code <= 0 or own not in (0, target_code):
        raise DomainError(
            "unit {} with code {} is outside the 0 vs {} contrast".format(unit, own, target_code)
        )
    treated = own != 0
    comparator = 0 if treated else target_code
    predicted = impute_counterfactual(panel, unit, comparator, adjuster, pool, panel.T)
    observed = panel.outcome(unit, panel.T)
    point = observed - predicted if treated else predicted - observed
    logger.debug(
        "unit {} psi={:.6g} predicted={:.6g} pool={}".format(unit, point, predicted, len(pool))
    )
    return UnitDidEstimate(
        str(unit), int(target_code), point, predicted, observed, treated, pool, adjuster
    )


def pre_period_residuals(panel, unit, adjuster, pool) -> ResidualVector:
    if panel.T < 3:
        logger.warning(
            "unit {}: T={} leaves no pre-period residuals".format(unit, panel.T)
        )
        return ResidualVector(str(unit), (), adjuster, insufficient=True)
    adjuster.validate(panel)
    if pool.target_unit != str(unit):
        raise PoolError("pool was built for {}, not {}".format(pool.target_unit, unit))
    rows = panel.rows(pool.members)
    target = np.array([panel.row(unit)])
    leave_out = adjuster.kind is AdjusterKind.TWFE
    values = []
    for t in range(2, panel.T):
        predicted = _predict_rows(panel, target, rows, adjuster, t, leave_out=leave_out)[0]
        values.append(float(panel.outcomes[target[0], t - 1] - predicted))
    return ResidualVector(str(unit), tuple(values), adjuster)


def impute_all_coarsened(panel, adjuster=NO_ADJUSTMENT) -> CoarsenedImputation:
    """
    Every unit against the whole opposite coarsened arm. Within an arm all
    units share one pool, so each (arm, period) fit is done once. Agrees
    with unit_did and pre_period_residuals on opposite_arm_pool.
    """
    adjuster.validate(panel)
    arms = panel.arms
    covariates = None
    if adjuster.kind is AdjusterKind.LINEAR:
        covariates = panel.covariate_matrix(np.arange(panel.n_units), adjuster.columns)
    elif adjuster.kind is AdjusterKind.DISCRETE:
        covariates = panel.covariates[list(adjuster.columns)].to_numpy()

    n, T = panel.outcomes.shape
    predicted = np.full((n, T), np.nan)
    residual_predictions = np.full((n, T), np.nan)
    leave_out = adjuster.kind is AdjusterKind.TWFE
    for arm in (0, 1):
        targets = np.flatnonzero(arms == arm)
        if not len(targets):
            continue
        pool_rows = np.flatnonzero(arms != arm)
        if not len(pool_rows):
            raise EmptyPoolError("arm {} has no opposite-arm comparators".format(arm))
        for t in range(2, T + 1):
            predicted[targets, t - 1] = _predict_rows(
                panel, targets, pool_rows, adjuster, t, covariates=covariates
            )
            if t < T and leave_out:
                residual_predictions[targets, t - 1] = _predict_rows(
                    panel, targets, pool_rows, adjuster, t, leave_out=True, covariates=covariates
                )
    if not leave_out:
        residual_predictions = predicted

    observed = panel.outcomes[:, -1]
    post = predicted[:, -1]
    points = np.where(arms == 1, observed - post, post - observed)
    residuals = panel.outcomes[:, 1:-1] - residual_predictions[:, 1:-1]
    return CoarsenedImputation(
        panel.units, arms, post, observed, points, residuals, adjuster
    )
