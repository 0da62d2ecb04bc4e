"""
    sensitivity_bounds.py

    Turns unit-level DiD estimates into intervals. The half-width of an
    interval comes from a sensitivity rule applied to the unit's pre-period
    prediction errors; the module also holds the coarsening strategies for
    untreated units, tipping points, the worst-case and shift constants, and
    the eight-specification robustness grid.
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
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .did_estimators import (
    NO_ADJUSTMENT,
    Adjuster,
    AdjusterKind,
    pre_period_residuals,
    unit_did,
)
from .errors import (
    DomainError,
    EmptyPoolError,
    InsufficientPrePeriodError,
    RuleError,
    SchemaError,
    StrategyError,
)
from .panel_core import comparator_pool, opposite_arm_pool
from .policybound_agent import ReplicationAgent

logger = logging.getLogger(__name__)

INFINITE_TIPPING_POINT = math.inf
DEFAULT_Z_GRID = (1.0, 1.5, 2.0)
DEFAULT_PDMP_COLUMNS = ("pdmp_2014", "pdmp_2013")


class Norm(enum.Enum):
    L1_MEAN = "l1_mean"
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, text):
        """
        >>> Norm.parse("Linf")
        <Norm.LINF: 'linf'>
        >>> Norm.parse("l1")
        <Norm.L1_MEAN: 'l1_mean'>
        """
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        key = {"l1": "l1_mean", "mae": "l1_mean", "max": "linf", "inf": "linf"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise RuleError("unknown norm {!r}".format(text))


class TauStyle(enum.Enum):
    NORM_BASED = "norm_based"
    LAST_PLUS_MAXDIFF = "last_plus_maxdiff"
    ORACLE = "oracle"
    FIXED = "fixed"


class Sign(enum.Enum):
    STRICTLY_POSITIVE = "strictly_positive"
    STRICTLY_NEGATIVE = "strictly_negative"
    INDETERMINATE = "indeterminate"

    @classmethod
    def classify(cls, lo, hi):
        """
        Touching zero is indeterminate.

        >>> Sign.classify(0.0, 2.0).value
        'indeterminate'
        >>> Sign.classify(-0.5, -0.3).value
        'strictly_negative'
        """
        if lo > 0:
            return cls.STRICTLY_POSITIVE
        if hi < 0:
            return cls.STRICTLY_NEGATIVE
        return cls.INDETERMINATE


@dataclass(frozen=True)
class TauRule:
    style: TauStyle = TauStyle.NORM_BASED
    norm: Norm = Norm.LINF
    Z: float = 2.0
    fixed_value: float = 0.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "style", TauStyle(self.style))
        except ValueError:
            raise RuleError("unknown tau style {!r}".format(self.style))
        object.__setattr__(self, "norm", Norm.parse(self.norm))
        if not self.Z >= 0:
            raise RuleError("Z must be nonnegative, got {}".format(self.Z))
        if not self.fixed_value >= 0:
            raise RuleError("fixed tau must be nonnegative, got {}".format(self.fixed_value))

    def with_z(self, z):
        return replace(self, Z=float(z))

    @property
    def label(self):
        if self.style is TauStyle.NORM_BASED:
            return "{}:Z={:g}".format(self.norm.value, self.Z)
        if self.style is TauStyle.LAST_PLUS_MAXDIFF:
            return "last_plus_maxdiff:Z={:g}".format(self.Z)
        if self.style is TauStyle.FIXED:
            return "fixed:{:g}".format(self.fixed_value)
        return "oracle"


@dataclass(frozen=True)
class TauOutput:
    half_width: float
    shift: float = 0.0

    @property
    def lo_offset(self):
        return self.shift - self.half_width

    @property
    def hi_offset(self):
        return self.shift + self.half_width


@dataclass(frozen=True)
class BoundResult:
    unit: str
    point: float
    tau: TauOutput
    lo: float
    hi: float
    sign: Sign
    rule: Optional[TauRule] = None
    strategy: str = "standard"
    metadata: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DomainError("interval [{}, {}] is reversed".format(self.lo, self.hi))

    def contains(self, value, tol=0.0):
        return self.lo - tol <= value <= self.hi + tol

    def as_row(self):
        return {
            "unit": self.unit,
            "point": self.point,
            "lo": self.lo,
            "hi": self.hi,
            "sign": self.sign.value,
            "rule": self.rule.label if self.rule is not None else "",
            "strategy": self.strategy,
        }


class StrategyKind(enum.Enum):
    CONSERVATIVE = "conservative"
    ASSUME_VERSION = "assume_version"
    UNION = "union"


@dataclass(frozen=True)
class CoarseningStrategy:
    kind: StrategyKind = StrategyKind.CONSERVATIVE
    inflation: float = 1.0
    version: Optional[int] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", StrategyKind(self.kind))
        except ValueError:
            raise StrategyError("unknown coarsening strategy {!r}".format(self.kind))
        if self.kind is StrategyKind.CONSERVATIVE and not self.inflation >= 1:
            raise StrategyError("conservative inflation must be at least 1")
        if self.kind is StrategyKind.ASSUME_VERSION and (self.version is None or self.version <= 0):
            raise StrategyError("assume_version needs a positive treatment code")

    @classmethod
    def parse(cls, text):
        """
        >>> CoarseningStrategy.parse("assume_version:2").version
        2
        >>> CoarseningStrategy.parse("conservative:1.5").inflation
        1.5
        """
        kind, _, arg = str(text).partition(":")
        kind = kind.strip().lower()
        try:
            if kind == StrategyKind.CONSERVATIVE.value:
                return cls(kind, inflation=float(arg) if arg else 1.0)
            if kind == StrategyKind.ASSUME_VERSION.value:
                return cls(kind, version=int(arg))
        except ValueError:
            raise StrategyError("bad strategy argument in {!r}".format(text))
        return cls(kind)

    @property
    def label(self):
        if self.kind is StrategyKind.CONSERVATIVE:
            return "conservative({:g})".format(self.inflation)
        if self.kind is StrategyKind.ASSUME_VERSION:
            return "assume_version({})".format(self.version)
        return "union"


def residual_norm(values, norm):
    values = np.abs(np.asarray(values, dtype=float))
    norm = Norm.parse(norm)
    if not len(values):
        raise InsufficientPrePeriodError("no pre-period residuals to take a norm of")
    if norm is Norm.L1_MEAN:
        return float(values.mean())
    if norm is Norm.L2:
        return float(np.sqrt(np.sum(values ** 2)))
    return float(values.max())


def tau_from_rule(residuals, rule) -> TauOutput:
    """
    >>> tau_from_rule((0.1, -0.3), TauRule("norm_based", "linf", 2.0)).half_width
    0.6
    """
    values = residuals.as_array() if hasattr(residuals, "as_array") else np.asarray(residuals, float)
    if rule.style is TauStyle.FIXED:
        return TauOutput(rule.fixed_value)
    if rule.style is TauStyle.ORACLE:
        raise RuleError("oracle half-widths need the true outcome, use oracle_tau")
    if rule.style is TauStyle.NORM_BASED:
        return TauOutput(rule.Z * residual_norm(values, rule.norm))
    if len(values) < 2:
        raise InsufficientPrePeriodError(
            "last_plus_maxdiff needs at least two pre-period residuals, got {}".format(len(values))
        )
    return TauOutput(rule.Z * float(np.abs(np.diff(values)).max()), shift=-float(values[-1]))


def oracle_tau(true_counterfactual, predicted):
    return abs(predicted - true_counterfactual)


def bound_interval(estimate, tau_output, rule=None, strategy="standard", metadata=None) -> BoundResult:
    if not isinstance(tau_output, TauOutput):
        tau_output = TauOutput(float(tau_output))
    point = estimate.point
    lo = point + tau_output.lo_offset
    hi = point + tau_output.hi_offset
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("non-finite bound for unit {}".format(estimate.unit))
    return BoundResult(
        estimate.unit,
        point,
        tau_output,
        lo,
        hi,
        Sign.classify(lo, hi),
        rule,
        strategy,
        dict(metadata or {}),
    )


def tipping_z(estimate, residuals, norm):
    """
    Smallest Z at which the symmetric interval reaches zero.

    A zero residual norm means no finite Z ever reaches zero, so the sentinel
    INFINITE_TIPPING_POINT is returned unless the point itself is zero.
    """
    if estimate.point == 0:
        return 0.0
    scale = residual_norm(residuals.as_array(), norm)
    if scale == 0:
        return INFINITE_TIPPING_POINT
    return abs(estimate.point) / scale


def bounds_over_z(estimate, residuals, rule, z_grid=DEFAULT_Z_GRID) -> List[BoundResult]:
    out = []
    for z in z_grid:
        scaled = rule.with_z(z)
        out.append(bound_interval(estimate, tau_from_rule(residuals, scaled), scaled))
    return out


def estimate_unit(panel, unit, adjuster=NO_ADJUSTMENT, match_columns=()):
    """Coarsened DiD estimate and pre-period residuals against the opposite arm."""
    pool = opposite_arm_pool(panel, unit, match_columns)
    estimate = unit_did(panel, unit, 1, adjuster, pool)
    residuals = pre_period_residuals(panel, unit, adjuster, pool)
    return estimate, residuals


def bound_unit(panel, unit, rule, adjuster=NO_ADJUSTMENT, match_columns=(), strategy="standard"):
    estimate, residuals = estimate_unit(panel, unit, adjuster, match_columns)
    tau = tau_from_rule(residuals, rule)
    return bound_interval(
        estimate,
        tau,
        rule,
        strategy,
        {"pool_size": len(estimate.pool), "adjuster": adjuster.label},
    )


def _version_bound(panel, unit, version, rule, adjuster, match_columns):
    pool = comparator_pool(panel, unit, version, match_columns)
    estimate = unit_did(panel, unit, version, adjuster, pool)
    residuals = pre_period_residuals(panel, unit, adjuster, pool)
    return bound_interval(
        estimate,
        tau_from_rule(residuals, rule),
        rule,
        "assume_version({})".format(version),
        {"pool_size": len(pool), "adjuster": adjuster.label},
    )


def coarsened_untreated_bound(
    panel, unit, strategy, rule, adjuster=NO_ADJUSTMENT, match_columns=()
) -> BoundResult:
    if panel.arm(unit) != 0:
        raise DomainError("unit {} is treated; coarsening strategies bound untreated units".format(unit))
    versions = sorted(int(m) for m in set(panel.treatment.tolist()) if m > 0)

    if strategy.kind is StrategyKind.CONSERVATIVE:
        inflated = rule.with_z(rule.Z * strategy.inflation)
        return bound_unit(panel, unit, inflated, adjuster, match_columns, strategy.label)

    if strategy.kind is StrategyKind.ASSUME_VERSION:
        if strategy.version not in versions:
            raise StrategyError(
                "version {} is not observed among treated units {}".format(strategy.version, versions)
            )
        return _version_bound(panel, unit, strategy.version, rule, adjuster, match_columns)

    if not versions:
        raise StrategyError("no treated versions to take a union over")
    parts = [_version_bound(panel, unit, m, rule, adjuster, match_columns) for m in versions]
    lo = min(b.lo for b in parts)
    hi = max(b.hi for b in parts)
    disjoint = False
    reach = -math.inf
    for b in sorted(parts, key=lambda b: b.lo):
        disjoint = disjoint or (reach > -math.inf and b.lo > reach)
        reach = max(reach, b.hi)
    if disjoint:
        logger.info("unit {}: per-version intervals are disjoint, reporting their hull".format(unit))
    # Hull reported as midpoint +/- half its length.
    center = (lo + hi) / 2.0
    return BoundResult(
        str(unit),
        center,
        TauOutput((hi - lo) / 2.0),
        lo,
        hi,
        Sign.classify(lo, hi),
        rule,
        strategy.label,
        {
            "versions": versions,
            "intervals": [(b.lo, b.hi) for b in parts],
            "points": [b.point for b in parts],
            "disjoint": disjoint,
        },
    )


def worst_case_halfwidth(zeta, arm, asymptotic=False):
    """
    Half-width that covers every unit when idiosyncratic errors are bounded
    by zeta in absolute value.

    >>> worst_case_halfwidth(1.0, "treated")
    2.0
    >>> worst_case_halfwidth(1.0, "untreated", asymptotic=True)
    2.0
    """
    if zeta < 0:
        raise DomainError("zeta must be nonnegative")
    if arm not in ("treated", "untreated"):
        raise DomainError("arm must be 'treated' or 'untreated', got {!r}".format(arm))
    factor = 1.0 if arm == "treated" else 2.0
    return factor * zeta * (1.0 if asymptotic else 2.0)


def shift_constant(alpha, gamma):
    if gamma < 0:
        raise DomainError("gamma must be nonnegative")
    return math.sqrt(max((1.0 + alpha) ** 2, (1.0 + math.sqrt(gamma)) ** 2))


def tail_constant_inflation(c_eta):
    if c_eta < 0:
        raise DomainError("tail constant must be nonnegative")
    return math.sqrt(c_eta ** 2 + 1.0)


lemma2_inflation = tail_constant_inflation


def pre_period_multiplier(omega, c_eta):
    """Z0 = sqrt(2 * omega * (1 + C)^2) for a known tail constant C."""
    if omega < 0 or c_eta < 0:
        raise DomainError("omega and the tail constant must be nonnegative")
    return math.sqrt(2.0 * omega * (1.0 + c_eta) ** 2)


def untreated_multiplier(z0, alpha, gamma):
    return shift_constant(alpha, gamma) * z0


GRID_ADJUSTERS = (("first_differences", NO_ADJUSTMENT), ("twfe", Adjuster(AdjusterKind.TWFE)))
GRID_RULES = (
    ("linf", TauRule(TauStyle.NORM_BASED, Norm.LINF)),
    ("last_plus_maxdiff", TauRule(TauStyle.LAST_PLUS_MAXDIFF)),
)
GRID_POOLS = ("all", "matched")


def grid_specifications():
    """
    The eight robustness specifications in canonical order.

    >>> [s[0] for s in grid_specifications()][:3]
    ['first_differences/linf/all', 'first_differences/linf/matched', 'first_differences/last_plus_maxdiff/all']
    """
    specs = []
    for adj_name, adjuster in GRID_ADJUSTERS:
        for rule_name, rule in GRID_RULES:
            for pool_name in GRID_POOLS:
                specs.append(("/".join((adj_name, rule_name, pool_name)), adjuster, rule, pool_name))
    return specs


@dataclass(frozen=True)
class RobustnessGrid:
    counts: pd.DataFrame
    cells: pd.DataFrame
    Z: float


def _grid_column(panel, adjuster, rule, match_columns):
    signs = []
    for unit in panel.units:
        try:
            signs.append(bound_unit(panel, unit, rule, adjuster, match_columns).sign.value)
        except (EmptyPoolError, InsufficientPrePeriodError) as e:
            logger.warning("unit {} not evaluable: {}".format(unit, e))
            signs.append("not_evaluable")
    return signs


def robustness_grid(panel, Z=2.0, pdmp_columns=DEFAULT_PDMP_COLUMNS, workers=None) -> RobustnessGrid:
    pdmp_columns = tuple(pdmp_columns)
    missing = [c for c in pdmp_columns if c not in panel.covariate_columns]
    if missing:
        raise SchemaError("matched comparators need history columns {}".format(missing))
    specs = grid_specifications()

    def evaluate(index):
        name, adjuster, rule, pool_name = specs[index]
        match = pdmp_columns if pool_name == "matched" else ()
        return _grid_column(panel, adjuster, rule.with_z(Z), match)

    agent = ReplicationAgent(evaluate, workers=workers)
    columns = agent.run(range(len(specs)))
    cells = pd.DataFrame(
        {specs[i][0]: columns[i] for i in range(len(specs))}, index=pd.Index(panel.units, name="state")
    )
    counts = pd.DataFrame(
        {
            "state": list(panel.units),
            "negative": (cells == Sign.STRICTLY_NEGATIVE.value).sum(axis=1).to_numpy(),
            "positive": (cells == Sign.STRICTLY_POSITIVE.value).sum(axis=1).to_numpy(),
        }
    )
    logger.info(
        "robustness grid at Z={}: {} strictly negative, {} strictly positive classifications".format(
            Z, int(counts["negative"].sum()), int(counts["positive"].sum())
        )
    )
    return RobustnessGrid(counts, cells.reset_index(), float(Z))
