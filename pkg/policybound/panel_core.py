"""
    panel_core.py

    Balanced unit-by-period panels with a time-invariant treatment code that
    switches on in the final period. Loads and validates long-format CSV,
    derives the coarsened treatment indicator and builds comparator pools.
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

import io
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import (
    BalanceError,
    DomainError,
    DuplicateError,
    EmptyPoolError,
    PoolError,
    SchemaError,
)

logger = logging.getLogger(__name__)

# Outcomes are written with enough digits to read back bit-exact.
FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class PanelSchema:
    unit: str = "unit"
    time: str = "time"
    outcome: str = "outcome"
    treatment: str = "m"

    def columns(self):
        return (self.unit, self.time, self.outcome, self.treatment)


class Panel:
    """
    Immutable balanced panel. Periods are addressed as t = 1..T; the original
    time labels are kept in `times` for output.
    """

    def __init__(
        self, units, times, outcomes, treatment, covariates=None, coarsened=None
    ):
        units = tuple(str(u) for u in units)
        if len(set(units)) != len(units):
            raise DuplicateError("duplicate unit identifiers")
        times = tuple(int(t) for t in times)
        if len(times) < 2:
            raise SchemaError("a panel needs at least two periods, got {}".format(len(times)))
        if any(b <= a for a, b in zip(times, times[1:])):
            raise SchemaError("time labels must be strictly increasing")

        outcomes = np.array(outcomes, dtype=float)
        if outcomes.shape != (len(units), len(times)):
            raise SchemaError(
                "outcome grid has shape {}, expected {}".format(
                    outcomes.shape, (len(units), len(times))
                )
            )
        bad = np.argwhere(~np.isfinite(outcomes))
        if len(bad):
            raise BalanceError([(units[i], times[j]) for i, j in bad])

        treatment = np.asarray(treatment)
        if treatment.shape != (len(units),):
            raise SchemaError("one treatment code per unit is required")
        if not np.issubdtype(treatment.dtype, np.integer):
            raise SchemaError("treatment codes must be integers")
        if (treatment < 0).any():
            raise SchemaError("treatment codes must be non-negative")
        treatment = treatment.astype(np.int64)

        if covariates is None:
            covariates = pd.DataFrame(index=pd.Index(units))
        else:
            covariates = pd.DataFrame(covariates).copy()
            missing_units = [u for u in units if u not in covariates.index]
            if missing_units:
                raise SchemaError(
                    "covariates missing for units: {}".format(", ".join(missing_units))
                )
            covariates = covariates.loc[list(units)]
        covariates.index = pd.Index(units)
        if covariates.isna().any().any():
            cols = list(covariates.columns[covariates.isna().any()])
            raise SchemaError("missing covariate values in columns: {}".format(cols))

        if coarsened is not None:
            coarsened = np.asarray(coarsened).astype(np.int64)
            if not np.array_equal(coarsened, (treatment > 0).astype(np.int64)):
                raise SchemaError("coarsened indicator must equal 1(M > 0)")
            coarsened.setflags(write=False)

        outcomes.setflags(write=False)
        treatment.setflags(write=False)
        self._units = units
        self._times = times
        self._outcomes = outcomes
        self._treatment = treatment
        self._coarsened = coarsened
        self._covariates = covariates
        self._row = {u: i for i, u in enumerate(units)}

    units = property(lambda self: self._units)
    times = property(lambda self: self._times)
    outcomes = property(lambda self: self._outcomes)
    treatment = property(lambda self: self._treatment)
    coarsened = property(lambda self: self._coarsened)

    @property
    def T(self):
        return len(self._times)

    @property
    def n_units(self):
        return len(self._units)

    @property
    def covariates(self):
        return self._covariates.copy()

    @property
    def covariate_columns(self):
        return tuple(self._covariates.columns)

    @property
    def arms(self):
        if self._coarsened is not None:
            return self._coarsened
        return (self._treatment > 0).astype(np.int64)

    def row(self, unit):
        try:
            return self._row[str(unit)]
        except KeyError:
            raise DomainError("unknown unit {!r}".format(unit))

    def rows(self, units):
        return np.fromiter((self.row(u) for u in units), dtype=np.int64)

    def check_period(self, t, first=1):
        if not isinstance(t, (int, np.integer)) or not first <= t <= self.T:
            raise DomainError(
                "period must be an integer in {}..{}, got {!r}".format(first, self.T, t)
            )

    def outcome(self, unit, t):
        self.check_period(t)
        return float(self._outcomes[self.row(unit), t - 1])

    def code(self, unit):
        return int(self._treatment[self.row(unit)])

    def arm(self, unit):
        return int(self.arms[self.row(unit)])

    def check_columns(self, columns):
        unknown = [c for c in columns if c not in self._covariates.columns]
        if unknown:
            raise SchemaError("unknown covariate columns: {}".format(unknown))

    def covariate_values(self, unit, columns):
        self.check_columns(columns)
        return tuple(self._covariates.loc[str(unit), list(columns)])

    def covariate_matrix(self, rows, columns):
        self.check_columns(columns)
        block = self._covariates.iloc[rows][list(columns)]
        for col in columns:
            if not pd.api.types.is_numeric_dtype(block[col]):
                raise SchemaError("covariate {!r} is not numeric".format(col))
        return block.to_numpy(dtype=float)

    def first_differences(self):
        """(N, T-1) array whose column t-2 holds Y_t - Y_{t-1}."""
        return np.diff(self._outcomes, axis=1)

    def replace(self, outcomes=None, covariates=None):
        return Panel(
            self._units,
            self._times,
            self._outcomes if outcomes is None else outcomes,
            self._treatment,
            self._covariates if covariates is None else covariates,
            self._coarsened,
        )

    def __eq__(self, other):
        if not isinstance(other, Panel):
            return NotImplemented
        return (
            self._units == other._units
            and self._times == other._times
            and np.array_equal(self._outcomes, other._outcomes)
            and np.array_equal(self._treatment, other._treatment)
            and np.array_equal(self.arms, other.arms)
            and self._covariates.equals(other._covariates)
        )

    __hash__ = None

    def __repr__(self):
        return "Panel(N={}, T={}, treated={})".format(
            self.n_units, self.T, int(self.arms.sum())
        )


@dataclass(frozen=True)
class ComparatorPool:
    """
    Units whose observed trend stands in for the target unit's missing
    counterfactual. With `coarsened` set, `target_code` is an arm value (0/1)
    and members share that value of A rather than of M.
    """

    target_unit: str
    target_code: int
    members: Tuple[str, ...]
    filter: Tuple[str, ...] = ()
    coarsened: bool = False

    def __post_init__(self):
        if not self.members:
            raise EmptyPoolError(
                "empty comparator pool for unit {}".format(self.target_unit)
            )
        if self.target_unit in self.members:
            raise PoolError("unit {} cannot be its own comparator".format(self.target_unit))

    def __len__(self):
        return len(self.members)


def load_panel(csv_text, schema=PanelSchema()):
    try:
        frame = pd.read_csv(
            io.StringIO(csv_text), dtype={schema.unit: str}, float_precision="round_trip"
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError("malformed panel CSV: {}".format(e))
    missing = [c for c in schema.columns() if c not in frame.columns]
    if missing:
        raise SchemaError("missing required columns: {}".format(missing))
    if frame.empty:
        raise SchemaError("panel has no rows")

    if not pd.api.types.is_numeric_dtype(frame[schema.outcome]):
        raise SchemaError("non-numeric outcome column {!r}".format(schema.outcome))
    for col, what in ((schema.time, "time"), (schema.treatment, "treatment code")):
        if not pd.api.types.is_integer_dtype(frame[col]):
            raise SchemaError("non-integer {} column {!r}".format(what, col))
    if frame[schema.unit].isna().any():
        raise SchemaError("missing unit identifiers")

    dupes = frame.duplicated([schema.unit, schema.time], keep="first")
    if dupes.any():
        first = frame.loc[dupes, [schema.unit, schema.time]].iloc[0]
        raise DuplicateError(
            "duplicate (unit, time) row: ({}, {})".format(first[schema.unit], first[schema.time])
        )

    by_unit = frame.groupby(schema.unit, sort=False)
    if (by_unit[schema.treatment].nunique() > 1).any():
        raise SchemaError("treatment codes must be constant within unit")

    units = list(pd.unique(frame[schema.unit]))
    times = sorted(pd.unique(frame[schema.time]))
    grid = frame.pivot(index=schema.unit, columns=schema.time, values=schema.outcome)
    grid = grid.reindex(index=units, columns=times)
    holes = np.argwhere(grid.isna().to_numpy())
    if len(holes):
        raise BalanceError([(units[i], int(times[j])) for i, j in holes])

    cov_cols = [c for c in frame.columns if c not in schema.columns()]
    if frame[cov_cols].isna().any().any():
        raise SchemaError("missing covariate cells; covariates are not imputed")
    if cov_cols and (by_unit[cov_cols].nunique() > 1).any().any():
        raise SchemaError("covariates must be static within unit")
    covariates = by_unit[cov_cols].first() if cov_cols else None
    codes = by_unit[schema.treatment].first().reindex(units).to_numpy()

    panel = Panel(units, times, grid.to_numpy(dtype=float), codes, covariates)
    logger.debug("loaded {!r} with covariates {}".format(panel, cov_cols))
    return derive_coarsened(panel)


def read_panel(path, schema=PanelSchema()):
    try:
        with open(path, "r", encoding="utf-8") as fin:
            text = fin.read()
    except OSError as e:
        raise SchemaError("cannot read panel {}: {}".format(path, e.strerror or e))
    except UnicodeDecodeError as e:
        raise SchemaError("panel {} is not valid UTF-8: {}".format(path, e.reason))
    return load_panel(text, schema)


def serialize_panel(panel, schema=PanelSchema()):
    covariates = panel.covariates
    rows = []
    for i, unit in enumerate(panel.units):
        for j, label in enumerate(panel.times):
            rows.append(
                (unit, label, panel.outcomes[i, j], int(panel.treatment[i]))
            )
    frame = pd.DataFrame(rows, columns=list(schema.columns()))
    if len(covariates.columns):
        expanded = covariates.loc[frame[schema.unit]].reset_index(drop=True)
        frame = pd.concat([frame, expanded], axis=1)
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT)


def derive_coarsened(panel):
    if panel.coarsened is not None:
        return panel
    return Panel(
        panel.units,
        panel.times,
        panel.outcomes,
        panel.treatment,
        panel.covariates,
        coarsened=(panel.treatment > 0).astype(np.int64),
    )


def first_difference(panel, unit, t):
    if not isinstance(t, (int, np.integer)) or t < 2 or t > panel.T:
        raise DomainError(
            "first differences are defined for t in 2..{}, got {!r}".format(panel.T, t)
        )
    row = panel.row(unit)
    return float(panel.outcomes[row, t - 1] - panel.outcomes[row, t - 2])


def comparator_pool(panel, unit, target_code, match_columns=(), coarsened=False):
    row = panel.row(unit)
    match_columns = tuple(match_columns)
    labels = panel.arms if coarsened else panel.treatment
    mask = labels == int(target_code)
    mask[row] = False
    if match_columns:
        panel.check_columns(match_columns)
        covariates = panel.covariates
        for col in match_columns:
            mask &= (covariates[col] == covariates[col].iloc[row]).to_numpy()
    members = tuple(u for u, keep in zip(panel.units, mask) if keep)
    if not members:
        raise EmptyPoolError(
            "no comparators with {} {} for unit {} matching {}".format(
                "arm" if coarsened else "code", target_code, unit, list(match_columns)
            )
        )
    return ComparatorPool(str(unit), int(target_code), members, match_columns, coarsened)


def opposite_arm_pool(panel, unit, match_columns=()):
    return comparator_pool(
        panel, unit, 1 - panel.arm(unit), match_columns, coarsened=True
    )
