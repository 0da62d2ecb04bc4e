"""
    application_panel.py

    The bundled synthetic application panel: 50 states observed 2009-2014
    with a Medicaid-expansion-style treatment in the final year, two
    prescription-monitoring history indicators and a rurality flag. The
    state table lives in data/states.csv and the outcome rates in
    data/outcomes.csv, one row per state and one column per year, so every
    checkout builds the same panel.

    The outcomes were drawn once as a state level plus a rurality premium,
    common year effects, a state drift and period noise, with a random
    final-year effect for expansion states. IL and NM carry planted effects
    of -8 and +8.
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
import os

import numpy as np
import pandas as pd

from .errors import SchemaError
from .panel_core import Panel, derive_coarsened

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
STATES_CSV = os.path.join(DATA_DIR, "states.csv")
OUTCOMES_CSV = os.path.join(DATA_DIR, "outcomes.csv")
YEARS = tuple(range(2009, 2015))


def read_states(path=STATES_CSV):
    return pd.read_csv(path, dtype={"state": str})


def read_outcomes(path=OUTCOMES_CSV):
    frame = pd.read_csv(path, dtype={"state": str}).set_index("state")
    years = [str(y) for y in YEARS]
    if list(frame.columns) != years:
        raise SchemaError("outcome table needs year columns {}, got {}".format(years, list(frame.columns)))
    return frame


def application_panel(path=STATES_CSV, outcomes_path=OUTCOMES_CSV) -> Panel:
    states = read_states(path)
    outcomes = read_outcomes(outcomes_path)
    missing = sorted(set(states["state"]) - set(outcomes.index))
    if missing:
        raise SchemaError("no outcome rows for states {}".format(missing))
    grid = outcomes.loc[states["state"]].to_numpy(dtype=float)

    covariates = states.set_index("state")[["pdmp_2014", "pdmp_2013", "rural"]]
    expansion = states["expansion"].to_numpy().astype(np.int64)
    panel = Panel(states["state"], YEARS, grid, expansion, covariates)
    logger.debug("built application panel {!r} from {}".format(panel, outcomes_path))
    return derive_coarsened(panel)
