"""
    config.py

    Run settings. Command-line flags win over a flat key=value config file,
    which wins over the defaults below. POLICYBOUND_THREADS caps the number
    of worker threads.
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
from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

import psutil
from dotenv import dotenv_values

from .errors import ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = "POLICYBOUND_THREADS"
SLOW_ENV = "POLICYBOUND_SLOW"

COMMANDS = ("simulate", "illustrate", "bound", "tipping", "robustness", "table")


def thread_cap():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError("{} must be an integer, got {!r}".format(THREADS_ENV, raw))
    if cap < 1:
        raise ConfigError("{} must be at least 1, got {}".format(THREADS_ENV, cap))
    return cap


def resolve_workers(requested=None):
    if requested is not None and requested < 1:
        raise ConfigError("worker count must be at least 1, got {}".format(requested))
    count = requested or psutil.cpu_count(logical=True) or 1
    cap = thread_cap()
    if cap is not None and count > cap:
        logger.debug("capping {} workers at {}={}".format(count, THREADS_ENV, cap))
        count = cap
    return count


def slow_tests_enabled():
    return os.environ.get(SLOW_ENV, "").lower() in ("1", "true", "yes")


def read_config_file(path):
    """Flat `key = value` lines; keys may use dashes or underscores."""
    if not os.path.exists(path):
        raise ConfigError("config file {} does not exist".format(path))
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigError("config key {!r} has no value".format(key))
        values[key.strip().replace("-", "_")] = value.strip()
    logger.debug("read {} settings from {}".format(len(values), path))
    return values


@dataclass
class RunConfig:
    command: str
    panel: Optional[str] = None
    out: Optional[str] = None
    svg: Optional[str] = None
    z: float = 2.0
    norm: str = "linf"
    style: str = "norm_based"
    z_grid: Tuple[float, ...] = (1.0, 1.5, 2.0)
    strategy: Optional[str] = None
    adjuster: str = "none"
    match: Tuple[str, ...] = ()
    pdmp: Tuple[str, ...] = ("pdmp_2014", "pdmp_2013")
    rural: str = "rural"
    n: Tuple[int, ...] = (50, 25, 15)
    reps: int = 1000
    seed: int = 42
    arm_levels: str = "versions"
    workers: Optional[int] = None
    unit: Optional[str] = None
    verbose: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError("unknown command {!r}".format(self.command))
        if self.z < 0 or any(z < 0 for z in self.z_grid):
            raise ConfigError("Z must be nonnegative")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if any(n < 2 for n in self.n):
            raise ConfigError("sample sizes must be at least 2")
        if self.command in ("simulate", "illustrate") and not self.out:
            raise ConfigError("{} needs --out".format(self.command))
        self.z_grid = tuple(float(z) for z in self.z_grid)
        self.match = tuple(self.match)
        self.pdmp = tuple(self.pdmp)
        self.n = tuple(int(n) for n in self.n)

    @classmethod
    def from_args(cls, **args):
        known = {f.name for f in fields(cls)}
        settings = {k: v for k, v in args.items() if k in known and v is not None}
        settings["extra"] = {k: v for k, v in args.items() if k not in known}
        return cls(**settings)
