"""
    estimands_analytic.py

    Closed-form unit, conditional and controlled effects under the linear
    two-version outcome model, the coarsened (version-mixture) analogues, and
    a quadrature oracle for the least-squares line through the coarsened
    CATE.
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
from collections import namedtuple
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
import pandas as pd
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr, ndtri

from .errors import DomainError

logger = logging.getLogger(__name__)

QUADRATURE_NODES = 64
PROBIT_OFFSET = math.sqrt(2.0) * float(ndtri(2.0 / 3.0))
VERSIONS = (1, 2)

Projection = namedtuple("Projection", ["intercept", "slope"])


class ErrorFamily(enum.Enum):
    CENTERED_EXPONENTIAL = "centered_exponential"
    UNIFORM = "uniform"
    NORMAL = "normal"
    ZERO = "zero"


@dataclass(frozen=True)
class ErrorLaw:
    """
    Mean-zero idiosyncratic error. `scale` is the rate for the centered
    exponential, the half-width for the uniform and the sd for the normal.
    """

    family: ErrorFamily = ErrorFamily.CENTERED_EXPONENTIAL
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", ErrorFamily(self.family))
        if self.family is not ErrorFamily.ZERO and not self.scale > 0:
            raise DomainError("error law scale must be positive, got {}".format(self.scale))

    @classmethod
    def centered_exponential(cls, rate):
        return cls(ErrorFamily.CENTERED_EXPONENTIAL, rate)

    @classmethod
    def uniform(cls, half_width):
        return cls(ErrorFamily.UNIFORM, half_width)

    @classmethod
    def normal(cls, sd):
        return cls(ErrorFamily.NORMAL, sd)

    @classmethod
    def zero(cls):
        return cls(ErrorFamily.ZERO, 0.0)

    @property
    def bound(self):
        """Largest possible |error|, infinite for unbounded families."""
        if self.family is ErrorFamily.UNIFORM:
            return self.scale
        if self.family is ErrorFamily.ZERO:
            return 0.0
        return math.inf

    def draw(self, rng, size):
        if self.family is ErrorFamily.CENTERED_EXPONENTIAL:
            mean = 1.0 / self.scale
            return rng.exponential(mean, size) - mean
        if self.family is ErrorFamily.UNIFORM:
            return rng.uniform(-self.scale, self.scale, size)
        if self.family is ErrorFamily.NORMAL:
            return rng.normal(0.0, self.scale, size)
        return np.zeros(size)


@dataclass(frozen=True)
class DGPParams:
    delta: Tuple[float, float] = (1.0, -1.5)
    alpha: Tuple[float, float, float] = (0.5, 1.0, -1.5)
    beta: Tuple[float, float, float] = (0.5, 1.0, -1.5)
    sigma2_x: float = 1.0
    sigma2_u: float = 1.0
    sigma_xu: float = 0.125
    probit_offset: float = PROBIT_OFFSET
    untreated_error: ErrorLaw = ErrorLaw.centered_exponential(1.0)
    version_errors: Tuple[ErrorLaw, ErrorLaw] = (
        ErrorLaw.centered_exponential(1.5),
        ErrorLaw.centered_exponential(1.5),
    )
    time_effect_sd: float = 1.0
    T: int = 10
    treat_period: int = 10

    def __post_init__(self):
        if not (self.sigma2_x > 0 and self.sigma2_u > 0):
            raise DomainError("covariate and confounder variances must be positive")
        if abs(self.sigma_xu) >= math.sqrt(self.sigma2_x * self.sigma2_u):
            raise DomainError("covariance of (X, U) is not positive definite")
        if self.T < 2 or self.treat_period != self.T:
            raise DomainError("treatment happens in the last of at least two periods")
        if len(self.delta) != 2 or len(self.alpha) != 3 or len(self.beta) != 3:
            raise DomainError("two treatment versions are supported")

    def replace(self, **changes):
        return replace(self, **changes)

    @property
    def covariance(self):
        return np.array([[self.sigma2_x, self.sigma_xu], [self.sigma_xu, self.sigma2_u]])

    def as_dict(self):
        return {
            "delta": list(self.delta),
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "sigma2_x": self.sigma2_x,
            "sigma2_u": self.sigma2_u,
            "sigma_xu": self.sigma_xu,
            "probit_offset": self.probit_offset,
            "untreated_error": [self.untreated_error.family.value, self.untreated_error.scale],
            "version_errors": [[e.family.value, e.scale] for e in self.version_errors],
            "time_effect_sd": self.time_effect_sd,
            "T": self.T,
        }


def _check_version(m):
    if m not in VERSIONS:
        raise DomainError("treatment version must be 1 or 2, got {!r}".format(m))


def version_cde(params, m, x):
    """
    >>> version_cde(DGPParams(), 1, 1.0)
    2.0
    """
    _check_version(m)
    return params.delta[m - 1] + params.beta[m] * x


def version_cate(params, m, x):
    _check_version(m)
    slope = params.beta[m] + params.alpha[m] * params.sigma_xu / params.sigma2_x
    return params.delta[m - 1] + slope * x


def version_weight(params, m, x):
    """Pr(M(1) = m | X = x)."""
    _check_version(m)
    return ndtr(x) if m == 2 else ndtr(-np.asarray(x, dtype=float))


def coarsened_mixture(params, x, kind="cate"):
    effect = {"cate": version_cate, "cde": version_cde}.get(kind)
    if effect is None:
        raise DomainError("kind must be 'cate' or 'cde', got {!r}".format(kind))
    return sum(effect(params, m, x) * version_weight(params, m, x) for m in VERSIONS)


def projection_oracle(params, kind="cate", nodes=QUADRATURE_NODES) -> Projection:
    # E over X ~ N(0, s2) of g(X) = sum_k w_k g(sqrt(2 s2) t_k) / sqrt(pi)
    t, w = hermgauss(nodes)
    x = math.sqrt(2.0 * params.sigma2_x) * t
    w = w / math.sqrt(math.pi)
    f = np.asarray(coarsened_mixture(params, x, kind), dtype=float)
    intercept = float(np.dot(w, f))
    slope = float(np.dot(w, x * f)) / params.sigma2_x
    return Projection(intercept, slope)


def unit_ite(params, x, u, eps_m, eps_extra=0.0, m=1):
    """
    Unit-level effect of version m. `eps_extra` is any further additive
    disturbance of the effect (zero in the simulation design).
    """
    _check_version(m)
    return params.delta[m - 1] + params.alpha[m] * u + params.beta[m] * x + eps_m + eps_extra


def curve_table(params, xs):
    xs = np.asarray(xs, dtype=float)
    cate_line = projection_oracle(params, "cate")
    cde_line = projection_oracle(params, "cde")
    frame = pd.DataFrame({"x": xs})
    for m in VERSIONS:
        frame["cde_{}".format(m)] = version_cde(params, m, xs)
        frame["cate_{}".format(m)] = version_cate(params, m, xs)
        frame["weight_{}".format(m)] = version_weight(params, m, xs)
    frame["mixture_cate"] = coarsened_mixture(params, xs, "cate")
    frame["mixture_cde"] = coarsened_mixture(params, xs, "cde")
    frame["projection_cate"] = cate_line.intercept + cate_line.slope * xs
    frame["projection_cde"] = cde_line.intercept + cde_line.slope * xs
    return frame
