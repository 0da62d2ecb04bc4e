"""
    errors.py

    Exceptions raised by policybound. Library code raises these; the command
    line maps them onto exit codes.
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


# Base for every error this package raises on purpose.
class PolicyBoundError(Exception):
    def __init__(self, msg):
        super().__init__(msg)
        self.msg = msg

    def __str__(self):
        return str(self.msg)

    def __repr__(self):
        return type(self).__name__ + "(" + repr(self.msg) + ")"


class SchemaError(PolicyBoundError):
    pass


class BalanceError(PolicyBoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join("({}, {})".format(u, t) for u, t in self.missing[:10])
        if len(self.missing) > 10:
            shown += ", ... ({} more)".format(len(self.missing) - 10)
        super().__init__("unbalanced panel, missing cells: " + shown)


class DuplicateError(PolicyBoundError):
    pass


class DomainError(PolicyBoundError):
    pass


class PoolError(PolicyBoundError):
    pass


class EmptyPoolError(PoolError):
    pass


class SingularDesignError(PolicyBoundError):
    pass


class InsufficientPrePeriodError(PolicyBoundError):
    pass


class RuleError(PolicyBoundError):
    pass


class StrategyError(PolicyBoundError):
    pass


class DegenerateSubsetError(PolicyBoundError):
    pass


class SimulationAbortedError(PolicyBoundError):
    pass


class ConfigError(PolicyBoundError):
    pass
