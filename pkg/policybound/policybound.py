"""
    policybound.py

    Command-line entry point. Exit status is 0 on success, 1 on a usage
    error and 2 when the data or settings are rejected.
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

import argparse
import logging
import math
import os
import sys
import threading

import pandas as pd

from . import emit
from .application_panel import application_panel
from .cate_baseline import average_effects_table
from .config import RunConfig, read_config_file
from .did_estimators import Adjuster
from .errors import ConfigError, EmptyPoolError, InsufficientPrePeriodError, PolicyBoundError
from .estimands_analytic import DGPParams
from .panel_core import read_panel
from .sensitivity_bounds import (
    CoarseningStrategy,
    Norm,
    TauRule,
    bound_interval,
    bounds_over_z,
    coarsened_untreated_bound,
    estimate_unit,
    residual_norm,
    robustness_grid,
    tau_from_rule,
    tipping_z,
)
from .sim_engine import ARM_LEVELS, make_illustration, report_table, run_replications

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, "{}: error: {}\n".format(self.prog, message))


def _stem(path):
    return os.path.splitext(path)[0]


def _load(config):
    if config.panel:
        return read_panel(config.panel)
    logger.info("no --panel given, using the bundled application panel")
    return application_panel()


def _emit_frame(frame, out):
    if out:
        emit.write_csv(frame, out)
    else:
        sys.stdout.write(emit.csv_text(frame))


def _units(panel, config):
    return [config.unit] if config.unit else list(panel.units)


def simulate(config):
    reports = []
    for n in config.n:
        reports.append(
            run_replications(
                DGPParams(),
                n,
                config.reps,
                config.seed,
                Z=config.z,
                arm_levels=config.arm_levels,
                workers=config.workers,
            )
        )
    emit.write_csv(report_table(reports), config.out)
    emit.write_json({"reports": [r.as_dict() for r in reports]}, _stem(config.out) + ".json")


def illustrate(config):
    bundle = make_illustration(config.seed)
    stem = _stem(config.out)
    emit.write_csv(bundle.grid, stem + "_grid.csv")
    emit.write_csv(bundle.scatter, stem + "_scatter.csv")
    emit.write_json(bundle.metadata, stem + ".json")
    if config.svg:
        emit.write_svg(emit.illustration_svg(bundle), config.svg)


def _unit_bounds(panel, unit, rule, adjuster, config, strategy):
    if strategy is not None and panel.arm(unit) == 0:
        return [
            coarsened_untreated_bound(panel, unit, strategy, rule.with_z(z), adjuster, config.match)
            for z in (config.z,) + config.z_grid
        ]
    estimate, residuals = estimate_unit(panel, unit, adjuster, config.match)
    primary = bound_interval(estimate, tau_from_rule(residuals, rule), rule)
    return [primary] + bounds_over_z(estimate, residuals, rule, config.z_grid)


def bound(config):
    panel = _load(config)
    rule = TauRule(config.style, config.norm, config.z)
    adjuster = Adjuster.parse(config.adjuster)
    strategy = CoarseningStrategy.parse(config.strategy) if config.strategy else None
    primary, dots = [], []
    for unit in _units(panel, config):
        try:
            results = _unit_bounds(panel, unit, rule, adjuster, config, strategy)
        except (EmptyPoolError, InsufficientPrePeriodError) as e:
            logger.warning("unit {} not evaluable: {}".format(unit, e))
            continue
        primary.append(results[0])
        dots.append(results[1:])
    if not primary:
        raise EmptyPoolError("no unit could be bounded")
    _emit_frame(emit.bounds_frame(primary, dots), config.out)
    if config.svg:
        emit.write_svg(emit.bounds_svg(dots), config.svg)


def tipping(config):
    panel = _load(config)
    adjuster = Adjuster.parse(config.adjuster)
    norm = Norm.parse(config.norm)
    rows = []
    for unit in _units(panel, config):
        try:
            estimate, residuals = estimate_unit(panel, unit, adjuster, config.match)
            z_star = tipping_z(estimate, residuals, norm)
        except (EmptyPoolError, InsufficientPrePeriodError) as e:
            logger.warning("unit {} not evaluable: {}".format(unit, e))
            continue
        rows.append(
            {
                "unit": unit,
                "point": estimate.point,
                "norm": norm.value,
                "residual_norm": residual_norm(residuals.as_array(), norm),
                "tipping_z": "inf" if math.isinf(z_star) else z_star,
            }
        )
    if not rows:
        raise EmptyPoolError("no unit could be evaluated")
    _emit_frame(pd.DataFrame.from_records(rows), config.out)


def robustness(config):
    panel = _load(config)
    grid = robustness_grid(panel, config.z, config.pdmp, config.workers)
    _emit_frame(grid.counts, config.out)
    if config.svg:
        emit.write_svg(emit.counts_svg(grid.counts), config.svg)


def table(config):
    panel = _load(config)
    _emit_frame(average_effects_table(panel, config.rural, config.pdmp), config.out)


def _add_panel_options(parser):
    parser.add_argument("--panel", metavar="csv", help="long-format panel (default: bundled application panel)")
    parser.add_argument("--out", metavar="path", help="output CSV (default: standard output)")
    parser.add_argument("--adjuster", default="none", help="none | twfe | linear:cols | discrete:cols")
    parser.add_argument("--match", nargs="+", default=[], metavar="column", help="match comparators on these columns")
    parser.add_argument("--unit", help="only this unit")


def build_parser():
    parser = UsageParser(prog="policybound", description="Unit-level DiD bounds and their Monte Carlo evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    parser.add_argument("--config", metavar="file", help="key=value settings; flags win over the file")
    subparsers = parser.add_subparsers(help="sub-command help", parser_class=UsageParser)

    parser_sim = subparsers.add_parser("simulate", help="Monte Carlo comparison of bounds and CATE intervals")
    parser_sim.add_argument("--n", nargs="+", type=int, default=[50, 25, 15], help="units per dataset")
    parser_sim.add_argument("--reps", type=int, default=1000, help="accepted datasets per N")
    parser_sim.add_argument("--seed", type=int, default=42, help="replication r uses seed + r")
    parser_sim.add_argument("--z", type=float, default=2.0, help="sensitivity multiplier")
    parser_sim.add_argument("--out", required=True, metavar="csv", help="table CSV; JSON goes next to it")
    parser_sim.add_argument(
        "--arm-levels",
        choices=ARM_LEVELS,
        default="versions",
        dest="arm_levels",
        help="keep draws with three units per version, or per coarsened arm",
    )
    parser_sim.add_argument("--workers", type=int, help="worker threads")
    parser_sim.set_defaults(cmd=simulate, command="simulate")

    parser_ill = subparsers.add_parser("illustrate", help="analytic curves and an N=1000 effect scatter")
    parser_ill.add_argument("--seed", type=int, default=42)
    parser_ill.add_argument("--out", required=True, metavar="stem", help="writes <stem>_grid.csv, <stem>_scatter.csv")
    parser_ill.add_argument("--svg", metavar="file")
    parser_ill.set_defaults(cmd=illustrate, command="illustrate")

    parser_bound = subparsers.add_parser("bound", help="bounds on every unit's effect")
    _add_panel_options(parser_bound)
    parser_bound.add_argument("--z", type=float, default=2.0, help="sensitivity multiplier")
    parser_bound.add_argument("--norm", default="linf", help="l1_mean | l2 | linf")
    parser_bound.add_argument("--style", default="norm_based", help="norm_based | last_plus_maxdiff")
    parser_bound.add_argument("--z-grid", nargs="+", type=float, default=[1.0, 1.5, 2.0], dest="z_grid")
    parser_bound.add_argument("--strategy", help="for untreated units: conservative[:k] | assume_version:m | union")
    parser_bound.add_argument("--svg", metavar="file")
    parser_bound.set_defaults(cmd=bound, command="bound")

    parser_tip = subparsers.add_parser("tipping", help="smallest Z at which each bound reaches zero")
    _add_panel_options(parser_tip)
    parser_tip.add_argument("--norm", default="linf")
    parser_tip.set_defaults(cmd=tipping, command="tipping")

    parser_rob = subparsers.add_parser("robustness", help="sign counts over eight specifications")
    parser_rob.add_argument("--panel", metavar="csv")
    parser_rob.add_argument("--out", metavar="csv")
    parser_rob.add_argument("--z", type=float, default=2.0)
    parser_rob.add_argument("--pdmp", nargs="+", default=["pdmp_2014", "pdmp_2013"], metavar="column")
    parser_rob.add_argument("--workers", type=int)
    parser_rob.add_argument("--svg", metavar="file")
    parser_rob.set_defaults(cmd=robustness, command="robustness")

    parser_table = subparsers.add_parser("table", help="TWFE average effects by subset")
    parser_table.add_argument("--panel", metavar="csv")
    parser_table.add_argument("--out", metavar="csv")
    parser_table.add_argument("--rural", default="rural", metavar="column")
    parser_table.add_argument("--pdmp", nargs="+", default=["pdmp_2014", "pdmp_2013"], metavar="column")
    parser_table.set_defaults(cmd=table, command="table")

    parser.subparsers = subparsers
    return parser


def _coerce(action, raw):
    if action.nargs in ("+", "*"):
        items = raw.split()
        return [action.type(v) for v in items] if action.type else items
    if isinstance(action, argparse._StoreTrueAction):
        return raw.lower() in ("1", "true", "yes", "on")
    return action.type(raw) if action.type else raw


def apply_config_file(parser, path):
    """Installs file settings as parser defaults so that explicit flags still win."""
    settings = read_config_file(path)
    used = set()
    targets = [parser] + list(parser.subparsers.choices.values())
    for target in targets:
        defaults = {}
        for action in target._actions:
            if action.dest in settings and action.dest not in ("help", "config"):
                try:
                    defaults[action.dest] = _coerce(action, settings[action.dest])
                except ValueError:
                    raise ConfigError("bad value for {!r} in {}".format(action.dest, path))
                # A required flag satisfied by the file no longer has to be given.
                action.required = False
                used.add(action.dest)
        target.set_defaults(**defaults)
    unknown = sorted(set(settings) - used)
    if unknown:
        raise ConfigError("unknown settings in {}: {}".format(path, ", ".join(unknown)))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            apply_config_file(parser, known.config)
        arguments = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except PolicyBoundError as e:
        sys.stderr.write("policybound: {}\n".format(e))
        return EXIT_DATA

    if "cmd" not in arguments:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if arguments.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    outcome = {}

    def run():
        try:
            config = RunConfig.from_args(**vars(arguments))
            arguments.cmd(config)
            outcome["code"] = EXIT_OK
        except PolicyBoundError as e:
            outcome["code"] = EXIT_DATA
            sys.stderr.write("policybound: {}\n".format(e))
        except BaseException as e:
            outcome["error"] = e

    # Running the command in a thread keeps the main thread responsive to KeyboardInterrupt.
    t = threading.Thread(target=run, daemon=True)
    t.start()
    while t.is_alive():
        t.join(6000)
    if "error" in outcome:
        raise outcome["error"]
    return outcome["code"]


def cli():
    sys.exit(main())


if __name__ == "__main__":
    cli()
