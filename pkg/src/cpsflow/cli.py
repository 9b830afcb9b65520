"""``cpsflow`` command line: analyze, simulate, compare, fixtures list.

Exit codes for ``analyze``: 0 when every attacker leaves integrity intact,
2 when some integrity violation was found, 3 when a state budget ran out
without finding one.  Configuration errors exit with 1.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from . import config as cfg
from . import lti
from .attacker import AttackerSpec
from .errors import ConfigError, CpsError
from .fixtures import FIXTURE_PARAMS, FIXTURES, TwoTankConfig, load_fixture, with_controller
from .fixtures import build_two_tank
from .reach import Budget
from .report import EXIT_OK, analyze, render, render_compare

EXIT_CONFIG = 1


def _load_config(args) -> cfg.AnalysisConfig:
    conf = cfg.load_analysis(args.config) if args.config else cfg.AnalysisConfig()
    if args.model:
        if os.path.isfile(args.model):
            model = cfg.load_analysis(args.model).model
            if model is None:
                raise ConfigError(f"{args.model}: missing [model] table")
        elif args.model in FIXTURES:
            model = cfg.ModelRef(fixture=args.model)
        else:
            raise ConfigError(f"--model: {args.model!r} is neither a file nor a fixture "
                              f"(known: {', '.join(FIXTURES)})")
        conf = replace(conf, model=model)
    if conf.model is None:
        raise ConfigError("no model given: pass --model or a config with a [model] table")
    if args.k is not None:
        conf = replace(conf, k=cfg.parse_k(args.k, "--k"))
    if args.budget is not None:
        conf = replace(conf, budget=Budget(args.budget, min(args.budget, conf.budget.max_layer)))
    if args.format is not None:
        conf = replace(conf, format=args.format)
    if args.attacker:
        conf = replace(conf, selected=tuple(args.attacker))
    return conf


def _resolve_attackers(conf: cfg.AnalysisConfig, scenario) -> list:
    names = conf.selected
    if names is None:
        names = tuple(conf.attackers) or tuple(scenario.attackers)
    if not names:
        names = ("baseline",)
    out = []
    for name in names:
        if name == "baseline":
            out.append(AttackerSpec.baseline())
        elif name in conf.attackers:
            out.append(conf.attackers[name].build(scenario))
        elif name in scenario.attackers:
            out.append(scenario.attackers[name])
        else:
            known = sorted(set(conf.attackers) | set(scenario.attackers)) + ["baseline"]
            raise ConfigError(f"attacker {name!r} is not declared; known: {', '.join(known)}")
    return out


def _predicates(conf: cfg.AnalysisConfig, scenario) -> tuple:
    if conf.predicates is None:
        return scenario.predicates
    by_name = {p.name: p for p in scenario.predicates}
    missing = [n for n in conf.predicates if n not in by_name]
    if missing:
        raise ConfigError(f"analysis.predicates: unknown {', '.join(missing)}; "
                          f"known: {', '.join(by_name)}")
    return tuple(by_name[n] for n in conf.predicates)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_analysis(conf: cfg.AnalysisConfig, scenario):
    return analyze(scenario, _resolve_attackers(conf, scenario), conf.k, conf.budget,
                   conf.k_max, _predicates(conf, scenario))


def cmd_analyze(args) -> int:
    conf = _load_config(args)
    scenario = conf.model.load()
    report = _run_analysis(conf, scenario)
    _emit(render(report, conf.format), args.out)
    return report.exit_code


def _compare_scenarios(conf: cfg.AnalysisConfig) -> tuple:
    ref = conf.model
    if conf.controllers is None:
        return ref.load(), ref.load()
    if ref.fixture not in ("two-tank-v1", "two-tank-fair"):
        raise ConfigError("compare.controllers needs a two-tank model")
    try:
        base = TwoTankConfig(**ref.params)
        return tuple(build_two_tank(with_controller(base, v)) for v in conf.controllers)
    except CpsError as exc:
        raise ConfigError(f"compare.controllers: {exc}") from exc


def cmd_compare(args) -> int:
    conf = _load_config(args)
    if args.controllers:
        conf = replace(conf, controllers=tuple(args.controllers))
    before_s, after_s = _compare_scenarios(conf)
    before = _run_analysis(conf, before_s)
    after = _run_analysis(conf, after_s)
    _emit(render_compare(before, after, conf.format), args.out)
    return EXIT_OK


def _detector(conf: cfg.LtiConfig, system: lti.LtiSystem):
    """Thresholds from the configured rate, or the fixed ones if given.

    Returns ``(thresholds or DetectorConfig, sigmas, rates)``; the rate of
    a fixed threshold is the one it implies (0 for a noise-free sensor).
    """
    sigmas = np.sqrt(np.diag(lti.residual_covariance(system, lti.solve_lyapunov(system, conf.L))))
    if conf.threshold is not None:
        alpha = np.broadcast_to(conf.threshold, sigmas.shape).copy()
        rates = [lti.two_sided_tail(a, s) if s > 0 else 0.0 for a, s in zip(alpha, sigmas)]
        return alpha, sigmas, np.array(rates)
    if np.any(sigmas <= 0):
        raise ConfigError("lti: a sensor has zero residual variance, so no threshold gives the "
                          "requested rate; set lti.threshold instead")
    det = lti.DetectorConfig.design(sigmas, conf.rate)
    return det, sigmas, det.rates


def cmd_simulate(args) -> int:
    conf = cfg.load_lti(args.config)
    try:
        system = lti.LtiSystem(conf.A, conf.B, conf.C, conf.R1, conf.R2)
        observer = lti.Observer.for_system(system, conf.L, conf.x_hat0)
        detector, sigmas, rates = _detector(conf, system)
    except (lti.DimensionMismatch, lti.UnstableObserver, ValueError) as exc:
        raise ConfigError(f"lti: {exc}") from exc
    steps = args.steps if args.steps is not None else conf.steps
    seed = args.seed if args.seed is not None else conf.seed
    att = conf.attack
    attack = lti.AttackSignal.bias(att.sensor, att.actuator, att.start, att.stop)
    traj = lti.simulate(system, observer, steps, seed, attack, conf.K, conf.x0)
    alpha = lti._thresholds(detector)
    empirical = lti.empirical_alarm_rate(traj.r, detector)
    alarm_times = lti.bad_data_detect(traj.r, detector)
    summary = [f"steps {steps}  seed {seed}  generator {lti.GENERATOR}"]
    for i in range(system.m):
        first = alarm_times[i][0] if alarm_times[i].size else "-"
        summary.append(f"sensor {i + 1}: sigma {sigmas[i]:.6g}  threshold {alpha[i]:.6g}  "
                       f"A* {rates[i]:.6g}  alarms {alarm_times[i].size}  first alarm {first}  "
                       f"empirical rate {empirical[i]:.6g}")
    text = "\n".join(summary) + "\n"
    if args.out:
        lti.write_trajectory_csv(args.out, system, traj, detector)
        sys.stdout.write(text)
    else:
        lti.write_trajectory_csv(sys.stdout, system, traj, detector)
        sys.stderr.write(text)
    return EXIT_OK


def cmd_fixtures(args) -> int:
    lines = []
    for name in FIXTURES:
        scenario = load_fixture(name)
        lines.append(f"{name}  params: {', '.join(FIXTURE_PARAMS[name])}  "
                     f"attackers: {', '.join(scenario.attackers)}  "
                     f"predicates: {', '.join(p.name for p in scenario.predicates)}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpsflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def analysis_flags(p):
        p.add_argument("config", nargs="?", help="TOML configuration file")
        p.add_argument("--model", help="fixture name or TOML file with a [model] table")
        p.add_argument("--attacker", action="append",
                       help="attacker to analyse (repeatable; 'baseline' is the empty attacker)")
        p.add_argument("--k", help="number of cycles or 'auto' for loop closure")
        p.add_argument("--budget", type=_positive, help="maximum number of states kept")
        p.add_argument("--format", choices=cfg.FORMATS)
        p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("analyze", help="quantify attacker controllability and integrity")
    analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="diff two controller versions under the same attackers")
    analysis_flags(p)
    p.add_argument("--controllers", nargs=2, metavar=("BEFORE", "AFTER"),
                   help="two-tank controller versions to compare")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="simulate an LTI plant with observer and detector")
    p.add_argument("config", help="TOML file with an [lti] table")
    p.add_argument("--steps", type=_positive)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV trajectory path (default stdout; summary then goes to stderr)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fixtures", help="list built-in models")
    p.add_argument("action", choices=["list"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"cpsflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CpsError, np.linalg.LinAlgError) as exc:
        print(f"cpsflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
