"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 failed
axiom check.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import axioms
from .config import load_config, report_json, run_scenario, validate, write_outputs
from .exceptions import ConfigError
from .partition import (
    EntropyModel,
    equilibrium_amounts,
    free_energy,
    good_values,
    legendre_entropy,
    log_partition,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors, not runtime errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _model_args(p):
    p.add_argument("--family", choices=["cobb_douglas", "substitutes", "complements"], default="cobb_douglas")
    p.add_argument("--agents", type=int, required=True, help="number of agents")
    p.add_argument("--exponents", type=_floats, help="Cobb-Douglas exponents shared by all agents")
    p.add_argument("--alpha", type=float, help="common exponent for substitutes/complements")


def _model(args) -> EntropyModel:
    if args.agents < 1:
        raise ConfigError("need at least one agent", "--agents")
    if args.family == "cobb_douglas":
        if not args.exponents:
            raise ConfigError("Cobb-Douglas needs --exponents", "--exponents")
        return EntropyModel.cobb_douglas([args.exponents] * args.agents)
    if args.alpha is None:
        raise ConfigError(f"{args.family} needs --alpha", "--alpha")
    build = EntropyModel.complements if args.family == "complements" else EntropyModel.substitutes
    return build(args.alpha, args.agents)


def _macro(model, values, flag):
    if len(values) != len(model.keys):
        raise ConfigError(f"expected {len(model.keys)} totals", flag)
    return model.macro(*values)


def _emit(doc, out=None):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config).with_overrides(
        seed=args.seed, replicas=args.replicas, out=args.out, fmt=args.format)
    report, rows = run_scenario(cfg)
    validate(report, "report")
    out = cfg.output
    if out["dir"]:
        for path in write_outputs(report, rows, out["dir"], out["format"]):
            print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(report_json(report))
    for rep in report["replicas"]:
        if rep["error"]:
            e = rep["error"]
            print(f"replica {rep['replica']} failed at step {e['step']}: {e['type']}: {e['message']}",
                  file=sys.stderr)
    return EXIT_OK if report["ok"] else EXIT_RUNTIME


def cmd_entropy(args) -> int:
    model = _model(args)
    macro = _macro(model, args.totals, "--totals")
    beta, nu, mu = good_values(model, macro)
    _emit({
        "log_z": log_partition(model, macro),
        "beta": beta,
        "nu": nu.tolist(),
        "price": mu.tolist(),
        "order": model.order,
        "model": model.describe(),
    }, args.out)
    return EXIT_OK


def cmd_legendre(args) -> int:
    model = _model(args)
    macro = _macro(model, args.totals, "--totals")
    res = legendre_entropy(model, macro)
    grad = equilibrium_amounts(model, res.point)
    _emit({
        "entropy": res.value,
        "free_energy": free_energy(model, res.point),
        "free_energy_gradient": model.vector(grad).tolist(),
        "beta": res.point.beta,
        "nu": list(res.point.nu),
        "iterations": res.iterations,
        "order": "extensive",
        "model": model.describe(),
    }, args.out)
    return EXIT_OK


def cmd_plan(args) -> int:
    model = _model(args)
    x = _macro(model, args.start, "--from")
    y = _macro(model, args.target, "--to")
    plan = axioms.plan_transition((model, x), (model, y))
    _emit(plan.to_dict(), args.out)
    return EXIT_OK


def cmd_axioms(args) -> int:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON: {exc}", "/") from None
        if not isinstance(cfg, dict):
            raise ConfigError("suite configuration must be an object", "/")
        unknown = sorted(set(cfg) - set(axioms.DEFAULT_SUITE))
        if unknown:
            raise ConfigError(f"unknown suite options {unknown}", f"/{unknown[0]}")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.inject_wrong_sign:
        cfg["inject_wrong_sign"] = True
    report = axioms.run_axiom_suite(cfg)
    validate(report, "axioms-report")
    print(axioms.summary_table(report))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "axioms.json"), "w") as fh:
            fh.write(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK if report["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="exchange-entropy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("simulate", "run"):
        p = sub.add_parser(name, help="run a scenario configuration")
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory (default: report to stdout)")
        p.add_argument("--replicas", type=int, help="override the number of replicas")
        p.add_argument("--format", choices=["json", "csv", "both"], help="output format")
        p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("entropy", help="log Z, coolness, good values and prices at a macro-state")
    _model_args(p)
    p.add_argument("--totals", type=_floats, required=True, help="money,good,... totals")
    p.add_argument("--out", help="also write the JSON here")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("legendre", help="free energy and Legendre-recovered entropy")
    _model_args(p)
    p.add_argument("--totals", type=_floats, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_legendre)

    p = sub.add_parser("plan", help="trader plan between two macro-states")
    _model_args(p)
    p.add_argument("--from", dest="start", type=_floats, required=True)
    p.add_argument("--to", dest="target", type=_floats, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("axioms", help="run the axiom suite")
    p.add_argument("--config", help="JSON object overriding suite defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for axioms.json")
    p.add_argument("--inject-wrong-sign", action="store_true", help="add the wrong-sign control step")
    p.set_defaults(func=cmd_axioms)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
