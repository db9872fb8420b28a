"""Command-line front end.

Every subcommand loads a model, runs one task and writes its report; ``run``
executes a scenario file.  Exit codes: 0 on success, 2 on invalid input,
3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from . import io as pio
from .errors import PbeLabError
from .scenario import (
    EXIT_OK,
    TASK_FUNCS,
    bundled_scenarios,
    exit_code,
    model_from_parts,
    run_scenario,
    summary_text,
)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mdp", required=True, help="MDP document (JSON)")
    p.add_argument("--features", required=True, help="feature table (JSON or CSV), one row per feature")
    p.add_argument("--psi", help="projection basis table; defaults to the normalized features")
    p.add_argument("--normalize-psi", action="store_true", help="rescale basis rows to unit mass")
    p.add_argument("--gamma", type=float, help="override the discount")
    p.add_argument("--lambda", dest="lam", type=float, help="override the bootstrap parameter")


def _output_args(p: argparse.ArgumentParser, fmt_default: str = "structured") -> None:
    p.add_argument("--out", help="output directory (default: print to stdout)")
    p.add_argument("--format", choices=("csv", "structured"), default=fmt_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8, help="convergence tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbe-lab",
        description="Projected Bellman equation diagnostics: audits, ambiguity witnesses, simulations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="assemble and solve the characteristic system")
    _model_args(p)
    _output_args(p)

    p = sub.add_parser("audit-features", help="flat-extrema audit of the feature span")
    _model_args(p)
    _output_args(p, "csv")
    p.add_argument("--n-random", type=int, default=512)
    p.add_argument("--alpha", type=float, default=1.0, help="level fraction for the reported masses")

    p = sub.add_parser("witness", help="search for an ambiguity witness")
    _model_args(p)
    _output_args(p)
    p.add_argument("--n-random", type=int, default=256)
    p.add_argument("--xi", type=float, default=1.0)

    p = sub.add_parser("simulate", help="run a natural algorithm and record its trace")
    _model_args(p)
    _output_args(p, "csv")
    p.add_argument("--algo", choices=("td", "rg", "rvi"), default="td")
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--step", type=float, help="step size (default: algorithm specific)")
    p.add_argument("--sampled", action="store_true", help="sampled TD(lambda) on a trajectory")
    p.add_argument("--rep-states", type=_int_list, help="representative states for rvi")

    p = sub.add_parser("counterexample", help="preset aliasing pair with its verification trace")
    p.add_argument("preset", choices=("sutton-barto",))
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    _output_args(p)

    p = sub.add_parser("run", help="execute a scenario file")
    p.add_argument("--scenario", required=True, help=f"path, or one of: {', '.join(bundled_scenarios())}")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "structured"))
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    return parser


def _load_model(args):
    mdp = pio.load_mdp(args.mdp)
    changes = {}
    if args.gamma is not None:
        changes["gamma"] = args.gamma
    if args.lam is not None:
        changes["lam"] = args.lam
    if changes:
        mdp = mdp.replace(**changes)
    phi = pio.load_table(args.features)
    psi = pio.load_table(args.psi) if args.psi else None
    return model_from_parts(mdp, phi, psi, args.normalize_psi, Path(args.mdp).name)


def _emit(result: dict, args, name: str) -> None:
    if args.out:
        print(pio.emit_report(result, args.format, Path(args.out) / name))
        return
    if args.format == "structured":
        text = pio.dumps(result)
    elif result.get("kind") == "audit":
        text = pio.extrema_csv(result["reports"])
    elif result.get("kind") == "trace":
        text = pio.trace_csv(result["trace"])
    else:
        text = pio.document_csv(result)
    sys.stdout.write(text)


def _run_task(args) -> int:
    name = args.command
    if name == "counterexample":
        result = TASK_FUNCS[name](None, gamma=args.gamma, lam=args.lam)
        _emit(result, args, "counterexample")
        return EXIT_OK
    model = _load_model(args)
    kwargs = {"seed": args.seed}
    if name == "audit-features":
        kwargs.update(n_random=args.n_random, alpha=args.alpha)
    elif name == "witness":
        kwargs.update(n_random=args.n_random, xi=args.xi)
    elif name == "simulate":
        kwargs.update(
            algo=args.algo, steps=args.steps, step=args.step, sampled=args.sampled,
            rep_states=args.rep_states, tol=args.tol,
        )
    result = TASK_FUNCS[name](model, **kwargs)
    _emit(result, args, name)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            code, summary = run_scenario(args.scenario, args.out, args.format, args.seed, args.tol)
            sys.stdout.write(summary_text(summary))
            return code
        return _run_task(args)
    except PbeLabError as exc:
        print(f"pbe-lab: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
