"""Command-line front end.

Subcommands:
  simulate-path      one composed path, CSV of t,x1[,x2] at the knots
  weak-order         Monte Carlo order study from a TOML plan
  subordinator-check Laplace-transform diagnostic of the subordinator
  validate-model     Lipschitz/Jacobian spot checks of a bundled model

Exit codes: 0 success, 2 noise-floor-only warnings, 1 errors.  Every
report-writing run also writes a JSON manifest next to its output;
passing the manifest back through --config reproduces the report byte
for byte.  Reports get a companion PNG figure unless --no-plot is set.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__, figures, report as report_mod
from .compose import compose
from .config import (
    ParseError,
    RunManifest,
    ValidationError,
    build_plan,
    load_config,
    plan_config_dict,
    _read_document,
)
from .experiment import run_order_study, simulate_time_changed_path
from .models import kubo_model, ou_model, validate_model
from .stepper import NewtonDivergence
from .subordinator import laplace_diagnostic

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOISE_FLOOR = 2


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("TCLSDE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _default_model(name: str):
    if name == "ou":
        return ou_model(2.0, 1.0, 0.6, 0.5)
    if name == "kubo":
        return kubo_model(2.0, 0.5, 0.5)
    raise ValueError(f"model must be ou or kubo, got {name!r}")


def _figure_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".png"


def _manifest_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".manifest.json"


def _write_manifest(out, config_doc, seed, started, diagnostics):
    manifest = RunManifest(
        config=config_doc,
        version=__version__,
        master_seed=seed,
        duration_seconds=time.time() - started,
        diagnostics=diagnostics,
    )
    with open(_manifest_path(out), "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())


def _cmd_simulate_path(args) -> int:
    started = time.time()
    model = _default_model(args.model)
    run, inverse = simulate_time_changed_path(
        model,
        theta=args.theta,
        delta=args.delta,
        T=args.T,
        master_seed=args.seed,
        path_index=args.path_index,
        alpha=args.alpha,
    )
    # Emit the composed path at its knots plus the horizon endpoint.
    knots = inverse.knots[: inverse.stop_index_N + 1]
    times = np.append(knots, args.T)
    path = compose(run, inverse, times)
    out = args.out or "path.csv"
    header = "t," + ",".join(f"x{k + 1}" for k in range(model.dim_d))
    lines = [header]
    for t, state in zip(path.physical_times, path.states):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in state]))
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    if not args.no_plot:
        figures.path_figure(
            path.physical_times, path.states, _figure_path(out),
            title=f"{args.model} path, theta={args.theta:g}, delta={args.delta:g}",
        )
    _write_manifest(
        out,
        {
            "command": "simulate-path",
            "model": args.model,
            "theta": args.theta,
            "delta": args.delta,
            "T": args.T,
            "seed": args.seed,
            "path_index": args.path_index,
            "alpha": args.alpha,
        },
        args.seed,
        started,
        {"stop_index_N": inverse.stop_index_N,
         "max_newton_residual": run.max_residual},
    )
    print(f"wrote {out} ({inverse.stop_index_N} operational steps)")
    return EXIT_OK


def _cmd_weak_order(args) -> int:
    started = time.time()
    doc = _read_document(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    plan = build_plan(doc)
    threads = _threads(args)
    result = run_order_study(plan, threads=threads)
    out = args.out or "report.csv"
    fmt = args.format or ("json" if out.endswith(".json") else "csv")
    report_mod.emit_report(result, fmt, out)
    if not args.no_plot:
        figures.weak_order_figure(
            result, _figure_path(out),
            title=f"{plan.model.label}, theta={plan.theta:g}",
        )
    _write_manifest(out, plan_config_dict(plan, doc), plan.seed, started,
                    result.diagnostics)
    fitted = result.fitted_order
    print(f"wrote {out}; fitted_order={_fmt(fitted)}"
          + (" [noise floor]" if result.noise_floor else ""))
    return EXIT_NOISE_FLOOR if result.noise_floor else EXIT_OK


def _cmd_subordinator_check(args) -> int:
    started = time.time()
    lambdas = [float(tok) for tok in args.lam.split(",")]
    rows = laplace_diagnostic(
        alpha=args.alpha,
        truncation_K=args.K,
        lambdas=lambdas,
        paths=args.paths,
        master_seed=args.seed,
    )
    lines = ["lambda,estimate,target,stderr"]
    for lam, est, target, se in rows:
        lines.append(",".join(_fmt(v) for v in (lam, est, target, se)))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        if not args.no_plot:
            figures.subordinator_figure(rows, _figure_path(args.out))
        _write_manifest(
            args.out,
            {"command": "subordinator-check", "alpha": args.alpha, "K": args.K,
             "lambdas": lambdas, "paths": args.paths, "seed": args.seed},
            args.seed, started, {},
        )
    sys.stdout.write(text)
    worst = max(abs(est - target) / se for _, est, target, se in rows)
    return EXIT_OK if worst <= 5.0 else EXIT_ERROR


def _cmd_validate_model(args) -> int:
    model = _default_model(args.model)
    result = validate_model(model, probes=args.probes)
    print(f"model={args.model} probes={result.probes}")
    print(f"max_lipschitz_ratio={result.max_lipschitz_ratio:.9g} "
          f"(declared L={result.declared_L:g})")
    print(f"max_jacobian_rel_error={result.max_jacobian_rel_error:.3g}")
    if result.violations:
        for v in result.violations:
            print(f"VIOLATION: {v}")
        return EXIT_ERROR
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tclsde",
        description="Stochastic theta method for SDEs driven by "
                    "time-changed Levy noise",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_seed_default=None):
        p.add_argument("--seed", type=int, default=needs_seed_default,
                       help="master seed (64-bit)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: TCLSDE_THREADS or 1)")
        p.add_argument("--out", type=str, default=None, help="output file")
        p.add_argument("--format", choices=["csv", "json"], default=None)
        p.add_argument("--no-plot", action="store_true",
                       help="skip the companion PNG figure")

    p = sub.add_parser("simulate-path", help="simulate one composed path")
    p.add_argument("--model", choices=["ou", "kubo"], required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--path-index", type=int, default=0)
    common(p, needs_seed_default=0)
    p.set_defaults(func=_cmd_simulate_path)

    p = sub.add_parser("weak-order", help="run a weak-order study from a plan")
    p.add_argument("--config", required=True,
                   help="TOML plan (or a manifest JSON from a previous run)")
    common(p)
    p.set_defaults(func=_cmd_weak_order)

    p = sub.add_parser("subordinator-check", help="Laplace-transform diagnostic")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=str, default="1.0",
                   help="comma-separated lambda values")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--K", type=int, default=1000)
    common(p, needs_seed_default=0)
    p.set_defaults(func=_cmd_subordinator_check)

    p = sub.add_parser("validate-model", help="check model contract declarations")
    p.add_argument("--model", choices=["ou", "kubo"], required=True)
    p.add_argument("--probes", type=int, default=100)
    common(p)
    p.set_defaults(func=_cmd_validate_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except NewtonDivergence as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
