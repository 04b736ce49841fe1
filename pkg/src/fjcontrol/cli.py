"""Command-line interface.

Subcommands: simulate, sweep, gen-network, gen-corpus, validate.
Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import content as content_mod
from .harness import (
    ConfigError,
    NETWORK_A_DEFAULTS,
    ScenarioConfig,
    load_config,
    run_scenario,
    run_sweep,
    validate_scenario,
    write_run_outputs,
    write_sweep_outputs,
)
from .network import (
    GENERATOR_NAME,
    GENERATOR_VERSION,
    NETWORK_B_SEED,
    generate_network_a,
    network_b,
    save_network,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fjcontrol",
        description="Closed-loop sentiment dynamics simulator with "
                    "engagement-aware recommender control.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario from a config file")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--rho", type=float, default=None, help="override cost.rho")
    p_sim.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_sim.add_argument("--no-figures", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run one scenario per rho on a grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--rho-min", type=float, required=True)
    p_sweep.add_argument("--rho-max", type=float, required=True)
    p_sweep.add_argument("--rho-step", type=float, required=True)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_sweep.add_argument("--no-figures", action="store_true")

    p_net = sub.add_parser("gen-network", help="generate and save a network file")
    p_net.add_argument("--type", choices=("a", "b"), required=True)
    p_net.add_argument("--out", required=True)
    p_net.add_argument("--seed", type=int, default=0)
    p_net.add_argument("--n", type=int, default=NETWORK_A_DEFAULTS["n"])
    p_net.add_argument("--kappa-u", type=float, default=NETWORK_A_DEFAULTS["kappa_u"])
    p_net.add_argument("--kappa-r", type=float, default=NETWORK_A_DEFAULTS["kappa_r"])
    p_net.add_argument("--lambda-low", type=float, default=NETWORK_A_DEFAULTS["lambda_low"])
    p_net.add_argument("--lambda-high", type=float, default=NETWORK_A_DEFAULTS["lambda_high"])
    p_net.add_argument("--beta-alpha", type=float, default=NETWORK_A_DEFAULTS["beta_alpha"])
    p_net.add_argument("--beta-beta", type=float, default=NETWORK_A_DEFAULTS["beta_beta"])

    p_corp = sub.add_parser("gen-corpus", help="synthesize and save a corpus CSV")
    p_corp.add_argument("--out", required=True)
    p_corp.add_argument("--size", type=int, default=4000)
    p_corp.add_argument("--false-mean", type=float, default=0.537)
    p_corp.add_argument("--true-mean", type=float, default=0.379)
    p_corp.add_argument("--false-fraction", type=float, default=0.5)
    p_corp.add_argument("--concentration", type=float, default=10.0)
    p_corp.add_argument("--seed", type=int, default=0)

    p_val = sub.add_parser("validate", help="pre-flight checks for a config file")
    p_val.add_argument("--config", required=True)

    return parser


def _load_with_overrides(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "rho", None) is not None:
        cfg = dataclasses.replace(
            cfg, cost=dataclasses.replace(cfg.cost, rho=args.rho)
        )
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load_with_overrides(args)
    result = run_scenario(cfg)
    run_id = cfg.run_id or cfg.default_run_id()
    run_dir = Path(cfg.output_dir) / run_id
    write_run_outputs(cfg, result, run_dir, figures=not args.no_figures)
    for msg in result.diagnostics["warnings"]:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"wrote {run_dir}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_with_overrides(args)
    report = run_sweep(cfg, args.rho_min, args.rho_max, args.rho_step, jobs=args.jobs)
    out_dir = Path(cfg.output_dir) / f"sweep-{cfg.controller}-{cfg.mode}-seed{cfg.seed}"
    write_sweep_outputs(cfg, report, out_dir, figures=not args.no_figures)
    failures = [e for e in report.entries if e.error is not None]
    for e in failures:
        print(f"warning: rho={e.rho:g} failed: {e.error}", file=sys.stderr)
    print(f"wrote {out_dir} ({len(report.entries)} runs, {len(failures)} failed)")
    return EXIT_OK


def _cmd_gen_network(args) -> int:
    if args.type == "b":
        net = network_b()
        metadata = {
            "generator": f"{GENERATOR_NAME}-v{GENERATOR_VERSION}",
            "type": "b",
            "seed": NETWORK_B_SEED,
            "parameters": {"n": 6, "radical_user": 4},
        }
    else:
        params = {
            "n": args.n,
            "kappa_u": args.kappa_u,
            "kappa_r": args.kappa_r,
            "lambda_low": args.lambda_low,
            "lambda_high": args.lambda_high,
            "beta_alpha": args.beta_alpha,
            "beta_beta": args.beta_beta,
        }
        net = generate_network_a(seed=args.seed, **params)
        metadata = {
            "generator": f"{GENERATOR_NAME}-v{GENERATOR_VERSION}",
            "type": "a",
            "seed": args.seed,
            "parameters": params,
        }
    save_network(net, args.out, metadata=metadata)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_gen_corpus(args) -> int:
    corpus = content_mod.synthesize_corpus(
        n_items=args.size,
        false_fraction=args.false_fraction,
        false_mean=args.false_mean,
        true_mean=args.true_mean,
        concentration=args.concentration,
        seed=args.seed,
    )
    content_mod.write_corpus(corpus, args.out)
    print(f"wrote {args.out} ({len(corpus)} items)")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    report = validate_scenario(cfg)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["ok"] else EXIT_VALIDATION


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "gen-network": _cmd_gen_network,
    "gen-corpus": _cmd_gen_corpus,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # solver failures, numerical errors
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
