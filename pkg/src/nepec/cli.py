"""Command-line entry point: ``nepec <experiment> [options]``.

Exit codes: 0 success, 1 configuration error, 2 infeasible representation,
3 numerical consistency failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from nepec.circuits import rb_circuit
from nepec.errors import ConfigError, InfeasibleRepresentation, NumericalConsistencyError, ValidationError
from nepec.experiments import EXPERIMENTS, ExperimentConfig, run, run_decompose

log = logging.getLogger("nepec")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


def _env_seed() -> int | None:
    raw = os.environ.get("NEPEC_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"NEPEC_SEED must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nepec", description="Noise-agnostic error mitigation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment and write a CSV table")
        p.add_argument("--config", help="JSON config file; flags take precedence over it")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--out", help="output CSV path (default: stdout)")
        p.add_argument("--workers", type=int)
        p.add_argument("--rb-depth", type=int, dest="rb_depth")

    p = sub.add_parser("decompose", help="optimal quasi-probability representation over a basis")
    p.add_argument("--target", required=True, help="target superoperator JSON")
    p.add_argument("--basis", required=True, nargs="+", help="basis superoperator JSON files")
    p.add_argument("--out", help="output JSON path (default: stdout)")

    p = sub.add_parser("rb-gen", help="write a random Clifford RB circuit as JSON")
    p.add_argument("--rb-depth", type=int, dest="rb_depth", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output JSON path (default: stdout)")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "decompose":
        result = run_decompose(args.target, args.basis)
        _emit(json.dumps(result, indent=2) + "\n", args.out)
        return
    if args.command == "rb-gen":
        seed = args.seed if args.seed is not None else _env_seed()
        if args.rb_depth < 1:
            raise ConfigError(f"--rb-depth must be >= 1, got {args.rb_depth}")
        _emit(rb_circuit(args.rb_depth, seed).to_json() + "\n", args.out)
        return

    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        if file_cfg.get("experiment", args.command) != args.command:
            raise ConfigError(f"config is for {file_cfg['experiment']!r}, not {args.command!r}")
    seed = args.seed
    if seed is None and "seed" not in file_cfg:
        seed = _env_seed()
    cfg = ExperimentConfig.from_dict(
        file_cfg,
        experiment=args.command,
        seed=seed,
        samples=args.samples,
        workers=args.workers,
        rb_depth=args.rb_depth,
        out=args.out,
    )
    log.info("running %s with seed %d", cfg.experiment, cfg.seed)
    table = run(cfg)
    if cfg.out is None:
        _emit(table.to_csv(), None)
    else:
        table.write(cfg.out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _dispatch(args)
    except InfeasibleRepresentation as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalConsistencyError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
