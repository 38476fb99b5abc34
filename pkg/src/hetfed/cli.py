"""Command-line front door.

Subcommands: run, grid, validate, gen-data. Exit codes: 0 success,
1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import format_config, parse_config
from .data import generate_synthetic, save_dataset
from .exceptions import ConfigurationError, DatasetFormatError, HetFedError
from .experiment import (METHOD_FLAGS, CellOutcome, GridCell, emit_metrics,
                         run_federation, run_grid)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetfed",
        description="Desk-scale federated learning simulator (heterogeneous models, noisy non-IID data)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="hetfed_out", help="metrics output directory")

    p_grid = sub.add_parser("grid", help="run an ablation grid")
    p_grid.add_argument("config")
    p_grid.add_argument("--mu", required=True, help="comma-separated noise rates")
    p_grid.add_argument("--kind", required=True, help="comma-separated noise kinds")
    p_grid.add_argument("--method", required=True,
                        help="comma-separated methods: full, no-collab, ce-collab, ce-only")
    p_grid.add_argument("--out", default="hetfed_out", help="metrics output directory")

    p_val = sub.add_parser("validate", help="parse a config and echo the resolved values")
    p_val.add_argument("config")

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset file")
    p_gen.add_argument("out_path")
    p_gen.add_argument("--num-classes", type=int, default=13)
    p_gen.add_argument("--dim", type=int, default=64)
    p_gen.add_argument("--n", type=int, default=2600)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--separation", type=float, default=4.0)
    return parser


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    result = run_federation(config)
    flags = (config.use_symmetric_loss, config.use_collaboration)
    method = next(name for name, f in METHOD_FLAGS.items() if f == flags)
    cell = GridCell(0, config.noise_rate, config.noise_kind, method, config)
    emit_metrics([CellOutcome(cell, result=result)], args.out)
    for i, acc in enumerate(result.final_per_client_accuracy):
        print(f"client {i}: accuracy {acc:.4f}")
    print(f"average accuracy: {result.final_average_accuracy:.4f}")
    print(f"metrics written to {args.out}")
    return 0


def _cmd_grid(args) -> int:
    config = parse_config(args.config)
    mus = [float(tok) for tok in args.mu.split(",") if tok.strip()]
    kinds = [tok.strip() for tok in args.kind.split(",") if tok.strip()]
    methods = [tok.strip() for tok in args.method.split(",") if tok.strip()]
    outcomes = run_grid(config, mus, kinds, methods)
    emit_metrics(outcomes, args.out)
    failed = 0
    for o in outcomes:
        label = f"cell {o.cell.index} mu={o.cell.mu} kind={o.cell.noise_kind} method={o.cell.method}"
        if o.result is not None:
            print(f"{label}: average accuracy {o.result.final_average_accuracy:.4f}")
        else:
            failed += 1
            print(f"{label}: FAILED ({o.error.splitlines()[0]})")
    print(f"metrics written to {args.out}")
    return 2 if failed else 0


def _cmd_validate(args) -> int:
    config = parse_config(args.config)
    sys.stdout.write(format_config(config))
    return 0


def _cmd_gen_data(args) -> int:
    dataset = generate_synthetic(args.num_classes, args.dim, args.n, args.seed,
                                 separation=args.separation)
    save_dataset(dataset, args.out_path)
    print(f"wrote {dataset.n} samples ({dataset.dim} features, "
          f"{dataset.num_classes} classes) to {args.out_path}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "grid": _cmd_grid,
    "validate": _cmd_validate,
    "gen-data": _cmd_gen_data,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HetFedError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
