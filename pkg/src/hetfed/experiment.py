"""Experiment runner: single runs, ablation grids and metrics files.

A run builds its dataset from the config, holds out a clean test split,
fits the estimator and records per-round metrics. Grids enumerate the
(mu, noise kind, method) product with per-cell derived seeds, so adding a
cell never perturbs another cell's result.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import FederationConfig, config_to_dict, validate_config
from .data import generate_synthetic, load_dataset
from .estimator import HeteroFedClassifier
from .exceptions import ConfigurationError, HetFedError
from .federation import STREAM_CELL, STREAM_DATA, STREAM_TEST, RoundMetrics, derive_seed

# Ablation methods: name -> (use_symmetric_loss, use_collaboration).
METHOD_FLAGS = {
    "full": (True, True),
    "no-collab": (True, False),
    "ce-collab": (False, True),
    "ce-only": (False, False),
}


@dataclass
class ExperimentResult:
    per_round: list[RoundMetrics]
    final_per_client_accuracy: list[float]
    final_average_accuracy: float
    config_echo: dict


@dataclass
class GridCell:
    """One point of the ablation grid with its resolved config."""

    index: int
    mu: float
    noise_kind: str
    method: str
    config: FederationConfig


@dataclass
class CellOutcome:
    cell: GridCell
    result: ExperimentResult | None = None
    error: str | None = None


def _build_dataset(config: FederationConfig):
    if config.dataset == "synthetic":
        return generate_synthetic(
            config.num_classes, config.feature_dim, config.num_samples,
            derive_seed(config.seed, STREAM_DATA), separation=config.separation,
        )
    return load_dataset(config.dataset_path)


def run_federation(config: FederationConfig) -> ExperimentResult:
    """Execute one full experiment; a pure function of the config."""
    validate_config(config)
    dataset = _build_dataset(config)
    rng = np.random.default_rng(derive_seed(config.seed, STREAM_TEST))
    order = rng.permutation(dataset.n)
    n_test = max(1, int(round(config.test_fraction * dataset.n)))
    test = dataset.subset(order[:n_test])
    train = dataset.subset(order[n_test:])
    clf = HeteroFedClassifier(
        num_clients=config.num_clients, rounds=config.rounds,
        local_epochs=config.local_epochs, learning_rate=config.learning_rate,
        batch_size=config.batch_size, lam=config.lam, noise_kind=config.noise_kind,
        noise_rate=config.noise_rate, gamma=config.gamma,
        arch_assignment=config.arch_assignment, temperature=config.temperature,
        use_symmetric_loss=config.use_symmetric_loss,
        use_collaboration=config.use_collaboration,
        public_fraction=config.public_fraction, seed=config.seed,
    )
    clf.fit(train.features, train.labels, eval_set=(test.features, test.labels))
    last = clf.history_[-1]
    return ExperimentResult(
        per_round=clf.history_,
        final_per_client_accuracy=list(last.per_client_accuracy),
        final_average_accuracy=last.average_accuracy,
        config_echo=config_to_dict(config),
    )


def grid_cells(base: FederationConfig, mus: list[float], kinds: list[str],
               methods: list[str]) -> list[GridCell]:
    if not mus or not kinds or not methods:
        raise ConfigurationError("grid axes must be non-empty")
    for method in methods:
        if method not in METHOD_FLAGS:
            raise ConfigurationError(
                f"unknown method '{method}'; choose from {sorted(METHOD_FLAGS)}"
            )
    cells = []
    index = 0
    for mu in mus:
        for kind in kinds:
            for method in methods:
                use_sym, use_collab = METHOD_FLAGS[method]
                config = dataclasses.replace(
                    base, noise_rate=mu, noise_kind=kind,
                    use_symmetric_loss=use_sym, use_collaboration=use_collab,
                    seed=derive_seed(base.seed, STREAM_CELL, index),
                )
                cells.append(GridCell(index, mu, kind, method, config))
                index += 1
    return cells


def _run_cell(cell: GridCell) -> CellOutcome:
    try:
        return CellOutcome(cell, result=run_federation(cell.config))
    except HetFedError as exc:
        return CellOutcome(cell, error=f"{type(exc).__name__}: {exc}")
    except Exception as exc:  # noqa: BLE001 - a cell crash must not kill the grid
        return CellOutcome(cell, error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}")


def max_workers_from_env() -> int:
    raw = os.environ.get("HETFL_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigurationError(f"HETFL_THREADS must be an integer, got '{raw}'") from None
    return os.cpu_count() or 1


def run_grid(base: FederationConfig, mus: list[float], kinds: list[str],
             methods: list[str], max_workers: int | None = None) -> list[CellOutcome]:
    """Run every grid cell; failures are recorded, the rest still run."""
    cells = grid_cells(base, mus, kinds, methods)
    if max_workers is None:
        max_workers = max_workers_from_env()
    max_workers = min(max_workers, len(cells))
    if max_workers <= 1:
        return [_run_cell(cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        outcomes = list(pool.map(_run_cell, cells, chunksize=1))
    return sorted(outcomes, key=lambda o: o.cell.index)


def _fmt(x: float) -> str:
    return f"{float(x):.6g}"


def emit_metrics(outcomes: list[CellOutcome], out_dir: str) -> None:
    """Write summary.csv, per-cell round_metrics.csv and config.json echoes.

    Failed cells are listed in failures.txt and skipped in summary.csv.
    """
    os.makedirs(out_dir, exist_ok=True)
    successes = [o for o in outcomes if o.result is not None]
    num_clients = (len(successes[0].result.final_per_client_accuracy) if successes else 0)
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        client_cols = [f"acc_client_{i}" for i in range(num_clients)]
        writer.writerow(["cell", "mu", "noise_kind", "method", "seed",
                         *client_cols, "acc_average"])
        for o in successes:
            writer.writerow([
                o.cell.index, _fmt(o.cell.mu), o.cell.noise_kind, o.cell.method,
                o.cell.config.seed,
                *(_fmt(a) for a in o.result.final_per_client_accuracy),
                _fmt(o.result.final_average_accuracy),
            ])
    failures = [o for o in outcomes if o.error is not None]
    if failures:
        with open(os.path.join(out_dir, "failures.txt"), "w", encoding="utf-8") as fh:
            for o in failures:
                fh.write(f"cell {o.cell.index} (mu={o.cell.mu}, kind={o.cell.noise_kind}, "
                         f"method={o.cell.method}): {o.error}\n")
    for o in successes:
        cell_dir = os.path.join(out_dir, f"cell_{o.cell.index:03d}")
        os.makedirs(cell_dir, exist_ok=True)
        with open(os.path.join(cell_dir, "round_metrics.csv"), "w", newline="",
                  encoding="ascii") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", *(f"acc_client_{i}" for i in range(num_clients)),
                             "acc_average", "mean_pairwise_kl", "mean_local_loss"])
            for rm in o.result.per_round:
                writer.writerow([rm.round, *(_fmt(a) for a in rm.per_client_accuracy),
                                 _fmt(rm.average_accuracy), _fmt(rm.mean_pairwise_kl),
                                 _fmt(rm.mean_local_loss)])
        with open(os.path.join(cell_dir, "config.json"), "w", encoding="ascii") as fh:
            json.dump(o.result.config_echo, fh, indent=2, sort_keys=False)
            fh.write("\n")


def read_summary(path: str) -> list[dict]:
    """Parse summary.csv back into typed rows."""
    with open(path, "r", newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        parsed = {"cell": int(row["cell"]), "mu": float(row["mu"]),
                  "noise_kind": row["noise_kind"], "method": row["method"],
                  "seed": int(row["seed"]),
                  "acc_average": float(row["acc_average"])}
        parsed["per_client"] = [float(row[k]) for k in row if k.startswith("acc_client_")]
        out.append(parsed)
    return out


def read_round_metrics(path: str) -> list[dict]:
    with open(path, "r", newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({
            "round": int(row["round"]),
            "per_client": [float(row[k]) for k in row if k.startswith("acc_client_")],
            "acc_average": float(row["acc_average"]),
            "mean_pairwise_kl": float(row["mean_pairwise_kl"]),
            "mean_local_loss": float(row["mean_local_loss"]),
        })
    return out
