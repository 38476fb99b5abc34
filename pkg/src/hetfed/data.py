"""Datasets: synthetic generation, on-disk IO, Dirichlet partitioning and
label-noise injection via transition matrices.

Every randomized operation takes an explicit seed and is reproducible:
identical (inputs, seed) give identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DatasetFormatError, PartitionError
from .nn import DTYPE


@dataclass
class LabeledDataset:
    """Feature matrix with integer labels; optionally the pre-noise labels."""

    features: np.ndarray          # (n, dim) float64
    labels: np.ndarray            # (n,) int64 in [0, num_classes)
    num_classes: int
    clean_labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ConfigurationError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigurationError(
                f"labels shape {self.labels.shape} does not match {self.features.shape[0]} samples"
            )
        if self.n < 1:
            raise ConfigurationError("dataset must contain at least one sample")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ConfigurationError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )
        if self.clean_labels is not None:
            self.clean_labels = np.asarray(self.clean_labels, dtype=np.int64)
            if self.clean_labels.shape != self.labels.shape:
                raise ConfigurationError("clean_labels length does not match labels")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def flip_fraction(self) -> float:
        """Fraction of labels that differ from the clean labels (0 if unknown)."""
        if self.clean_labels is None:
            return 0.0
        return float(np.mean(self.labels != self.clean_labels))

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            self.features[idx],
            self.labels[idx],
            self.num_classes,
            None if self.clean_labels is None else self.clean_labels[idx],
        )


@dataclass
class LabelTransitionMatrix:
    """Row-stochastic C x C matrix; entry (i, j) is P(noisy=j | clean=i)."""

    matrix: np.ndarray
    kind: str                    # "pair" or "symmetric"
    mu: float

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]


@dataclass
class PartitionPlan:
    """Disjoint, exhaustive index lists assigning a dataset to clients."""

    assignments: list[np.ndarray]
    gamma: float
    seed: int


def generate_synthetic(num_classes: int, dim: int, n: int, seed: int,
                       separation: float = 4.0) -> LabeledDataset:
    """Gaussian class clusters with unit within-class variance.

    Class means are drawn from the seed so that the typical distance between
    two means is about `separation` (in units of the within-class standard
    deviation). Class counts are near-balanced by construction: n // C per
    class with the remainder spread over the lowest class ids.
    """
    if num_classes < 2:
        raise ConfigurationError(f"num_classes must be >= 2, got {num_classes}")
    if dim < 2:
        raise ConfigurationError(f"dim must be >= 2, got {dim}")
    if n < num_classes:
        raise ConfigurationError(f"n must be >= num_classes, got n={n}, C={num_classes}")
    if separation <= 0:
        raise ConfigurationError(f"separation must be > 0, got {separation}")
    rng = np.random.default_rng(seed)
    scale = separation / np.sqrt(2.0 * dim)
    means = rng.normal(0.0, scale, size=(num_classes, dim))
    counts = np.full(num_classes, n // num_classes, dtype=np.int64)
    counts[: n % num_classes] += 1
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), counts)
    features = means[labels] + rng.standard_normal((n, dim))
    order = rng.permutation(n)
    return LabeledDataset(features[order], labels[order], num_classes)


def _largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to `total`, proportional to `proportions`."""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(dataset: LabeledDataset, num_clients: int, gamma: float,
                        seed: int, max_retries: int = 100) -> PartitionPlan:
    """Split a dataset across clients with per-class Dirichlet proportions.

    For each class, client shares are drawn from Dir(gamma) and converted to
    counts with largest-remainder rounding. If the full pass leaves any
    client empty the whole plan is redrawn, up to `max_retries` times.
    """
    if num_clients < 2:
        raise ConfigurationError(f"num_clients must be >= 2, got {num_clients}")
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be > 0, got {gamma}")
    rng = np.random.default_rng(seed)
    alpha = np.full(num_clients, gamma, dtype=DTYPE)
    for _ in range(max_retries):
        buckets: list[list[np.ndarray]] = [[] for _ in range(num_clients)]
        for cls in range(dataset.num_classes):
            idx = np.flatnonzero(dataset.labels == cls)
            if idx.size == 0:
                continue
            idx = rng.permutation(idx)
            counts = _largest_remainder(rng.dirichlet(alpha), idx.size)
            stops = np.cumsum(counts)[:-1]
            for client, part in enumerate(np.split(idx, stops)):
                buckets[client].append(part)
        assignments = [
            np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
            for parts in buckets
        ]
        if all(a.size >= 1 for a in assignments):
            return PartitionPlan(assignments, gamma, seed)
    raise PartitionError(
        f"could not give every one of {num_clients} clients a sample after "
        f"{max_retries} draws; increase the dataset size or gamma"
    )


def build_transition_matrix(kind: str, mu: float, num_classes: int) -> LabelTransitionMatrix:
    """Pair flip sends class i to (i+1) mod C with probability mu; symmetric
    flip spreads mu uniformly over the other C-1 classes."""
    if kind not in ("pair", "symmetric"):
        raise ConfigurationError(f"noise kind must be 'pair' or 'symmetric', got '{kind}'")
    if not 0.0 <= mu < 1.0:
        raise ConfigurationError(f"mu must lie in [0, 1), got {mu}")
    if num_classes < 2:
        raise ConfigurationError(f"num_classes must be >= 2, got {num_classes}")
    if kind == "pair" and mu > 0.5:
        raise ConfigurationError(
            f"pair flip with mu={mu} > 0.5 would make the wrong class modal"
        )
    m = np.zeros((num_classes, num_classes), dtype=DTYPE)
    if kind == "symmetric":
        m[:] = mu / (num_classes - 1)
        np.fill_diagonal(m, 1.0 - mu)
    else:
        np.fill_diagonal(m, 1.0 - mu)
        for i in range(num_classes):
            m[i, (i + 1) % num_classes] = mu
    return LabelTransitionMatrix(m, kind, mu)


def corrupt_labels(dataset: LabeledDataset, matrix: LabelTransitionMatrix,
                   seed: int) -> LabeledDataset:
    """Resample every label from its transition-matrix row; features untouched.

    The pre-noise labels are kept in clean_labels for measurement.
    """
    if matrix.num_classes != dataset.num_classes:
        raise ConfigurationError(
            f"transition matrix is {matrix.num_classes}x{matrix.num_classes} but the "
            f"dataset has {dataset.num_classes} classes"
        )
    rng = np.random.default_rng(seed)
    u = rng.random(dataset.n)
    cum = np.cumsum(matrix.matrix, axis=1)[dataset.labels]
    new_labels = (u[:, None] >= cum).sum(axis=1).astype(np.int64)
    clean = dataset.clean_labels if dataset.clean_labels is not None else dataset.labels
    return LabeledDataset(dataset.features, new_labels, dataset.num_classes, clean.copy())


def save_dataset(dataset: LabeledDataset, path: str) -> None:
    """Write the plain-text format: header 'n d C', then one sample per line
    (d space-separated reals at 9 significant digits, then the label)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{dataset.n} {dataset.dim} {dataset.num_classes}\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(" ".join(f"{x:.9g}" for x in row) + f" {label}\n")


def load_dataset(path: str) -> LabeledDataset:
    """Parse the plain-text dataset format, validating label ranges."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise DatasetFormatError(f"{path}: missing header line")
    header = lines[0].split()
    if len(header) != 3:
        raise DatasetFormatError(f"{path}: line 1: header must be 'n d C', got '{lines[0]}'")
    try:
        n, dim, num_classes = (int(tok) for tok in header)
    except ValueError:
        raise DatasetFormatError(f"{path}: line 1: header fields must be integers") from None
    if n < 1:
        raise DatasetFormatError(f"{path}: line 1: dataset must have n >= 1, got {n}")
    if dim < 1 or num_classes < 2:
        raise DatasetFormatError(f"{path}: line 1: need d >= 1 and C >= 2")
    body = [(lineno, ln) for lineno, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != n:
        raise DatasetFormatError(
            f"{path}: header declares {n} samples but file has {len(body)} data lines"
        )
    features = np.empty((n, dim), dtype=DTYPE)
    labels = np.empty(n, dtype=np.int64)
    for i, (lineno, line) in enumerate(body):
        tokens = line.split()
        if len(tokens) != dim + 1:
            raise DatasetFormatError(
                f"{path}: line {lineno}: expected {dim} features + 1 label, got "
                f"{len(tokens)} fields"
            )
        try:
            features[i] = [float(tok) for tok in tokens[:dim]]
        except ValueError:
            raise DatasetFormatError(f"{path}: line {lineno}: malformed real value") from None
        try:
            labels[i] = int(tokens[dim])
        except ValueError:
            raise DatasetFormatError(f"{path}: line {lineno}: malformed label") from None
        if not 0 <= labels[i] < num_classes:
            raise DatasetFormatError(
                f"{path}: line {lineno}: label {labels[i]} outside [0, {num_classes})"
            )
    return LabeledDataset(features, labels, num_classes)
