"""The federation protocol engine.

Each round has three phases: (a) every client trains locally on its own
noisy shard, (b) every client publishes the class distribution of its model
over the shared public set, (c) every client takes one pass of alignment
updates against the other clients' frozen snapshots. Snapshots are the only
artifact that crosses client boundaries.

All per-client randomness is derived from (run seed, stream, round, client
id), so the result does not depend on the order clients are processed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .architectures import ArchitectureRegistry
from .data import (LabeledDataset, build_transition_matrix, corrupt_labels,
                   dirichlet_partition)
from .exceptions import ConfigurationError
from .losses import kl_divergence, one_hot, peer_learning_loss, symmetric_loss, cross_entropy
from .nn import AdamState, Model, adam_step, softmax

# Seed-derivation streams. Keeping them distinct means no two uses of the
# run seed ever collide.
STREAM_INIT = 1        # model initialization, per client
STREAM_NOISE = 2       # label corruption, per client
STREAM_SHUFFLE = 3     # local epoch shuffling, per (round, epoch, client)
STREAM_PUBLIC = 4      # public/private split
STREAM_PARTITION = 5   # Dirichlet partition
STREAM_TEST = 6        # test split
STREAM_CELL = 7        # grid cells
STREAM_DATA = 8        # synthetic generation


def derive_seed(base_seed: int, stream: int, *indices: int) -> int:
    """Deterministic child seed for one use of the run seed."""
    ss = np.random.SeedSequence([int(base_seed), int(stream), *map(int, indices)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class Client:
    """One participant: private model, optimizer and (noisy) private shard.

    A client never holds a reference to another client's model or data;
    peers are visible only through published KnowledgeDistribution values.
    """

    id: int
    model: Model
    optimizer: AdamState
    private_data: LabeledDataset
    arch_id: str


@dataclass(frozen=True)
class KnowledgeDistribution:
    """A client's class probabilities over the public set for one round.

    Immutable once published; the probs array is marked read-only.
    """

    client_id: int
    round: int
    probs: np.ndarray

    def __post_init__(self):
        rows = self.probs.sum(axis=1)
        if not np.all(np.abs(rows - 1.0) <= 1e-9) or self.probs.min() < 0:
            raise ConfigurationError(
                f"knowledge distribution rows of client {self.client_id} are not on the simplex"
            )
        self.probs.setflags(write=False)


@dataclass
class RoundSchedule:
    """How much work one collaborative round does."""

    rounds: int
    local_epochs: int = 1
    batch_size: int = 16

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigurationError(f"rounds must be >= 0, got {self.rounds}")
        if self.local_epochs < 1:
            raise ConfigurationError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class RoundMetrics:
    round: int
    per_client_accuracy: list[float]
    average_accuracy: float
    mean_pairwise_kl: float
    mean_local_loss: float


def local_train_epoch(client: Client, lam: float, batch_size: int, seed: int,
                      use_symmetric: bool = True) -> float:
    """One shuffled pass over the client's private shard.

    Per mini-batch: forward, softmax, symmetric loss against the one-hot
    (noisy) labels, backward, Adam step. Returns the mean batch loss.
    """
    ds = client.private_data
    targets = one_hot(ds.labels, ds.num_classes)
    order = np.random.default_rng(seed).permutation(ds.n)
    losses = []
    for start in range(0, ds.n, batch_size):
        idx = order[start:start + batch_size]
        logits = client.model.forward(ds.features[idx])
        probs = softmax(logits)
        if use_symmetric:
            loss = symmetric_loss(probs, targets[idx], lam)
        else:
            loss = cross_entropy(probs, targets[idx])
        client.model.backward(loss.grad_wrt_logits)
        adam_step(client.model, client.optimizer)
        losses.append(loss.value)
    return float(np.mean(losses))


def compute_knowledge(client: Client, public_data: LabeledDataset, round_index: int,
                      temperature: float = 1.0, batch_size: int = 256) -> KnowledgeDistribution:
    """Softmax outputs of the client's model over every public sample.

    Does not mutate the model. Temperature rescales logits before the
    softmax (1.0 leaves them untouched).
    """
    if temperature <= 0:
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    if public_data.dim != _input_dim(client.model):
        raise ConfigurationError(
            f"public data has {public_data.dim} features but client {client.id} "
            f"model '{client.arch_id}' expects {_input_dim(client.model)}"
        )
    chunks = []
    for start in range(0, public_data.n, batch_size):
        logits = client.model.forward(public_data.features[start:start + batch_size])
        chunks.append(softmax(logits / temperature))
    return KnowledgeDistribution(client.id, round_index, np.vstack(chunks))


def collaborative_update(client: Client, peers: list[KnowledgeDistribution],
                         public_data: LabeledDataset, alpha: float, batch_size: int,
                         temperature: float = 1.0) -> float:
    """One pass of alignment updates against frozen peer snapshots.

    Minimizes 1/(P-1) * sum_peers KL(peer || own) over mini-batches of the
    public set. Peers stay untouched; returns the mean scaled alignment loss.
    """
    if not peers:
        raise ConfigurationError("collaborative_update needs at least one peer snapshot")
    for snap in peers:
        if snap.client_id == client.id:
            raise ConfigurationError(
                f"client {client.id} received its own distribution as a peer"
            )
        if snap.probs.shape[0] != public_data.n:
            raise ConfigurationError(
                f"peer snapshot of client {snap.client_id} covers {snap.probs.shape[0]} "
                f"samples, public set has {public_data.n}"
            )
    scale = 1.0 / len(peers)
    client.optimizer.alpha = alpha
    losses = []
    for start in range(0, public_data.n, batch_size):
        stop = start + batch_size
        logits = client.model.forward(public_data.features[start:stop])
        probs = softmax(logits / temperature)
        loss = peer_learning_loss(probs, [snap.probs[start:stop] for snap in peers])
        client.model.backward(loss.grad_wrt_logits * (scale / temperature))
        adam_step(client.model, client.optimizer)
        losses.append(loss.value * scale)
    return float(np.mean(losses))


def evaluate(model: Model, test: LabeledDataset, batch_size: int = 512) -> float:
    """Fraction of samples whose argmax logit hits the label (ties -> lowest)."""
    hits = 0
    for start in range(0, test.n, batch_size):
        stop = start + batch_size
        logits = model.forward(test.features[start:stop])
        hits += int(np.sum(np.argmax(logits, axis=1) == test.labels[start:stop]))
    return hits / test.n


def mean_pairwise_kl(snapshots: dict[int, KnowledgeDistribution]) -> float:
    """Mean of KL(D_p || D_q) over all ordered client pairs p != q."""
    ids = sorted(snapshots)
    if len(ids) < 2:
        return 0.0
    total, pairs = 0.0, 0
    for p in ids:
        for q in ids:
            if p != q:
                total += kl_divergence(snapshots[p].probs, snapshots[q].probs)
                pairs += 1
    return total / pairs


def build_clients(features: np.ndarray, labels: np.ndarray, num_classes: int, *,
                  num_clients: int, arch_ids: list[str], registry: ArchitectureRegistry,
                  learning_rate: float, gamma: float, noise_kind: str, noise_rate: float,
                  public_fraction: float, seed: int) -> tuple[list[Client], LabeledDataset]:
    """Carve the public set, partition the rest across clients, corrupt each
    shard and initialize the client models.

    All randomness is derived from `seed`; per-client streams make realized
    noise fractions differ naturally across clients.
    """
    if len(arch_ids) != num_clients:
        raise ConfigurationError(
            f"{num_clients} clients but {len(arch_ids)} architecture assignments"
        )
    if not 0.0 < public_fraction < 1.0:
        raise ConfigurationError(f"public_fraction must be in (0, 1), got {public_fraction}")
    pool = LabeledDataset(features, labels, num_classes)
    rng = np.random.default_rng(derive_seed(seed, STREAM_PUBLIC))
    order = rng.permutation(pool.n)
    n_public = int(round(public_fraction * pool.n))
    n_public = min(max(n_public, 1), pool.n - num_clients)  # leave room for shards
    public = pool.subset(order[:n_public])
    private_pool = pool.subset(order[n_public:])
    plan = dirichlet_partition(private_pool, num_clients, gamma,
                               derive_seed(seed, STREAM_PARTITION))
    matrix = None
    if noise_kind != "none":
        matrix = build_transition_matrix(noise_kind, noise_rate, num_classes)
    clients = []
    for cid in range(num_clients):
        shard = private_pool.subset(plan.assignments[cid])
        if matrix is not None:
            shard = corrupt_labels(shard, matrix, derive_seed(seed, STREAM_NOISE, cid))
        model = registry.init_model(arch_ids[cid], derive_seed(seed, STREAM_INIT, cid))
        optimizer = AdamState.for_model(model, alpha=learning_rate)
        clients.append(Client(cid, model, optimizer, shard, arch_ids[cid]))
    return clients, public


def _input_dim(model: Model) -> int:
    first = model.layers[0]
    if hasattr(first, "in_shape"):
        return int(np.prod(first.in_shape))
    return first.params["w"].shape[0]


def _round_metrics(round_index: int, clients: list[Client],
                   snapshots: dict[int, KnowledgeDistribution],
                   eval_set: LabeledDataset | None, mean_local_loss: float) -> RoundMetrics:
    by_id = sorted(clients, key=lambda c: c.id)
    if eval_set is not None:
        accs = [evaluate(c.model, eval_set) for c in by_id]
        avg = float(np.mean(accs))
    else:
        accs = [math.nan] * len(by_id)
        avg = math.nan
    return RoundMetrics(round_index, accs, avg, mean_pairwise_kl(snapshots), mean_local_loss)


def _mean_private_loss(clients: list[Client], lam: float, use_symmetric: bool) -> float:
    vals = []
    for c in clients:
        ds = c.private_data
        probs = softmax(c.model.forward(ds.features))
        targets = one_hot(ds.labels, ds.num_classes)
        loss = symmetric_loss(probs, targets, lam) if use_symmetric else cross_entropy(probs, targets)
        vals.append(loss.value)
    return float(np.mean(vals))


def run_rounds(clients: list[Client], public_data: LabeledDataset,
               schedule: RoundSchedule, *, lam: float, alpha: float, seed: int,
               use_symmetric: bool = True, use_collaboration: bool = True,
               temperature: float = 1.0,
               eval_set: LabeledDataset | None = None) -> list[RoundMetrics]:
    """Drive the full protocol for schedule.rounds rounds.

    With zero rounds nothing trains and a single round-0 summary entry is
    returned (accuracies, pairwise KL and the current private-shard loss of
    the initial models). With collaboration off, rounds reduce to local-only
    training; snapshots are still published so KL metrics stay comparable.
    """
    if schedule.rounds == 0:
        snapshots = {c.id: compute_knowledge(c, public_data, 0, temperature) for c in clients}
        return [_round_metrics(0, clients, snapshots, eval_set,
                               _mean_private_loss(clients, lam, use_symmetric))]
    history = []
    for round_index in range(1, schedule.rounds + 1):
        epoch_losses = []
        for client in clients:
            for epoch in range(schedule.local_epochs):
                epoch_seed = derive_seed(seed, STREAM_SHUFFLE, round_index, epoch, client.id)
                epoch_losses.append(
                    local_train_epoch(client, lam, schedule.batch_size, epoch_seed,
                                      use_symmetric=use_symmetric)
                )
        snapshots = {
            c.id: compute_knowledge(c, public_data, round_index, temperature) for c in clients
        }
        if use_collaboration and len(clients) > 1:
            for client in clients:
                peers = [snapshots[i] for i in sorted(snapshots) if i != client.id]
                collaborative_update(client, peers, public_data, alpha,
                                     schedule.batch_size, temperature)
        history.append(_round_metrics(round_index, clients, snapshots, eval_set,
                                      float(np.mean(epoch_losses))))
    return history
