"""sklearn-style front end for the federated training protocol.

HeteroFedClassifier.fit runs the whole federation on (X, y): it carves out
the shared public set, Dirichlet-partitions the rest across clients,
injects label noise per client, and then alternates local training with
KL alignment for the configured number of rounds. predict/predict_proba
ensemble the trained client models, so the estimator composes with
pipelines, grid search and the rest of the sklearn ecosystem.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .architectures import ArchitectureRegistry, homogeneous_assignment, register_builtin_zoo
from .data import LabeledDataset
from .exceptions import ConfigurationError
from .federation import RoundSchedule, build_clients, evaluate, run_rounds
from .nn import softmax


class HeteroFedClassifier(ClassifierMixin, BaseEstimator):
    """Federated ensemble of heterogeneous client models.

    Parameters
    ----------
    num_clients : number of simulated participants (>= 2).
    rounds : collaborative rounds; 0 disables training entirely.
    local_epochs : local passes over each private shard per round.
    learning_rate : Adam step size for both phases.
    batch_size : mini-batch size for local and alignment updates.
    lam : weight of the cross-entropy term inside the symmetric loss.
    noise_kind : 'none', 'pair' or 'symmetric' label corruption.
    noise_rate : corruption probability in [0, 1).
    gamma : Dirichlet concentration; smaller is more non-IID.
    arch_assignment : 'heterogeneous-zoo' (cycle the built-in zoo) or
        'homogeneous:<arch-id>'.
    temperature : softmax temperature for exchanged distributions.
    use_symmetric_loss : if False, local training uses plain cross entropy.
    use_collaboration : if False, rounds are local-only.
    public_fraction : fraction of fit data reserved as the shared public set.
    seed : root seed; fit is a pure function of (params, X, y).

    Attributes (after fit)
    ----------
    classes_ : sorted original labels.
    clients_ : trained Client records (model, optimizer, shard).
    history_ : per-round RoundMetrics.
    """

    def __init__(self, num_clients: int = 4, rounds: int = 40, local_epochs: int = 1,
                 learning_rate: float = 0.001, batch_size: int = 16, lam: float = 0.1,
                 noise_kind: str = "none", noise_rate: float = 0.0, gamma: float = 0.5,
                 arch_assignment: str = "heterogeneous-zoo", temperature: float = 1.0,
                 use_symmetric_loss: bool = True, use_collaboration: bool = True,
                 public_fraction: float = 0.25, seed: int = 0):
        self.num_clients = num_clients
        self.rounds = rounds
        self.local_epochs = local_epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.lam = lam
        self.noise_kind = noise_kind
        self.noise_rate = noise_rate
        self.gamma = gamma
        self.arch_assignment = arch_assignment
        self.temperature = temperature
        self.use_symmetric_loss = use_symmetric_loss
        self.use_collaboration = use_collaboration
        self.public_fraction = public_fraction
        self.seed = seed

    def _check_params(self):
        if self.num_clients < 2:
            raise ConfigurationError(f"num_clients must be >= 2, got {self.num_clients}")
        if self.rounds < 0:
            raise ConfigurationError(f"rounds must be >= 0, got {self.rounds}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigurationError(f"noise_rate must lie in [0, 1), got {self.noise_rate}")
        if self.noise_kind not in ("none", "pair", "symmetric"):
            raise ConfigurationError(
                f"noise_kind must be 'none', 'pair' or 'symmetric', got '{self.noise_kind}'"
            )
        if self.gamma <= 0:
            raise ConfigurationError(f"gamma must be > 0, got {self.gamma}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")

    def _arch_ids(self, registry: ArchitectureRegistry) -> list[str]:
        zoo = register_builtin_zoo(registry.input_dim, registry.num_classes, registry)
        if self.arch_assignment == "heterogeneous-zoo":
            return [zoo[i % len(zoo)].arch_id for i in range(self.num_clients)]
        if self.arch_assignment.startswith("homogeneous:"):
            arch_id = self.arch_assignment.split(":", 1)[1]
            return homogeneous_assignment(registry.get(arch_id), self.num_clients)
        raise ConfigurationError(
            "arch_assignment must be 'heterogeneous-zoo' or 'homogeneous:<arch-id>', "
            f"got '{self.arch_assignment}'"
        )

    def fit(self, X, y, eval_set: tuple | None = None) -> "HeteroFedClassifier":
        """Run the federation on (X, y).

        eval_set, when given as (X_eval, y_eval) with clean labels, is scored
        after every round and recorded in history_.
        """
        self._check_params()
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ConfigurationError("fit needs at least 2 distinct classes")
        self.n_features_in_ = X.shape[1]
        registry = ArchitectureRegistry(self.n_features_in_, len(self.classes_))
        arch_ids = self._arch_ids(registry)
        clients, public = build_clients(
            X, y_enc, len(self.classes_),
            num_clients=self.num_clients, arch_ids=arch_ids, registry=registry,
            learning_rate=self.learning_rate, gamma=self.gamma,
            noise_kind=self.noise_kind, noise_rate=self.noise_rate,
            public_fraction=self.public_fraction, seed=self.seed,
        )
        eval_ds = None
        if eval_set is not None:
            X_eval = check_array(eval_set[0], dtype=np.float64)
            y_eval = np.searchsorted(self.classes_, np.asarray(eval_set[1]))
            eval_ds = LabeledDataset(X_eval, y_eval, len(self.classes_))
        schedule = RoundSchedule(self.rounds, self.local_epochs, self.batch_size)
        self.history_ = run_rounds(
            clients, public, schedule, lam=self.lam, alpha=self.learning_rate,
            seed=self.seed, use_symmetric=self.use_symmetric_loss,
            use_collaboration=self.use_collaboration, temperature=self.temperature,
            eval_set=eval_ds,
        )
        self.clients_ = clients
        self.registry_ = registry
        self.public_data_ = public
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Mean of the client models' softmax outputs."""
        check_is_fitted(self, "clients_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError(
                f"X has {X.shape[1]} features, fit saw {self.n_features_in_}"
            )
        total = np.zeros((X.shape[0], len(self.classes_)))
        for client in self.clients_:
            for start in range(0, X.shape[0], 512):
                stop = start + 512
                total[start:stop] += softmax(client.model.forward(X[start:stop]))
        return total / len(self.clients_)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "clients_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def per_client_accuracy(self, X, y) -> list[float]:
        """Accuracy of each client model separately (ties -> lowest class)."""
        check_is_fitted(self, "clients_")
        X = check_array(X, dtype=np.float64)
        y_enc = np.searchsorted(self.classes_, np.asarray(y))
        test = LabeledDataset(X, y_enc, len(self.classes_))
        return [evaluate(c.model, test) for c in sorted(self.clients_, key=lambda c: c.id)]
