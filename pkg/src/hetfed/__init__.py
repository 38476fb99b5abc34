"""hetfed: desk-scale federated learning with heterogeneous models and
noisy non-IID data.

Clients train private models of different architectures on private noisy
shards (symmetric loss), then align their class-probability outputs over a
shared public set by minimizing KL divergence against the other clients'
published distributions.
"""

from .architectures import (ArchitectureRegistry, ArchitectureSpec, build_model,
                            cnn_small_spec, homogeneous_assignment, mlp_spec,
                            parameter_count, register_builtin_zoo)
from .config import (FederationConfig, config_from_dict, config_to_dict,
                     format_config, parse_config, parse_config_text, validate_config)
from .data import (LabeledDataset, LabelTransitionMatrix, PartitionPlan,
                   build_transition_matrix, corrupt_labels, dirichlet_partition,
                   generate_synthetic, load_dataset, save_dataset)
from .estimator import HeteroFedClassifier
from .exceptions import (ConfigurationError, DatasetFormatError, DimensionError,
                         HetFedError, PartitionError, StateError)
from .experiment import (CellOutcome, ExperimentResult, GridCell, emit_metrics,
                         grid_cells, read_round_metrics, read_summary,
                         run_federation, run_grid)
from .federation import (Client, KnowledgeDistribution, RoundMetrics, RoundSchedule,
                         build_clients, collaborative_update, compute_knowledge,
                         derive_seed, evaluate, local_train_epoch, mean_pairwise_kl,
                         run_rounds)
from .losses import (LossValue, cross_entropy, kl_divergence, one_hot,
                     peer_learning_loss, reverse_cross_entropy, symmetric_loss)
from .nn import AdamState, Conv2DSmall, Dense, Flatten, Model, ReLU, adam_step, softmax

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ArchitectureRegistry", "ArchitectureSpec", "CellOutcome",
    "Client", "ConfigurationError", "Conv2DSmall", "DatasetFormatError", "Dense",
    "DimensionError", "ExperimentResult", "FederationConfig", "Flatten", "GridCell",
    "HetFedError", "HeteroFedClassifier", "KnowledgeDistribution", "LabelTransitionMatrix",
    "LabeledDataset", "LossValue", "Model", "PartitionError", "PartitionPlan", "ReLU",
    "RoundMetrics", "RoundSchedule", "StateError", "adam_step", "build_clients",
    "build_model", "build_transition_matrix", "cnn_small_spec", "collaborative_update",
    "compute_knowledge", "config_from_dict", "config_to_dict", "corrupt_labels",
    "cross_entropy", "derive_seed", "dirichlet_partition", "emit_metrics", "evaluate",
    "format_config", "generate_synthetic", "grid_cells", "homogeneous_assignment",
    "kl_divergence", "load_dataset", "local_train_epoch", "mean_pairwise_kl",
    "mlp_spec", "one_hot", "parameter_count", "parse_config", "parse_config_text",
    "peer_learning_loss", "read_round_metrics", "read_summary", "register_builtin_zoo",
    "reverse_cross_entropy", "run_federation", "run_grid", "run_rounds", "save_dataset",
    "softmax", "symmetric_loss", "validate_config",
]
