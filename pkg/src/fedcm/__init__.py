"""Federated learning simulator with combinatorial model averaging and bandit client sampling."""

from .aggregation import (
    FilterResult,
    ScoreFunction,
    average_ca,
    average_fedavg,
    average_mean,
    average_pdp,
    combinatorial_filter,
    ensemble_logits,
    score,
)
from .data import (
    ClientShard,
    Dataset,
    PartitionScheme,
    PartitionSpec,
    build_validation_set,
    partition_class_heterogeneity,
    partition_client_heterogeneity,
    synth_dataset,
)
from .model import Architecture, LocalHyper, ModelSpec, forward_logits, local_update, loss_and_grad, sgd_step
from .orchestrator import (
    Algorithm,
    DatasetSpec,
    FederationConfig,
    RoundRecord,
    client_weights,
    per_client_accuracy,
    rounds_to_target,
    run_experiment,
    run_round,
)
from .rng import RngStream
from .sampling import (
    beta_sample,
    sample_uniform,
    sample_weighted_replacement,
    ts_update_and_select,
    ucb_init,
    ucb_update_and_select,
)

__version__ = "0.1.0"
