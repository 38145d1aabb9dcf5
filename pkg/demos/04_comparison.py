# %% [markdown]
# # Comparing the algorithms end to end
#
# A strongly non-IID federation (alpha=0.1, 20 clients, 8 per round, 5 local
# epochs). We run each algorithm for a few seeds and report final test accuracy
# plus how many rounds each needs to match FedAvg's final accuracy.

# %%
from dataclasses import replace

import numpy as np

from fedcm.aggregation import ScoreFunction
from fedcm.data import PartitionScheme, PartitionSpec
from fedcm.model import Architecture, LocalHyper, ModelSpec
from fedcm.orchestrator import Algorithm, DatasetSpec, FederationConfig, rounds_to_target, run_experiment, with_algorithm

base = FederationConfig(
    num_clients=20,
    sampling_ratio=0.4,
    rounds=50,
    score_fn=ScoreFunction.CLASSIFICATION_LOSS,
    local=LocalHyper(eta=0.05, batch_size=32, local_epochs=5),
    partition=PartitionSpec(PartitionScheme.CLASS_HETEROGENEITY, 0.1, 20, 100),
    model=ModelSpec(Architecture.LOGISTIC_REGRESSION, 20, 10),
    dataset=DatasetSpec(num_classes=10, dim=20, per_class=300, test_per_class=200),
    val_per_class=50,
)
algorithms = [Algorithm.FEDAVG, Algorithm.FEDPROX, Algorithm.FEDPDP, Algorithm.FEDCA,
              Algorithm.FEDCM_UCB, Algorithm.FEDCM_TS]
seeds = range(3)

# %%
runs = {}
for alg in algorithms:
    for seed in seeds:
        cfg = with_algorithm(base, alg, seed)
        if alg is Algorithm.FEDPROX:
            cfg = replace(cfg, local=replace(cfg.local, prox_mu=0.1))
        runs[alg, seed] = run_experiment(cfg, threads=4).records

# %%
print(f"{'algorithm':10s}  final acc (%)   rounds to FedAvg final")
for alg in algorithms:
    finals = [100 * runs[alg, s][-1].test_accuracy for s in seeds]
    reach = [rounds_to_target(runs[alg, s], runs[Algorithm.FEDAVG, s][-1].test_accuracy) for s in seeds]
    print(f"{alg.value:10s}  {np.mean(finals):6.2f} ± {np.std(finals, ddof=1):4.2f}   {reach}")

# %% [markdown]
# Which clients did FedCM-TS favour on seed 0? Count how often each was sampled.

# %%
counts = np.zeros(20, int)
for r in runs[Algorithm.FEDCM_TS, 0]:
    counts[list(r.sampled)] += 1
print(counts)
