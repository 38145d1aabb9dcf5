"""Round loop: sample clients, train locally, filter and average, record metrics."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from . import aggregation as agg
from . import sampling
from .aggregation import FilterResult, ScoreFunction
from .data import ClientShard, Dataset, PartitionScheme, PartitionSpec, build_validation_set, partition, synth_dataset
from .model import Architecture, LocalHyper, ModelSpec, accuracy, init_params, local_update
from .rng import RngStream


class Algorithm(str, Enum):
    FEDAVG = "FedAvg"
    FEDPROX = "FedProx"
    FEDPDP = "FedPdp"
    FEDCA = "FedCA"
    FEDCM_UCB = "FedCM_UCB"
    FEDCM_TS = "FedCM_TS"

    @property
    def filters(self) -> bool:
        return self in (Algorithm.FEDCA, Algorithm.FEDCM_UCB, Algorithm.FEDCM_TS)


class ClientWeighting(str, Enum):
    DATA_PROPORTIONAL = "DataProportional"
    UNIFORM = "Uniform"


# (sampling scheme, averaging scheme) per algorithm
STRATEGIES: dict[Algorithm, tuple[str, str]] = {
    Algorithm.FEDAVG: ("uniform", "fedavg"),
    Algorithm.FEDPROX: ("weighted_replacement", "mean"),
    Algorithm.FEDPDP: ("uniform", "pdp"),
    Algorithm.FEDCA: ("uniform", "ca"),
    Algorithm.FEDCM_UCB: ("ucb", "ca"),
    Algorithm.FEDCM_TS: ("ts", "ca"),
}


class ConfigError(ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class DatasetSpec:
    num_classes: int = 10
    dim: int = 20
    per_class: int = 300
    test_per_class: int = 200
    separation: float = 2.0


@dataclass(frozen=True)
class FederationConfig:
    num_clients: int = 20
    sampling_ratio: float = 0.4
    rounds: int = 50
    algorithm: Algorithm = Algorithm.FEDCA
    score_fn: ScoreFunction = ScoreFunction.CLASSIFICATION_LOSS
    local: LocalHyper = field(default_factory=LocalHyper)
    partition: PartitionSpec = field(
        default_factory=lambda: PartitionSpec(PartitionScheme.CLASS_HETEROGENEITY, 0.1, 20, 100)
    )
    model: ModelSpec = field(
        default_factory=lambda: ModelSpec(Architecture.LOGISTIC_REGRESSION, 20, 10)
    )
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    val_per_class: int = 50
    seed: int = 0
    client_weights: ClientWeighting = ClientWeighting.DATA_PROPORTIONAL

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "score_fn", ScoreFunction(self.score_fn))
        object.__setattr__(self, "client_weights", ClientWeighting(self.client_weights))

    @property
    def clients_per_round(self) -> int:
        return max(1, math.floor(self.sampling_ratio * self.num_clients + 0.5))

    def violations(self) -> list[str]:
        out = []
        if self.num_clients < 1:
            out.append(f"num_clients must be >= 1 (got {self.num_clients})")
        if not 0 < self.sampling_ratio <= 1:
            out.append(f"sampling_ratio must be in (0, 1] (got {self.sampling_ratio})")
        if self.rounds < 0:
            out.append(f"rounds must be >= 0 (got {self.rounds})")
        if self.seed < 0 or self.seed >= 2**64:
            out.append(f"seed must be a 64-bit unsigned integer (got {self.seed})")
        if self.val_per_class < 1:
            out.append(f"val_per_class must be >= 1 (got {self.val_per_class})")
        if self.algorithm is Algorithm.FEDPROX and not self.local.prox_mu > 0:
            out.append("FedProx requires local.prox_mu > 0")
        if self.algorithm in (Algorithm.FEDAVG, Algorithm.FEDPDP) and self.local.prox_mu != 0:
            out.append(f"{self.algorithm.value} requires local.prox_mu = 0")
        if self.partition.num_clients != self.num_clients:
            out.append(
                f"partition.num_clients ({self.partition.num_clients}) != num_clients ({self.num_clients})"
            )
        if self.model.input_dim != self.dataset.dim:
            out.append(f"model.input_dim ({self.model.input_dim}) != dataset.dim ({self.dataset.dim})")
        if self.model.num_classes != self.dataset.num_classes:
            out.append(
                f"model.num_classes ({self.model.num_classes}) != dataset.num_classes ({self.dataset.num_classes})"
            )
        if self.val_per_class >= self.dataset.per_class:
            out.append(
                f"val_per_class ({self.val_per_class}) leaves no training data out of dataset.per_class ({self.dataset.per_class})"
            )
        if self.algorithm.filters and 0 < self.sampling_ratio <= 1 and self.num_clients >= 1:
            if self.clients_per_round > agg.MAX_FILTER_CLIENTS:
                out.append(
                    f"{self.algorithm.value} filters exhaustively; clients_per_round "
                    f"({self.clients_per_round}) exceeds {agg.MAX_FILTER_CLIENTS}"
                )
        if self.dataset.test_per_class < 1 or not self.dataset.separation > 0:
            out.append("dataset.test_per_class must be >= 1 and dataset.separation > 0")
        return out

    def validate(self) -> "FederationConfig":
        bad = self.violations()
        if bad:
            raise ConfigError(bad)
        return self


@dataclass
class Environment:
    """Everything fixed for the lifetime of one experiment."""

    cfg: FederationConfig
    train: Dataset
    test: Dataset
    val_indices: np.ndarray
    train_indices: np.ndarray
    shards: list[ClientShard]
    weights: np.ndarray
    root: RngStream

    @property
    def val(self) -> tuple[np.ndarray, np.ndarray]:
        return self.train.subset(self.val_indices)


@dataclass
class FederationState:
    weights: np.ndarray
    round: int = 0
    sampler: sampling.UcbState | sampling.TsState | None = None
    prev_sampled: tuple[int, ...] = ()
    prev_opt: tuple[int, ...] = ()


@dataclass
class RoundRecord:
    round: int
    algorithm: str
    sampled: tuple[int, ...]
    filtered: tuple[int, ...] | None
    val_score: float
    test_accuracy: float
    subsets_evaluated: int
    wall_time: float
    sampling_scheme: str = ""
    averaging_scheme: str = ""
    reward_set: tuple[int, ...] | None = None
    sampler_state: dict | None = None


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    weights: np.ndarray
    env: Environment | None = None


def client_weights(shards: Sequence[ClientShard], mode: ClientWeighting | str) -> np.ndarray:
    mode = ClientWeighting(mode)
    k = len(shards)
    if k == 0:
        raise ValueError("no shards")
    if mode is ClientWeighting.UNIFORM:
        return np.full(k, 1.0 / k)
    sizes = np.array([len(s) for s in shards], dtype=np.float64)
    if sizes.sum() == 0:
        raise ValueError("all shards are empty")
    return sizes / sizes.sum()


def per_client_accuracy(w: np.ndarray, ds: Dataset, shards: Sequence[ClientShard], spec: ModelSpec) -> list[float | None]:
    """Global-model accuracy on each client's shard; ``None`` for empty shards."""
    out: list[float | None] = []
    for shard in shards:
        if shard.is_empty:
            out.append(None)
        else:
            out.append(accuracy(w, spec, *ds.subset(shard.indices)))
    return out


def rounds_to_target(records: Sequence[RoundRecord], target: float) -> int | None:
    for rec in records:
        if rec.test_accuracy >= target:
            return rec.round
    return None


def build_environment(cfg: FederationConfig) -> Environment:
    cfg.validate()
    root = RngStream(cfg.seed)
    d = cfg.dataset
    train = synth_dataset(d.num_classes, d.dim, d.per_class, d.separation, root.derive("train"))
    test = synth_dataset(d.num_classes, d.dim, d.test_per_class, d.separation, root.derive("test"))
    val_idx, train_idx = build_validation_set(train, cfg.val_per_class, root.derive("val"))
    shards = partition(train, cfg.partition, root.derive("partition"), indices=train_idx)
    weights = client_weights(shards, cfg.client_weights)
    return Environment(cfg, train, test, val_idx, train_idx, shards, weights, root)


def initial_state(env: Environment) -> FederationState:
    cfg = env.cfg
    w0 = init_params(cfg.model, env.root.derive("init"))
    sampler_state = None
    if cfg.algorithm is Algorithm.FEDCM_UCB:
        sampler_state = sampling.ucb_init(cfg.num_clients, env.root.derive("ucb_init"))
    elif cfg.algorithm is Algorithm.FEDCM_TS:
        sampler_state = sampling.ts_init(cfg.num_clients)
    return FederationState(w0, 0, sampler_state)


FilterFn = Callable[[Mapping[int, np.ndarray], tuple, ModelSpec, ScoreFunction], FilterResult]


def _sample(state: FederationState, env: Environment):
    cfg = env.cfg
    t = state.round
    m = cfg.clients_per_round
    rng = env.root.derive("sample", t)
    scheme = STRATEGIES[cfg.algorithm][0]
    if scheme == "uniform":
        return state.sampler, sampling.sample_uniform(range(cfg.num_clients), m, rng)
    if scheme == "weighted_replacement":
        return state.sampler, sampling.sample_weighted_replacement(env.weights, m, rng)
    if scheme == "ucb":
        return sampling.ucb_update_and_select(state.sampler, state.prev_sampled, state.prev_opt, t + 1, m)
    return sampling.ts_update_and_select(state.sampler, state.prev_sampled, state.prev_opt, m, rng)


def _train_clients(ids: Sequence[int], state: FederationState, env: Environment, threads: int) -> dict[int, np.ndarray]:
    cfg = env.cfg

    def work(k: int) -> np.ndarray:
        shard = env.shards[k]
        x, y = env.train.subset(shard.indices)
        return local_update(state.weights, cfg.model, x, y, cfg.local, env.root.derive("local", state.round, k))

    trainable = [k for k in ids if not env.shards[k].is_empty]
    if threads > 1 and len(trainable) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, trainable))
    else:
        results = [work(k) for k in trainable]
    local = dict(zip(trainable, results))
    # an empty shard performs no update and returns the global model unchanged
    for k in ids:
        local.setdefault(k, state.weights.copy())
    return local


def run_round(
    state: FederationState,
    env: Environment,
    threads: int = 1,
    filter_fn: FilterFn | None = None,
) -> tuple[FederationState, RoundRecord]:
    """Execute one communication round and return the next state with its record.

    ``state`` is never mutated; on error nothing is committed.
    """
    cfg = env.cfg
    started = time.perf_counter()
    sampler_state, outcome = _sample(state, env)
    sampled = outcome.sampled
    unique = sorted(set(sampled))
    local = _train_clients(unique, state, env, threads)
    val = env.val

    averaging = STRATEGIES[cfg.algorithm][1]
    filtered = None
    evaluated = 0
    if averaging == "ca":
        result = (filter_fn or agg.combinatorial_filter)(local, val, cfg.model, cfg.score_fn)
        filtered = result.optimal_subset
        evaluated = result.subsets_evaluated
        val_score = result.score
        w_next = agg.average_ca(local, result, env.weights, cfg.num_clients)
    else:
        val_score = agg.score(val, local, unique, cfg.model, cfg.score_fn)
        if averaging == "fedavg":
            w_next = agg.average_fedavg(state.weights, local, env.weights)
        elif averaging == "mean":
            counts = {k: sampled.count(k) for k in unique}
            w_next = agg.average_mean(local, counts)
        else:
            w_next = agg.average_pdp(local, env.weights, cfg.num_clients)

    if not np.all(np.isfinite(w_next)):
        raise FloatingPointError(f"round {state.round}: aggregated model is not finite")
    test_acc = accuracy(w_next, cfg.model, env.test.features, env.test.labels)
    scheme, avg_name = STRATEGIES[cfg.algorithm]
    record = RoundRecord(
        round=state.round,
        algorithm=cfg.algorithm.value,
        sampled=tuple(sampled),
        filtered=filtered,
        val_score=float(val_score),
        test_accuracy=test_acc,
        subsets_evaluated=evaluated,
        wall_time=time.perf_counter() - started,
        sampling_scheme=scheme,
        averaging_scheme=avg_name,
        reward_set=state.prev_opt if scheme in ("ucb", "ts") else None,
        sampler_state=None if sampler_state is None else sampler_state.to_dict(),
    )
    new_state = FederationState(
        weights=w_next,
        round=state.round + 1,
        sampler=sampler_state,
        prev_sampled=tuple(unique),
        prev_opt=filtered if filtered is not None else (),
    )
    return new_state, record


def run_experiment(
    cfg: FederationConfig,
    threads: int = 1,
    filter_fn: FilterFn | None = None,
) -> ExperimentResult:
    env = build_environment(cfg)
    state = initial_state(env)
    records = []
    for _ in range(cfg.rounds):
        state, rec = run_round(state, env, threads, filter_fn)
        records.append(rec)
    return ExperimentResult(records, state.weights, env)


def with_algorithm(cfg: FederationConfig, algorithm: Algorithm | str, seed: int | None = None) -> FederationConfig:
    """Copy of ``cfg`` for another algorithm/seed, adjusting ``prox_mu`` to the algorithm's contract."""
    algorithm = Algorithm(algorithm)
    local = cfg.local
    if algorithm in (Algorithm.FEDAVG, Algorithm.FEDPDP) and local.prox_mu != 0:
        local = replace(local, prox_mu=0.0)
    changes = {"algorithm": algorithm, "local": local}
    if seed is not None:
        changes["seed"] = seed
    return replace(cfg, **changes)
