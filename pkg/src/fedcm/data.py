"""Synthetic datasets, Dirichlet non-IID partitioners and validation splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .rng import RngStream


class PartitionScheme(str, Enum):
    CLIENT_HETEROGENEITY = "ClientHeterogeneity"
    CLASS_HETEROGENEITY = "ClassHeterogeneity"


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"features {self.features.shape} and labels {self.labels.shape} disagree"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(indices, dtype=np.int64)
        return self.features[idx], self.labels[idx]

    def class_indices(self, c: int, among=None) -> np.ndarray:
        pool = np.arange(len(self)) if among is None else np.asarray(among, dtype=np.int64)
        return pool[self.labels[pool] == c]


@dataclass
class ClientShard:
    client_id: int
    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def is_empty(self) -> bool:
        return len(self) == 0


@dataclass(frozen=True)
class PartitionSpec:
    scheme: PartitionScheme = PartitionScheme.CLASS_HETEROGENEITY
    alpha: float = 0.1
    num_clients: int = 20
    examples_per_client: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", PartitionScheme(self.scheme))
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.num_clients < 1:
            raise ValueError(f"num_clients must be positive, got {self.num_clients}")
        if self.scheme is PartitionScheme.CLASS_HETEROGENEITY:
            if self.examples_per_client is None or self.examples_per_client < 1:
                raise ValueError("class heterogeneity needs a positive examples_per_client")


# Fixed across seeds so that train and test splits share class centres.
_DIRECTION_SEED = 20_201_002


def class_directions(num_classes: int, dim: int) -> np.ndarray:
    """Unit vectors used as class centre directions.

    Standard basis vectors when ``dim >= num_classes``; otherwise the most
    spread-out (largest minimum pairwise distance) of 64 fixed pseudo-random
    candidate sets.
    """
    if dim >= num_classes:
        return np.eye(num_classes, dim)
    gen = np.random.default_rng([_DIRECTION_SEED, num_classes, dim])
    best, best_gap = None, -1.0
    for _ in range(64):
        u = gen.normal(size=(num_classes, dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        gaps = np.linalg.norm(u[:, None] - u[None], axis=2)
        gap = gaps[np.triu_indices(num_classes, 1)].min()
        if gap > best_gap:
            best, best_gap = u, gap
    return best


def synth_dataset(
    num_classes: int, dim: int, per_class: int, separation: float, rng: RngStream
) -> Dataset:
    """Gaussian blobs, ``per_class`` examples per class, labels in class order."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if num_classes < 1 or per_class < 1:
        raise ValueError("num_classes and per_class must be positive")
    if not separation > 0:
        raise ValueError(f"separation must be > 0, got {separation}")
    centres = separation * class_directions(num_classes, dim)
    labels = np.repeat(np.arange(num_classes), per_class)
    features = centres[labels] + rng.normal(size=(labels.size, dim))
    return Dataset(features, labels, num_classes)


def largest_remainder(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total``, closest to ``proportions * total``.

    Leftover units go to the largest fractional parts, ties to the lower index.
    """
    p = np.asarray(proportions, dtype=np.float64)
    p = p / p.sum()
    raw = p * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.lexsort((np.arange(p.size), -(raw - counts)))
        counts[order[:short]] += 1
    return counts


def _training_pool(ds: Dataset, indices) -> np.ndarray:
    return np.arange(len(ds)) if indices is None else np.sort(np.asarray(indices, dtype=np.int64))


def partition_client_heterogeneity(
    ds: Dataset, spec: PartitionSpec, rng: RngStream, indices=None
) -> list[ClientShard]:
    """Split every class across clients by a ``Dir_K(alpha)`` draw.

    ``indices`` restricts the split to a training pool (default: all of ``ds``).
    Shard sizes vary and a shard may come out empty.
    """
    if spec.scheme is not PartitionScheme.CLIENT_HETEROGENEITY:
        raise ValueError(f"expected ClientHeterogeneity, got {spec.scheme.value}")
    pool = _training_pool(ds, indices)
    k = spec.num_clients
    parts: list[list[np.ndarray]] = [[] for _ in range(k)]
    for c in range(ds.num_classes):
        members = ds.class_indices(c, pool)
        p = rng.dirichlet(np.full(k, spec.alpha))
        counts = largest_remainder(p, members.size)
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for client in range(k):
            parts[client].append(members[bounds[client] : bounds[client + 1]])
    return [
        ClientShard(client, np.concatenate(chunks) if chunks else np.empty(0, np.int64))
        for client, chunks in enumerate(parts)
    ]


def partition_class_heterogeneity(
    ds: Dataset, spec: PartitionSpec, rng: RngStream, indices=None
) -> list[ClientShard]:
    """Give every client ``examples_per_client`` examples with a ``Dir_N(alpha)`` class mix.

    Labels are drawn one by one from the client's categorical; a draw that hits
    an exhausted class is redrawn from the remaining classes.
    """
    if spec.scheme is not PartitionScheme.CLASS_HETEROGENEITY:
        raise ValueError(f"expected ClassHeterogeneity, got {spec.scheme.value}")
    pool = _training_pool(ds, indices)
    per_client = spec.examples_per_client
    needed = spec.num_clients * per_client
    if needed > pool.size:
        raise ValueError(
            f"{spec.num_clients} clients x {per_client} examples = {needed} "
            f"exceeds the {pool.size} available examples"
        )
    n_cls = ds.num_classes
    queues = [rng.permutation(ds.class_indices(c, pool)) for c in range(n_cls)]
    heads = np.zeros(n_cls, dtype=np.int64)
    remaining = np.array([q.size for q in queues], dtype=np.int64)

    shards = []
    for client in range(spec.num_clients):
        q = rng.dirichlet(np.full(n_cls, spec.alpha)) if n_cls > 1 else np.ones(1)
        draws = rng.choice(n_cls, size=per_client, p=q)
        taken = np.empty(per_client, dtype=np.int64)
        for j, c in enumerate(draws):
            if remaining[c] == 0:
                c = _redraw(q, remaining, rng)
            taken[j] = queues[c][heads[c]]
            heads[c] += 1
            remaining[c] -= 1
        shards.append(ClientShard(client, np.sort(taken)))
    return shards


def _redraw(q: np.ndarray, remaining: np.ndarray, rng: RngStream) -> int:
    live = remaining > 0
    weights = np.where(live, q, 0.0)
    total = weights.sum()
    if total <= 0:
        # all remaining mass underflowed; fall back to uniform over live classes
        weights = live.astype(np.float64)
        total = weights.sum()
    return int(rng.choice(q.size, p=weights / total))


def partition(ds: Dataset, spec: PartitionSpec, rng: RngStream, indices=None) -> list[ClientShard]:
    if spec.scheme is PartitionScheme.CLIENT_HETEROGENEITY:
        return partition_client_heterogeneity(ds, spec, rng, indices)
    return partition_class_heterogeneity(ds, spec, rng, indices)


def build_validation_set(
    ds: Dataset, per_class: int, rng: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a class-balanced validation set; return ``(val, train)`` index arrays."""
    if per_class < 0:
        raise ValueError(f"per_class must be >= 0, got {per_class}")
    val = []
    for c in range(ds.num_classes):
        members = ds.class_indices(c)
        if members.size < per_class:
            raise ValueError(
                f"class {c} has {members.size} examples, fewer than the {per_class} requested"
            )
        val.append(rng.choice(members, size=per_class, replace=False))
    val_idx = np.sort(np.concatenate(val)) if val else np.empty(0, np.int64)
    mask = np.ones(len(ds), dtype=bool)
    mask[val_idx] = False
    return val_idx, np.flatnonzero(mask)


def class_histogram(ds: Dataset, indices) -> np.ndarray:
    return np.bincount(ds.labels[np.asarray(indices, dtype=np.int64)], minlength=ds.num_classes)


def mean_tv_distance(ds: Dataset, shards: list[ClientShard], pool=None) -> float:
    """Average total-variation distance of non-empty shards from the pool's class mix."""
    pool = np.arange(len(ds)) if pool is None else pool
    glob = class_histogram(ds, pool).astype(np.float64)
    glob /= glob.sum()
    dists = []
    for shard in shards:
        if shard.is_empty:
            continue
        h = class_histogram(ds, shard.indices).astype(np.float64)
        dists.append(0.5 * np.abs(h / h.sum() - glob).sum())
    return float(np.mean(dists))


@dataclass
class PartitionManifest:
    spec: PartitionSpec
    seed: int
    shards: list[ClientShard] = field(default_factory=list)
    validation: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "scheme": self.spec.scheme.value,
            "alpha": self.spec.alpha,
            "num_clients": self.spec.num_clients,
            "examples_per_client": self.spec.examples_per_client,
            "seed": self.seed,
            "clients": {str(s.client_id): s.indices.tolist() for s in self.shards},
            "empty_clients": [s.client_id for s in self.shards if s.is_empty],
            "validation": None if self.validation is None else self.validation.tolist(),
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "PartitionManifest":
        raw = json.loads(Path(path).read_text())
        spec = PartitionSpec(
            raw["scheme"], raw["alpha"], raw["num_clients"], raw["examples_per_client"]
        )
        shards = [ClientShard(int(k), v) for k, v in sorted(raw["clients"].items(), key=lambda kv: int(kv[0]))]
        val = raw.get("validation")
        return cls(spec, raw["seed"], shards, None if val is None else np.asarray(val, dtype=np.int64))
