"""Validation scores, the combinatorial model filter and the averaging rules."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .model import ModelSpec, forward_logits, log_softmax

MAX_FILTER_CLIENTS = 20


class ScoreFunction(str, Enum):
    DIRAC_DELTA = "DiracDelta"
    CLASSIFICATION_LOSS = "ClassificationLoss"


class FilterBoundError(ValueError):
    pass


@dataclass(frozen=True)
class FilterResult:
    optimal_subset: tuple[int, ...]
    score: float
    subsets_evaluated: int


def check_weights(p: Sequence[float], tol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("client weights must be a non-empty vector")
    if (p < 0).any():
        raise ValueError("client weights must be non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"client weights sum to {p.sum()!r}, not 1")
    return p


def _subset_key(subset) -> tuple[int, ...]:
    key = tuple(sorted(int(k) for k in subset))
    if not key:
        raise ValueError("subset must be non-empty")
    if len(set(key)) != len(key):
        raise ValueError(f"subset has repeated ids: {key}")
    return key


def ensemble_logits(models: Mapping[int, np.ndarray], subset, spec: ModelSpec, features) -> np.ndarray:
    """Unweighted mean of the subset's logits, members taken in ascending id order."""
    key = _subset_key(subset)
    stacked = np.stack([forward_logits(models[k], spec, features) for k in key])
    return stacked.mean(axis=0)


def score_logits(logits: np.ndarray, labels, fn: ScoreFunction) -> float:
    """Score averaged logits against labels; larger is better for both kinds."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("validation set is empty")
    fn = ScoreFunction(fn)
    if fn is ScoreFunction.DIRAC_DELTA:
        return float((logits.argmax(axis=1) == y).mean())
    return float(log_softmax(logits)[np.arange(y.size), y].mean())


def score(val: tuple, models: Mapping[int, np.ndarray], subset, spec: ModelSpec, fn: ScoreFunction) -> float:
    features, labels = val
    return score_logits(ensemble_logits(models, subset, spec, features), labels, fn)


def _better(cand_score: float, cand: tuple[int, ...], best_score: float, best: tuple[int, ...]) -> bool:
    if cand_score != best_score:
        return cand_score > best_score
    if len(cand) != len(best):
        return len(cand) > len(best)
    return cand < best


def combinatorial_filter(
    models: Mapping[int, np.ndarray],
    val: tuple,
    spec: ModelSpec,
    fn: ScoreFunction,
) -> FilterResult:
    """Exhaustively pick the non-empty subset of ``models`` whose logit ensemble scores best.

    Ties prefer the larger subset, then the lexicographically smallest id tuple.
    """
    ids = sorted(int(k) for k in models)
    if not ids:
        raise ValueError("combinatorial filter needs at least one model")
    if len(ids) > MAX_FILTER_CLIENTS:
        raise FilterBoundError(
            f"exhaustive filter is capped at {MAX_FILTER_CLIENTS} models, got {len(ids)}"
        )
    features, labels = val
    per_model = np.stack([forward_logits(models[k], spec, features) for k in ids])
    fn = ScoreFunction(fn)

    best: tuple[int, ...] | None = None
    best_score = -np.inf
    evaluated = 0
    for size in range(1, len(ids) + 1):
        for pos in combinations(range(len(ids)), size):
            s = score_logits(per_model[list(pos)].mean(axis=0), labels, fn)
            cand = tuple(ids[i] for i in pos)
            evaluated += 1
            if best is None or _better(s, cand, best_score, best):
                best, best_score = cand, s
    return FilterResult(best, best_score, evaluated)


def identity_filter(models: Mapping[int, np.ndarray], val: tuple, spec: ModelSpec, fn: ScoreFunction) -> FilterResult:
    """Keep every model; used to check that filtered averaging reduces to FedPdp."""
    ids = _subset_key(models)
    return FilterResult(ids, score(val, models, ids, spec, fn), 1)


def average_fedavg(
    w_global: np.ndarray, local: Mapping[int, np.ndarray], p: Sequence[float]
) -> np.ndarray:
    """Unsampled clients contribute ``w_global`` with their weight, sampled ones their local model."""
    p = check_weights(p)
    w_global = np.asarray(w_global, dtype=np.float64)
    if not local:
        return w_global.copy()
    sampled = sorted(local)
    stay = float(np.delete(p, sampled).sum())
    out = stay * w_global
    for k in sampled:
        out = out + p[k] * local[k]
    return out


def average_mean(local: Mapping[int, np.ndarray], counts: Mapping[int, int] | None = None) -> np.ndarray:
    """Plain mean over the sampled models, counting repeated draws ``counts[k]`` times."""
    if not local:
        raise ValueError("cannot average an empty set of models")
    keys = sorted(local)
    mult = [1 if counts is None else int(counts[k]) for k in keys]
    if min(mult) < 1:
        raise ValueError("multiplicities must be >= 1")
    out = np.zeros_like(np.asarray(local[keys[0]], dtype=np.float64))
    for k, c in zip(keys, mult):
        out = out + c * local[k]
    return out / sum(mult)


def average_pdp(local: Mapping[int, np.ndarray], p: Sequence[float], total_clients: int) -> np.ndarray:
    """``sum_k p_k * |S|/|S^t| * w_k`` over the sampled clients, no further renormalisation."""
    if not local:
        raise ValueError("cannot average an empty set of models")
    p = check_weights(p)
    if p.size != total_clients:
        raise ValueError(f"{p.size} weights for {total_clients} clients")
    scale = total_clients / len(local)
    keys = sorted(local)
    out = np.zeros_like(np.asarray(local[keys[0]], dtype=np.float64))
    for k in keys:
        out = out + (p[k] * scale) * local[k]
    return out


def average_ca(
    local: Mapping[int, np.ndarray], result: FilterResult, p: Sequence[float], total_clients: int
) -> np.ndarray:
    """FedPdp averaging restricted to the filter's chosen subset."""
    missing = set(result.optimal_subset) - set(local)
    if missing:
        raise ValueError(f"filtered ids {sorted(missing)} have no local model")
    return average_pdp({k: local[k] for k in result.optimal_subset}, p, total_clients)
