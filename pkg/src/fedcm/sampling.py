"""Client samplers: uniform, weighted-with-replacement, UCB and Thompson sampling.

The two bandit samplers score clients by how often they survived the model
filter: the reward of client ``k`` after a round is 1 if ``k`` was kept in the
filtered subset, 0 if it was sampled but filtered out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .aggregation import check_weights
from .rng import RngStream


@dataclass(frozen=True)
class SamplingOutcome:
    sampled: tuple[int, ...]
    scores_used: dict[int, float] | None = None


def sample_uniform(all_clients: Sequence[int], m: int, rng: RngStream) -> SamplingOutcome:
    clients = list(all_clients)
    if not 1 <= m <= len(clients):
        raise ValueError(f"m must be in [1, {len(clients)}], got {m}")
    # partial Fisher-Yates
    pool = list(clients)
    for i in range(m):
        j = int(rng.integers(i, len(pool)))
        pool[i], pool[j] = pool[j], pool[i]
    return SamplingOutcome(tuple(pool[:m]))


def sample_weighted_replacement(p: Sequence[float], m: int, rng: RngStream) -> SamplingOutcome:
    """``m`` i.i.d. categorical draws; duplicates are kept in draw order."""
    p = check_weights(p)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    draws = rng.choice(p.size, size=m, replace=True, p=p)
    return SamplingOutcome(tuple(int(k) for k in draws))


def top_m(scores: np.ndarray, m: int) -> tuple[int, ...]:
    """Ids of the ``m`` largest scores; ties go to the smaller id."""
    if not 1 <= m <= scores.size:
        raise ValueError(f"m must be in [1, {scores.size}], got {m}")
    order = np.lexsort((np.arange(scores.size), -scores))
    return tuple(int(k) for k in order[:m])


def _check_feedback(prev_sampled: Iterable[int], prev_opt: Iterable[int]) -> tuple[list[int], set[int]]:
    sampled = sorted(set(int(k) for k in prev_sampled))
    opt = set(int(k) for k in prev_opt)
    stray = opt - set(sampled)
    if stray:
        raise ValueError(f"filtered ids {sorted(stray)} were not sampled")
    return sampled, opt


# ---------------------------------------------------------------------------
# Gamma / Beta variates


def gamma_sample(shape: float, rng: RngStream) -> float:
    """Standard Gamma(shape, 1) variate, Marsaglia & Tsang (2000).

    Shapes below 1 use the boost ``G(a) = G(a + 1) * U^(1/a)``.
    """
    if not shape > 0:
        raise ValueError(f"gamma shape must be > 0, got {shape}")
    if shape < 1.0:
        u = rng.random()
        return gamma_sample(shape + 1.0, rng) * u ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = rng.random()
        if u < 1.0 - 0.0331 * x**4:
            return d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return d * v


def beta_sample(alpha: float, beta: float, rng: RngStream) -> float:
    """Beta(alpha, beta) variate as ``X / (X + Y)`` with independent Gamma draws."""
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"beta parameters must be > 0, got ({alpha}, {beta})")
    while True:
        x = gamma_sample(alpha, rng)
        y = gamma_sample(beta, rng)
        s = x + y
        # keep the result strictly inside (0, 1)
        if s > 0 and x > 0 and y > 0:
            return x / s


# ---------------------------------------------------------------------------
# UCB


@dataclass
class UcbState:
    mu_hat: np.ndarray
    pulls: np.ndarray

    def __post_init__(self):
        self.mu_hat = np.asarray(self.mu_hat, dtype=np.float64)
        self.pulls = np.asarray(self.pulls, dtype=np.int64)
        if self.mu_hat.shape != self.pulls.shape:
            raise ValueError("mu_hat and pulls must have one entry per client")

    def copy(self) -> "UcbState":
        return UcbState(self.mu_hat.copy(), self.pulls.copy())

    def to_dict(self) -> dict:
        return {"kind": "ucb", "mu_hat": self.mu_hat.tolist(), "pulls": self.pulls.tolist()}

    @classmethod
    def from_dict(cls, raw: dict) -> "UcbState":
        return cls(raw["mu_hat"], raw["pulls"])


def ucb_init(num_clients: int, rng: RngStream) -> UcbState:
    """One pseudo-pull per client with a Bernoulli(0.5) starting mean."""
    mu = (rng.random(num_clients) < 0.5).astype(np.float64)
    return UcbState(mu, np.ones(num_clients, dtype=np.int64))


def ucb_scores(state: UcbState, t: int) -> np.ndarray:
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    return state.mu_hat + np.sqrt(3.0 * math.log(t) / (2.0 * state.pulls))


def ucb_update_and_select(
    state: UcbState,
    prev_sampled: Iterable[int],
    prev_opt: Iterable[int],
    t: int,
    m: int,
) -> tuple[UcbState, SamplingOutcome]:
    """Fold last round's filter feedback into the running means, then take the top ``m`` bounds.

    ``t`` is the 1-based round index used in the exploration bonus.
    """
    sampled, opt = _check_feedback(prev_sampled, prev_opt)
    new = state.copy()
    for k in sampled:
        r = 1.0 if k in opt else 0.0
        a = new.pulls[k]
        new.mu_hat[k] = (a * new.mu_hat[k] + r) / (a + 1)
        new.pulls[k] = a + 1
    bounds = ucb_scores(new, t)
    chosen = top_m(bounds, m)
    return new, SamplingOutcome(chosen, {k: float(v) for k, v in enumerate(bounds)})


# ---------------------------------------------------------------------------
# Thompson sampling


@dataclass
class TsState:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have one entry per client")

    def copy(self) -> "TsState":
        return TsState(self.alpha.copy(), self.beta.copy())

    def to_dict(self) -> dict:
        return {"kind": "ts", "alpha": self.alpha.tolist(), "beta": self.beta.tolist()}

    @classmethod
    def from_dict(cls, raw: dict) -> "TsState":
        return cls(raw["alpha"], raw["beta"])


def ts_init(num_clients: int) -> TsState:
    return TsState(np.ones(num_clients), np.ones(num_clients))


def ts_update_and_select(
    state: TsState,
    prev_sampled: Iterable[int],
    prev_opt: Iterable[int],
    m: int,
    rng: RngStream,
) -> tuple[TsState, SamplingOutcome]:
    """Posterior update for last round's clients, then one Beta draw per client.

    Client ``k`` draws from ``rng.derive(k)`` so the draws do not depend on
    evaluation order.
    """
    sampled, opt = _check_feedback(prev_sampled, prev_opt)
    new = state.copy()
    for k in sampled:
        r = 1.0 if k in opt else 0.0
        new.alpha[k] += r
        new.beta[k] += 1.0 - r
    theta = np.array(
        [beta_sample(a, b, rng.derive(k)) for k, (a, b) in enumerate(zip(new.alpha, new.beta))]
    )
    chosen = top_m(theta, m)
    return new, SamplingOutcome(chosen, {k: float(v) for k, v in enumerate(theta)})


def state_from_dict(raw: dict) -> UcbState | TsState:
    kinds = {"ucb": UcbState, "ts": TsState}
    try:
        return kinds[raw["kind"]].from_dict(raw)
    except KeyError:
        raise ValueError(f"unknown sampler state kind {raw.get('kind')!r}") from None
