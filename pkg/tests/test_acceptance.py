"""Exit criteria. Each test reports one PASS/FAIL line in the terminal summary."""

import time
from dataclasses import replace

import numpy as np
import pytest

from fedcm.aggregation import (
    FilterResult,
    ScoreFunction,
    average_ca,
    average_fedavg,
    average_mean,
    average_pdp,
    combinatorial_filter,
    score,
)
from fedcm.data import (
    Dataset,
    PartitionScheme,
    PartitionSpec,
    build_validation_set,
    mean_tv_distance,
    partition_class_heterogeneity,
    partition_client_heterogeneity,
)
from fedcm.model import Architecture, LocalHyper, ModelSpec, loss_and_grad
from fedcm.orchestrator import Algorithm, DatasetSpec, FederationConfig, rounds_to_target, run_experiment, with_algorithm
from fedcm.report import round_csv
from fedcm.rng import RngStream
from fedcm.sampling import TsState, UcbState, ts_init, ts_update_and_select, ucb_init, ucb_update_and_select

# Desk-scale analogue of the 8-of-20, E=5, alpha=0.1 class-heterogeneity setting.
EXPERIMENT = FederationConfig(
    num_clients=20,
    sampling_ratio=0.4,
    rounds=50,
    algorithm=Algorithm.FEDCA,
    score_fn=ScoreFunction.CLASSIFICATION_LOSS,
    local=LocalHyper(eta=0.05, momentum=0.0, weight_decay=0.0, batch_size=32, local_epochs=5),
    partition=PartitionSpec(PartitionScheme.CLASS_HETEROGENEITY, 0.1, 20, 100),
    model=ModelSpec(Architecture.LOGISTIC_REGRESSION, 20, 10),
    dataset=DatasetSpec(num_classes=10, dim=20, per_class=300, test_per_class=200, separation=2.0),
    val_per_class=50,
)
SEEDS = range(5)


def brute_force(models, val, spec, fn):
    ids = sorted(models)
    best_key, best = None, None
    for mask in range(1, 2 ** len(ids)):
        subset = tuple(ids[i] for i in range(len(ids)) if mask >> i & 1)
        key = (score(val, models, subset, spec, fn), len(subset), tuple(-k for k in subset))
        if best_key is None or key > best_key:
            best_key, best = key, subset
    return best, best_key[0]


@pytest.mark.criterion("filter matches brute-force enumeration (200 instances, <1 min)")
def test_filter_oracle_equivalence(criterion):
    gen = np.random.default_rng(2024)
    started = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        spec = ModelSpec(Architecture.LOGISTIC_REGRESSION, int(gen.integers(1, 5)), int(gen.integers(2, 5)))
        n = int(gen.integers(1, 11))
        ids = sorted(gen.choice(20, size=n, replace=False).tolist())
        models = {k: gen.normal(size=spec.parameter_count) for k in ids}
        m = int(gen.integers(1, 30))
        val = (gen.normal(size=(m, spec.input_dim)), gen.integers(0, spec.num_classes, size=m))
        fn = ScoreFunction.DIRAC_DELTA if gen.random() < 0.5 else ScoreFunction.CLASSIFICATION_LOSS
        got = combinatorial_filter(models, val, spec, fn)
        subset, best = brute_force(models, val, spec, fn)
        mismatches += got.optimal_subset != subset or got.score != best
    elapsed = time.perf_counter() - started
    criterion.check(mismatches == 0 and elapsed < 60, f"mismatches={mismatches} time={elapsed:.1f}s")


@pytest.mark.criterion("averaging identities to 1e-12 (100 instances each)")
def test_averaging_identities(criterion):
    gen = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        total = int(gen.integers(1, 15))
        dim = int(gen.integers(1, 20))
        p = gen.dirichlet(np.ones(total))
        p /= p.sum()
        sampled = sorted(gen.choice(total, size=int(gen.integers(1, total + 1)), replace=False).tolist())
        local = {k: gen.normal(size=dim) for k in sampled}
        full = FilterResult(tuple(sampled), 0.0, 2 ** len(sampled) - 1)
        worst = max(worst, np.abs(average_ca(local, full, p, total) - average_pdp(local, p, total)).max())
        uniform = np.full(total, 1.0 / total)
        worst = max(worst, np.abs(average_pdp(local, uniform, total) - average_mean(local)).max())
        w = gen.normal(size=dim)
        worst = max(worst, np.abs(average_fedavg(w, {}, p) - w).max())
    criterion.check(worst <= 1e-12, f"max abs deviation={worst:.2e}")


@pytest.mark.criterion("analytic vs central-difference gradients, rel. err <= 1e-4 (incl. prox_mu=0.1)")
def test_gradient_correctness(criterion):
    gen = np.random.default_rng(99)
    worst, with_prox = 0.0, 0
    for i in range(24):
        arch = Architecture.LOGISTIC_REGRESSION if i % 2 else Architecture.MLP1
        d, c = int(gen.integers(2, 6)), int(gen.integers(2, 5))
        spec = ModelSpec(arch, d, c, 4 if arch is Architecture.MLP1 else 0)
        n = int(gen.integers(2, 10))
        batch = (gen.normal(size=(n, d)), gen.integers(0, c, size=n))
        w = gen.normal(scale=0.5, size=spec.parameter_count)
        mu = 0.1 if i % 3 == 0 else 0.0
        center = gen.normal(size=w.size) if mu else None
        with_prox += mu > 0
        _, g = loss_and_grad(w, spec, batch, center, mu)
        fd = np.empty_like(w)
        for j in range(w.size):
            e = np.zeros_like(w)
            e[j] = 1e-5
            fd[j] = (loss_and_grad(w + e, spec, batch, center, mu)[0] - loss_and_grad(w - e, spec, batch, center, mu)[0]) / 2e-5
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd)))
    criterion.check(worst <= 1e-4 and with_prox >= 1, f"worst rel err={worst:.2e} over 24 instances ({with_prox} with prox)")


@pytest.mark.criterion("bandit updates, counting identities over 1000 rounds, exact-m selection")
def test_bandit_exactness(criterion):
    ucb, _ = ucb_update_and_select(UcbState([0.5], [1]), [0], [0], 2, 1)
    ts, _ = ts_update_and_select(TsState([1.0], [1.0]), [0], [0], 1, RngStream(0))
    updates_ok = (ucb.mu_hat[0], ucb.pulls[0]) == (0.75, 2) and (ts.alpha[0], ts.beta[0]) == (2.0, 1.0)

    n, m = 20, 8
    gen = np.random.default_rng(5)
    root = RngStream(5)
    ts_state, ucb_state = ts_init(n), ucb_init(n, root.derive("init"))
    init_mu = ucb_state.mu_hat.copy()
    kept, dropped = np.zeros(n), np.zeros(n)
    rewards, pulls = np.zeros(n), np.ones(n)
    prev_ts, prev_ucb = ((), ()), ((), ())
    sizes_ok = True
    for t in range(1000):
        ts_state, out_ts = ts_update_and_select(ts_state, *prev_ts, m, root.derive(t))
        ucb_state, out_ucb = ucb_update_and_select(ucb_state, *prev_ucb, t + 1, m)
        for out in (out_ts, out_ucb):
            sizes_ok &= len(out.sampled) == len(set(out.sampled)) == m
        opt_ts = tuple(k for k in out_ts.sampled if gen.random() < 0.6) or out_ts.sampled[:1]
        opt_ucb = tuple(k for k in out_ucb.sampled if gen.random() < 0.6) or out_ucb.sampled[:1]
        for k in out_ts.sampled:
            if k in opt_ts:
                kept[k] += 1
            else:
                dropped[k] += 1
        for k in out_ucb.sampled:
            rewards[k] += k in opt_ucb
            pulls[k] += 1
        prev_ts, prev_ucb = (out_ts.sampled, opt_ts), (out_ucb.sampled, opt_ucb)
    # fold in the last round's feedback
    ts_state, _ = ts_update_and_select(ts_state, *prev_ts, m, root.derive(1000))
    ucb_state, _ = ucb_update_and_select(ucb_state, *prev_ucb, 1001, m)
    counts_ok = np.array_equal(ts_state.alpha - 1, kept) and np.array_equal(ts_state.beta - 1, dropped)
    counts_ok &= np.array_equal(ucb_state.pulls, pulls)
    counts_ok &= np.abs(ucb_state.mu_hat - (init_mu + rewards) / pulls).max() <= 1e-12
    criterion.check(updates_ok and counts_ok and sizes_ok, f"updates={updates_ok} counts={counts_ok} sizes={sizes_ok}")


@pytest.mark.criterion("partition conservation (50 configs) and TV distance decreasing in alpha")
def test_partition_properties(criterion):
    gen = np.random.default_rng(11)
    conserved = 0
    for i in range(50):
        n_cls = int(gen.integers(2, 11))
        per_class = int(gen.integers(10, 80))
        labels = np.repeat(np.arange(n_cls), per_class)
        ds = Dataset(np.zeros((labels.size, 1)), labels, n_cls)
        k = int(gen.integers(1, 21))
        alpha = float(gen.choice([0.05, 0.1, 0.5, 1.0, 5.0, 100.0]))
        seed = RngStream(int(gen.integers(0, 2**31)))
        _, pool = build_validation_set(ds, int(gen.integers(0, 5)), seed.derive("val"))
        client = partition_client_heterogeneity(ds, PartitionSpec(PartitionScheme.CLIENT_HETEROGENEITY, alpha, k), seed.derive("p"), pool)
        per_client = pool.size // k
        cls = partition_class_heterogeneity(
            ds, PartitionSpec(PartitionScheme.CLASS_HETEROGENEITY, alpha, k, per_client), seed.derive("q"), pool
        ) if per_client else []
        ok_client = np.array_equal(np.sort(np.concatenate([s.indices for s in client])), pool)
        used = np.concatenate([s.indices for s in cls]) if cls else np.empty(0, int)
        # every client takes exactly pool.size // k, so the whole pool is used only when k divides it
        ok_class = (
            np.unique(used).size == used.size == per_client * k
            and np.isin(used, pool).all()
            and (per_client * k != pool.size or np.array_equal(np.sort(used), pool))
        )
        conserved += ok_client and ok_class

    labels = np.repeat(np.arange(10), 200)
    ds = Dataset(np.zeros((labels.size, 1)), labels, 10)
    tv = {}
    for scheme in PartitionScheme:
        fn = partition_client_heterogeneity if scheme is PartitionScheme.CLIENT_HETEROGENEITY else partition_class_heterogeneity
        tv[scheme.value] = [
            float(np.mean([mean_tv_distance(ds, fn(ds, PartitionSpec(scheme, a, 20, 100), RngStream(s))) for s in range(10)]))
            for a in (0.1, 1.0, 5.0)
        ]
    decreasing = all(v[0] > v[1] > v[2] for v in tv.values())
    detail = f"conserved={conserved}/50 tv=" + ", ".join(f"{k}:{[round(x, 3) for x in v]}" for k, v in tv.items())
    criterion.check(conserved == 50 and decreasing, detail)


@pytest.fixture(scope="module")
def experiment_runs():
    started = time.perf_counter()
    runs = {}
    for seed in SEEDS:
        for alg in (Algorithm.FEDAVG, Algorithm.FEDPDP, Algorithm.FEDCA, Algorithm.FEDCM_TS):
            runs[alg, seed] = run_experiment(with_algorithm(EXPERIMENT, alg, seed)).records
    return runs, time.perf_counter() - started


@pytest.mark.slow
@pytest.mark.criterion("FedCA(loss) final accuracy >= FedPdp in >=4/5 seeds, mean gain > 0 (<10 min)")
def test_filter_dominance_experiment(criterion, experiment_runs):
    runs, elapsed = experiment_runs
    gains = [runs[Algorithm.FEDCA, s][-1].test_accuracy - runs[Algorithm.FEDPDP, s][-1].test_accuracy for s in SEEDS]
    wins = sum(g >= 0 for g in gains)
    detail = f"wins={wins}/5 mean gain={100 * np.mean(gains):+.2f} pts gains={[round(100 * g, 2) for g in gains]} time={elapsed:.0f}s"
    criterion.check(wins >= 4 and np.mean(gains) > 0 and elapsed < 600, detail)


@pytest.mark.slow
@pytest.mark.criterion("rounds to FedAvg's final accuracy: FedCM-TS <= FedPdp in >=4/5 seeds")
def test_convergence_speed_experiment(criterion, experiment_runs):
    runs, _ = experiment_runs
    pairs = []
    for s in SEEDS:
        target = runs[Algorithm.FEDAVG, s][-1].test_accuracy
        ts = rounds_to_target(runs[Algorithm.FEDCM_TS, s], target)
        pdp = rounds_to_target(runs[Algorithm.FEDPDP, s], target)
        pairs.append((ts, pdp))
    # a run that never reaches the target counts as infinitely slow; TS must actually reach it
    wins = sum(ts is not None and (pdp is None or ts <= pdp) for ts, pdp in pairs)
    criterion.check(wins >= 4, f"wins={wins}/5 (ts, pdp) rounds={pairs}")


@pytest.mark.criterion("same seed at 1 and 8 threads gives byte-identical round CSVs")
def test_determinism(criterion):
    cfg = replace(EXPERIMENT, rounds=8, seed=17)
    identical = True
    for alg in (Algorithm.FEDCA, Algorithm.FEDCM_TS, Algorithm.FEDCM_UCB, Algorithm.FEDPROX):
        c = with_algorithm(cfg, alg)
        if alg is Algorithm.FEDPROX:
            c = replace(c, local=replace(c.local, prox_mu=0.1))
        one = round_csv(run_experiment(c, threads=1).records).encode()
        eight = round_csv(run_experiment(c, threads=8).records).encode()
        again = round_csv(run_experiment(c, threads=1).records).encode()
        identical &= one == eight == again
    criterion.check(identical, "FedCA, FedCM_TS, FedCM_UCB, FedProx")
