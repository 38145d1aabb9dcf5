"""INI-style experiment configuration.

Example::

    [suite]
    algorithms = FedAvg, FedPdp, FedCA, FedCM_TS
    seeds = 0, 1
    targets = 0.5, 0.6
    baseline = FedAvg

    [federation]
    num_clients = 20
    sampling_ratio = 0.4
    rounds = 50
    score_fn = ClassificationLoss
    val_per_class = 50
    client_weights = DataProportional

    [local]
    eta = 0.05
    momentum = 0.0
    weight_decay = 0.0
    prox_mu = 0.1
    batch_size = 32
    local_epochs = 1

    [partition]
    scheme = ClassHeterogeneity
    alpha = 0.1
    examples_per_client = 100

    [model]
    architecture = LogisticRegression
    hidden_units = 0

    [dataset]
    num_classes = 10
    dim = 20
    per_class = 300
    test_per_class = 200
    separation = 2.0

Every section and key is optional; omitted values take the defaults shown
above. Unknown sections or keys are rejected. ``prox_mu`` is only used by
FedProx; every other algorithm trains without the proximal term.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from pathlib import Path

from .aggregation import ScoreFunction
from .data import PartitionScheme, PartitionSpec
from .model import Architecture, LocalHyper, ModelSpec
from .orchestrator import (
    Algorithm,
    ClientWeighting,
    ConfigError,
    DatasetSpec,
    FederationConfig,
    with_algorithm,
)


def _csv(cast):
    def parse(text: str):
        items = [s.strip() for s in text.split(",") if s.strip()]
        return [cast(s) for s in items]

    return parse


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "suite": {
        "algorithms": (_csv(Algorithm), None),
        "seeds": (_csv(int), [0]),
        "targets": (_csv(float), []),
        "baseline": (Algorithm, Algorithm.FEDAVG),
    },
    "federation": {
        "num_clients": (int, 20),
        "sampling_ratio": (float, 0.4),
        "rounds": (int, 50),
        "algorithm": (Algorithm, Algorithm.FEDCA),
        "score_fn": (ScoreFunction, ScoreFunction.CLASSIFICATION_LOSS),
        "val_per_class": (int, 50),
        "seed": (int, 0),
        "client_weights": (ClientWeighting, ClientWeighting.DATA_PROPORTIONAL),
    },
    "local": {
        "eta": (float, 0.05),
        "momentum": (float, 0.0),
        "weight_decay": (float, 0.0),
        "prox_mu": (float, 0.1),
        "batch_size": (int, 32),
        "local_epochs": (int, 1),
    },
    "partition": {
        "scheme": (PartitionScheme, PartitionScheme.CLASS_HETEROGENEITY),
        "alpha": (float, 0.1),
        "examples_per_client": (int, 100),
    },
    "model": {
        "architecture": (Architecture, Architecture.LOGISTIC_REGRESSION),
        "hidden_units": (int, 0),
    },
    "dataset": {
        "num_classes": (int, 10),
        "dim": (int, 20),
        "per_class": (int, 300),
        "test_per_class": (int, 200),
        "separation": (float, 2.0),
    },
}


@dataclass(frozen=True)
class ExperimentSuite:
    base: FederationConfig
    algorithms: tuple[Algorithm, ...]
    seeds: tuple[int, ...]
    targets: tuple[float, ...] = ()
    baseline: Algorithm = Algorithm.FEDAVG
    # the FedProx proximal weight; the base config itself may carry prox_mu = 0
    prox_mu: float = 0.1

    def configs(self):
        for algorithm in self.algorithms:
            for seed in self.seeds:
                yield algorithm, seed, run_config(self.base, algorithm, seed, self.prox_mu)


def run_config(base: FederationConfig, algorithm: Algorithm, seed: int, prox_mu: float) -> FederationConfig:
    cfg = with_algorithm(base, algorithm, seed)
    if cfg.algorithm is Algorithm.FEDPROX:
        cfg = replace(cfg, local=replace(cfg.local, prox_mu=prox_mu))
    elif cfg.local.prox_mu != 0:
        cfg = replace(cfg, local=replace(cfg.local, prox_mu=0.0))
    return cfg


def parse_config_text(text: str, source: str = "<string>") -> ExperimentSuite:
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00unused")
    cp.optionxform = str  # keys are case-sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: {exc}"]) from None

    errors: list[str] = []
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}]")
    for section, keys in SCHEMA.items():
        values[section] = {}
        present = cp[section] if cp.has_section(section) else {}
        for key in present:
            if key not in keys:
                errors.append(f"unknown key {section}.{key}")
        for key, (parse, default) in keys.items():
            if key in present:
                raw = present[key]
                try:
                    values[section][key] = parse(raw)
                except (ValueError, TypeError) as exc:
                    errors.append(f"{section}.{key} = {raw!r}: {exc}")
            else:
                values[section][key] = default
    if errors:
        raise ConfigError(errors)

    fed, loc, part, mdl, dset, suite = (
        values[s] for s in ("federation", "local", "partition", "model", "dataset", "suite")
    )

    def build(what: str, fn):
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            errors.append(f"{what}: {exc}")
            return None

    prox_mu = loc["prox_mu"]
    local = build("local", lambda: LocalHyper(**{**loc, "prox_mu": 0.0}))
    if not prox_mu > 0:
        errors.append(f"local.prox_mu must be > 0 (got {prox_mu})")
    pspec = build(
        "partition",
        lambda: PartitionSpec(part["scheme"], part["alpha"], fed["num_clients"], part["examples_per_client"]),
    )
    mspec = build(
        "model",
        lambda: ModelSpec(mdl["architecture"], dset["dim"], dset["num_classes"], mdl["hidden_units"]),
    )
    dspec = DatasetSpec(**dset)
    if dspec.per_class < 1 or dspec.num_classes < 1 or dspec.dim < 1:
        errors.append("dataset.num_classes, dataset.dim and dataset.per_class must be positive")
    if not suite["seeds"]:
        errors.append("suite.seeds must list at least one seed")
    algorithms = suite["algorithms"] if suite["algorithms"] is not None else [fed["algorithm"]]
    if not algorithms:
        errors.append("suite.algorithms must list at least one algorithm")
    if errors:
        raise ConfigError(errors)

    base = FederationConfig(
        num_clients=fed["num_clients"],
        sampling_ratio=fed["sampling_ratio"],
        rounds=fed["rounds"],
        algorithm=fed["algorithm"],
        score_fn=fed["score_fn"],
        local=local,
        partition=pspec,
        model=mspec,
        dataset=dspec,
        val_per_class=fed["val_per_class"],
        seed=fed["seed"],
        client_weights=fed["client_weights"],
    )
    suite_obj = ExperimentSuite(
        base=base,
        algorithms=tuple(algorithms),
        seeds=tuple(suite["seeds"]),
        targets=tuple(suite["targets"]),
        baseline=suite["baseline"],
        prox_mu=prox_mu,
    )
    for algorithm, seed, cfg in suite_obj.configs():
        errors.extend(v for v in cfg.violations() if v not in errors)
    if errors:
        raise ConfigError(errors)
    return suite_obj


def parse_config(path: str | Path) -> ExperimentSuite:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def dump_config(suite: ExperimentSuite) -> str:
    b = suite.base
    sections = {
        "suite": {
            "algorithms": ", ".join(a.value for a in suite.algorithms),
            "seeds": ", ".join(str(s) for s in suite.seeds),
            "targets": ", ".join(repr(t) for t in suite.targets),
            "baseline": suite.baseline.value,
        },
        "federation": {
            "num_clients": b.num_clients,
            "sampling_ratio": repr(b.sampling_ratio),
            "rounds": b.rounds,
            "algorithm": b.algorithm.value,
            "score_fn": b.score_fn.value,
            "val_per_class": b.val_per_class,
            "seed": b.seed,
            "client_weights": b.client_weights.value,
        },
        "local": {
            "eta": repr(b.local.eta),
            "momentum": repr(b.local.momentum),
            "weight_decay": repr(b.local.weight_decay),
            "prox_mu": repr(suite.prox_mu),
            "batch_size": b.local.batch_size,
            "local_epochs": b.local.local_epochs,
        },
        "partition": {
            "scheme": b.partition.scheme.value,
            "alpha": repr(b.partition.alpha),
            "examples_per_client": b.partition.examples_per_client or 0,
        },
        "model": {
            "architecture": b.model.architecture.value,
            "hidden_units": b.model.hidden_units,
        },
        "dataset": {
            "num_classes": b.dataset.num_classes,
            "dim": b.dataset.dim,
            "per_class": b.dataset.per_class,
            "test_per_class": b.dataset.test_per_class,
            "separation": repr(b.dataset.separation),
        },
    }
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name, body in sections.items():
        cp[name] = {k: str(v) for k, v in body.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
