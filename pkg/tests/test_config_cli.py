import json
import statistics

import pytest

from fedcm.cli import main, run_suite
from fedcm.config import dump_config, parse_config, parse_config_text
from fedcm.data import PartitionManifest
from fedcm.orchestrator import Algorithm, ConfigError, RoundRecord
from fedcm.report import RunOutcome, comparison_table, format_speedup, read_round_csv, round_csv

TINY = """
[suite]
algorithms = FedAvg
seeds = 3

[federation]
num_clients = 4
sampling_ratio = 0.5
rounds = 2
val_per_class = 5

[partition]
examples_per_client = 20

[dataset]
num_classes = 3
dim = 4
per_class = 40
test_per_class = 20
"""


def write(tmp_path, text, name="suite.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_file_fills_defaults(tmp_path):
    suite = parse_config(write(tmp_path, "[federation]\nrounds = 3\n"))
    assert suite.base.rounds == 3
    assert suite.base.num_clients == 20
    assert suite.algorithms == (Algorithm.FEDCA,)
    assert suite.seeds == (0,)
    assert suite.prox_mu == 0.1


def test_sampling_ratio_zero_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config_text("[federation]\nsampling_ratio = 0\n")
    assert any("sampling_ratio" in v for v in info.value.violations)


def test_unknown_keys_and_all_violations_reported():
    text = "[federation]\nroundz = 3\nnum_clients = many\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    v = info.value.violations
    assert any("federation.roundz" in s for s in v)
    assert any("[extra]" in s for s in v)
    assert any("num_clients" in s for s in v)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        parse_config("/nonexistent/suite.ini")


@pytest.mark.parametrize(
    "text",
    [
        TINY,
        "[federation]\nrounds = 3\n",
        "[suite]\nalgorithms = FedAvg, FedProx, FedCM_TS\nseeds = 1, 2\ntargets = 0.5, 0.75\n"
        "[local]\neta = 0.013\nmomentum = 0.9\nweight_decay = 0.0005\n"
        "[partition]\nscheme = ClientHeterogeneity\nalpha = 5.0\n"
        "[model]\narchitecture = MLP1\nhidden_units = 16\n",
    ],
)
def test_round_trip(text):
    suite = parse_config_text(text)
    assert parse_config_text(dump_config(suite)) == suite


def test_run_suite_writes_one_csv(tmp_path):
    suite = parse_config(write(tmp_path, TINY))
    out = tmp_path / "out"
    assert run_suite(suite, out) == 0
    csvs = sorted(out.glob("*.csv"))
    assert [p.name for p in csvs] == ["FedAvg_seed3.csv"]
    rows = read_round_csv(csvs[0].read_text())
    assert len(rows) == 2
    assert list(rows[0]) == ["round", "algorithm", "sampled_ids", "filtered_ids", "val_score", "test_acc", "subsets_evaluated", "wall_ms"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["runs"][0]["status"] == "ok"
    assert (out / "comparison.md").exists()


def test_run_suite_outputs_are_reproducible(tmp_path):
    text = TINY.replace("algorithms = FedAvg", "algorithms = FedAvg, FedCM_UCB").replace("seeds = 3", "seeds = 3, 4")
    suite = parse_config(write(tmp_path, text))
    run_suite(suite, tmp_path / "a", threads=1)
    run_suite(suite, tmp_path / "b", threads=3)
    names = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "metadata.json")
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir() if p.name != "metadata.json")
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_failed_run_is_recorded_and_others_continue(tmp_path, monkeypatch):
    import fedcm.cli as cli

    real = cli.run_experiment

    def flaky(cfg, threads=1):
        if cfg.seed == 4:
            raise FloatingPointError("boom")
        return real(cfg, threads=threads)

    monkeypatch.setattr(cli, "run_experiment", flaky)
    suite = parse_config(write(tmp_path, TINY.replace("seeds = 3", "seeds = 3, 4")))
    assert run_suite(suite, tmp_path / "out") == 1
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert [r["status"] for r in summary["runs"]] == ["ok", "failed"]
    assert (tmp_path / "out" / "FedAvg_seed3.csv").exists()


def rec(t, acc):
    return RoundRecord(t, "x", (0,), None, 0.0, acc, 0, 0.0)


def test_summary_std_is_sample_std():
    runs = [
        RunOutcome("FedAvg", 0, [rec(0, 0.40)]),
        RunOutcome("FedAvg", 1, [rec(0, 0.46)]),
    ]
    table = comparison_table(runs, ["FedAvg"], "FedAvg")
    mean, std = 43.0, statistics.stdev([40.0, 46.0])
    assert f"{mean:.2f} ± {std:.2f}" in table
    assert abs(std - (((40 - 43) ** 2 + (46 - 43) ** 2) / 1) ** 0.5) < 1e-12


def test_speedup_column():
    base = [rec(t, t / 100) for t in range(100)]
    fast = [rec(t, min(1.0, t / 10)) for t in range(100)]
    runs = [RunOutcome("FedAvg", 0, base), RunOutcome("FedCM_TS", 0, fast)]
    table = comparison_table(runs, ["FedAvg", "FedCM_TS"], "FedAvg")
    # FedAvg reaches its own final accuracy (0.99) at round index 99 -> 100 rounds
    assert "| FedAvg | 99.00 | 100 (1×) |" in table
    # FedCM_TS reaches 0.99 at index 10 -> 11 rounds -> 100/11
    assert f"11 ({100 / 11:.2f}×)" in table
    assert format_speedup(1.0) == "1×"
    assert format_speedup(100 / 24) == "4.17×"


def test_round_csv_ids_and_blank_timing():
    r = RoundRecord(0, "FedCA", (3, 1, 7), (1, 7), -0.5, 0.25, 7, 0.123)
    rows = read_round_csv(round_csv([r]))
    assert rows[0]["sampled_ids"] == "3+1+7"
    assert rows[0]["filtered_ids"] == "1+7"
    assert rows[0]["wall_ms"] == ""
    assert read_round_csv(round_csv([r], include_timing=True))[0]["wall_ms"] == "123.000"


def test_cli_run_and_partition(tmp_path, capsys):
    cfg = write(tmp_path, TINY)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "--algorithms", "FedPdp,FedCA", "--seeds", "5"]) == 0
    assert sorted(p.name for p in out.glob("*.csv")) == ["FedCA_seed5.csv", "FedPdp_seed5.csv"]
    manifest = tmp_path / "m.json"
    assert main(["partition", str(cfg), "--manifest", str(manifest)]) == 0
    m = PartitionManifest.read(manifest)
    assert m.seed == 3 and len(m.shards) == 4
    assert all(len(s) == 20 for s in m.shards)


def test_cli_reports_config_errors(tmp_path, capsys):
    cfg = write(tmp_path, "[federation]\nsampling_ratio = 0\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "sampling_ratio" in capsys.readouterr().err
