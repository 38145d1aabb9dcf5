"""Round logs, suite summaries and the comparison table."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from typing import Sequence

from .orchestrator import RoundRecord, rounds_to_target

ROUND_COLUMNS = (
    "round",
    "algorithm",
    "sampled_ids",
    "filtered_ids",
    "val_score",
    "test_acc",
    "subsets_evaluated",
    "wall_ms",
)


def join_ids(ids) -> str:
    return "" if ids is None else "+".join(str(int(k)) for k in ids)


def round_csv(records: Sequence[RoundRecord], include_timing: bool = False) -> str:
    """Render the per-round log.

    ``wall_ms`` is left blank unless ``include_timing`` is set, which keeps the
    file byte-identical across replays.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROUND_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.round,
                r.algorithm,
                join_ids(r.sampled),
                join_ids(r.filtered),
                repr(r.val_score),
                repr(r.test_accuracy),
                r.subsets_evaluated,
                f"{1000 * r.wall_time:.3f}" if include_timing else "",
            ]
        )
    return buf.getvalue()


def read_round_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def sample_std(values: Sequence[float]) -> float | None:
    return statistics.stdev(values) if len(values) >= 2 else None


def format_speedup(ratio: float) -> str:
    if math.isclose(ratio, 1.0, rel_tol=0, abs_tol=5e-3):
        return "1×"
    return f"{ratio:.2f}×"


@dataclass
class RunOutcome:
    algorithm: str
    seed: int
    records: list[RoundRecord] = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def final_accuracy(self) -> float | None:
        return self.records[-1].test_accuracy if self.records else None


def speedup_rows(runs: Sequence[RunOutcome], baseline: str) -> dict[str, dict]:
    """Rounds (1-based counts) to reach the baseline's final accuracy, seed by seed.

    Returns per algorithm the mean count over seeds and its ratio against the
    baseline's own count; ``None`` when some seed never reached the target.
    """
    base_by_seed = {r.seed: r for r in runs if r.algorithm == baseline and r.ok and r.records}
    counts: dict[str, list[int | None]] = {}
    for r in runs:
        if not r.ok or r.seed not in base_by_seed:
            continue
        target = base_by_seed[r.seed].final_accuracy
        t = rounds_to_target(r.records, target)
        counts.setdefault(r.algorithm, []).append(None if t is None else t + 1)
    if baseline not in counts:
        return {}
    base_mean = statistics.fmean(counts[baseline])
    out = {}
    for alg, cs in counts.items():
        if any(c is None for c in cs):
            out[alg] = {"rounds": None, "speedup": None}
            continue
        mean = statistics.fmean(cs)
        out[alg] = {"rounds": mean, "speedup": base_mean / mean}
    return out


def comparison_table(runs: Sequence[RunOutcome], algorithms: Sequence[str], baseline: str) -> str:
    speed = speedup_rows(runs, baseline)
    lines = [
        f"| algorithm | final test accuracy (%) | rounds to {baseline} accuracy |",
        "|---|---|---|",
    ]
    for alg in algorithms:
        accs = [100 * r.final_accuracy for r in runs if r.algorithm == alg and r.ok and r.records]
        if accs:
            std = sample_std(accs)
            acc_txt = f"{statistics.fmean(accs):.2f}" + ("" if std is None else f" ± {std:.2f}")
        else:
            acc_txt = "-"
        s = speed.get(alg)
        if s is None or s["rounds"] is None:
            speed_txt = "-"
        else:
            rounds = s["rounds"]
            rounds_txt = f"{rounds:.0f}" if float(rounds).is_integer() else f"{rounds:.1f}"
            speed_txt = f"{rounds_txt} ({format_speedup(s['speedup'])})"
        lines.append(f"| {alg} | {acc_txt} | {speed_txt} |")
    return "\n".join(lines) + "\n"


def summarize(runs: Sequence[RunOutcome], algorithms: Sequence[str], targets: Sequence[float], baseline: str) -> dict:
    per_run = []
    for r in runs:
        entry = {"algorithm": r.algorithm, "seed": r.seed, "status": "ok" if r.ok else "failed"}
        if r.ok:
            entry["final_accuracy"] = r.final_accuracy
            entry["rounds_to_target"] = {repr(t): rounds_to_target(r.records, t) for t in targets}
        else:
            entry["error"] = r.error
        per_run.append(entry)
    per_alg = {}
    for alg in algorithms:
        accs = [r.final_accuracy for r in runs if r.algorithm == alg and r.ok and r.records]
        per_alg[alg] = {
            "seeds": len(accs),
            "mean_final_accuracy": statistics.fmean(accs) if accs else None,
            "std_final_accuracy": sample_std(accs),
        }
    return {
        "runs": per_run,
        "aggregates": per_alg,
        "speedup_vs_baseline": {"baseline": baseline, **speedup_rows(runs, baseline)},
    }
