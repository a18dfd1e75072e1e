"""Metric samples, summaries and budget verdicts."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .config import Budget

CSV_HEADER = ("scenario", "seed", "metric", "unit", "value")


@dataclass(frozen=True)
class Sample:
    scenario: str
    seed: int
    metric: str
    unit: str
    value: float


@dataclass(frozen=True)
class Summary:
    count: int
    min: float
    median: float
    mean: float
    p99: float
    max: float

    def stat(self, name: str) -> float:
        return getattr(self, name)

    def to_json(self) -> dict:
        return {k: _num(getattr(self, k)) for k in ("count", "min", "median", "mean", "p99", "max")}


def percentile(values: list[float], q: float) -> float:
    """Nearest-rank percentile of a non-empty list."""
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def summarize(values: Iterable[float]) -> Summary:
    vals = list(values)
    if not vals:
        raise ValueError("cannot summarize an empty sample set")
    return Summary(len(vals), min(vals), statistics.median(vals), statistics.fmean(vals), percentile(vals, 99), max(vals))


@dataclass(frozen=True)
class BudgetVerdict:
    budget: Budget
    observed: float | None
    passed: bool

    def to_json(self) -> dict:
        return {
            "metric": self.budget.metric,
            "stat": self.budget.stat,
            "op": self.budget.op,
            "bound": _num(self.budget.value),
            "observed": None if self.observed is None else _num(self.observed),
            "passed": self.passed,
        }

    def line(self) -> str:
        seen = "missing" if self.observed is None else format_value(self.observed)
        return f"{'PASS' if self.passed else 'FAIL'} {self.budget.describe()} (observed {seen})"


def format_value(v: float) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer() and abs(v) < 1e15):
        return str(int(v))
    return repr(round(float(v), 6))


def _num(v: float):
    if isinstance(v, int) or (isinstance(v, float) and v.is_integer() and abs(v) < 1e15):
        return int(v)
    return round(float(v), 6)


class MetricsReport:
    def __init__(self, scenario: str, seed: int, budgets: Iterable[Budget] = ()):
        self.scenario = scenario
        self.seed = seed
        self.samples: list[Sample] = []
        self.budgets: list[Budget] = list(budgets)
        self.info: dict[str, object] = {}

    def add(self, metric: str, unit: str, value: float) -> None:
        self.samples.append(Sample(self.scenario, self.seed, metric, unit, value))

    def extend(self, metric: str, unit: str, values: Iterable[float]) -> None:
        for v in values:
            self.add(metric, unit, v)

    def values(self, metric: str) -> list[float]:
        return [s.value for s in self.samples if s.metric == metric]

    def metrics(self) -> list[str]:
        return list(dict.fromkeys(s.metric for s in self.samples))

    def summaries(self) -> dict[str, Summary]:
        return {m: summarize(self.values(m)) for m in self.metrics()}

    def verdicts(self) -> list[BudgetVerdict]:
        sums = self.summaries()
        out = []
        for b in self.budgets:
            s = sums.get(b.metric)
            observed = None if s is None else s.stat(b.stat)
            out.append(BudgetVerdict(b, observed, observed is not None and b.check(observed)))
        return out

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in self.samples:
            w.writerow([s.scenario, s.seed, s.metric, s.unit, format_value(s.value)])
        return buf.getvalue()

    def to_json(self) -> dict:
        units = {s.metric: s.unit for s in self.samples}
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "info": self.info,
            "samples": [{"metric": s.metric, "unit": s.unit, "value": _num(s.value)} for s in self.samples],
            "summary": {m: {"unit": units[m], **s.to_json()} for m, s in self.summaries().items()},
            "budgets": [v.to_json() for v in self.verdicts()],
            "passed": self.passed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.scenario}-seed{self.seed}"
        written = []
        if fmt == "csv":
            path = out / f"{stem}.csv"
            path.write_text(self.to_csv())
            written.append(path)
        path = out / f"{stem}.json"
        path.write_text(self.dumps())
        written.append(path)
        return written


def read_csv(text: str) -> list[Sample]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("not a metrics CSV")
    return [Sample(r[0], int(r[1]), r[2], r[3], float(r[4])) for r in rows[1:]]


def merge_csv(reports: Iterable[MetricsReport]) -> str:
    reports = list(reports)
    header = ",".join(CSV_HEADER) + "\n"
    return header + "".join(r.to_csv()[len(header):] for r in reports)
