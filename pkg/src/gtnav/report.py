"""Metric tables, statistics reports and summary plots.

Metric table columns (tab separated)::

    scenario condition agent plr pr cpd reached_goal

Stats report columns::

    metric test groups statistic p_value detail

Floats are written with 9 decimals; undefined values as ``nan``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateDataError, InputDomainError, ParseError
from .metrics import CONDITIONS, MetricReport
from .stats import bonferroni_posthoc, bootstrap, comparison_interval, kruskal_wallis, levene
from .svg import bar_chart

METRIC_COLUMNS = ("scenario", "condition", "agent", "plr", "pr", "cpd", "reached_goal")
STATS_COLUMNS = ("metric", "test", "groups", "statistic", "p_value", "detail")
METRICS = ("plr", "pr", "cpd")


def _f(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{float(v):.9f}"


def _sort_key(r: MetricReport):
    return (r.scenario_id, CONDITIONS.index(r.condition), r.agent_id)


def write_metrics_table(reports: Sequence[MetricReport], path: Union[str, Path]) -> None:
    lines = ["\t".join(METRIC_COLUMNS)]
    for r in sorted(reports, key=_sort_key):
        lines.append("\t".join([r.scenario_id, r.condition, r.agent_id, _f(r.plr), _f(r.pr), _f(r.cpd),
                                "1" if r.reached_goal else "0"]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics_table(path: Union[str, Path]) -> list[MetricReport]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != METRIC_COLUMNS:
        raise ParseError("not a metric table (bad header)", path, 1)
    out = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        c = line.split("\t")
        if len(c) != len(METRIC_COLUMNS):
            raise ParseError(f"expected {len(METRIC_COLUMNS)} fields", path, n)
        try:
            out.append(MetricReport(c[0], c[1], c[2], float(c[3]), float(c[4]), float(c[5]), c[6] == "1"))
        except (ValueError, InputDomainError) as exc:
            raise ParseError(str(exc), path, n) from None
    return out


@dataclass(frozen=True)
class StatRow:
    metric: str
    test: str
    groups: tuple[str, ...]
    statistic: float
    p_value: float
    detail: str = ""

    def fields(self) -> list[str]:
        return [self.metric, self.test, ",".join(self.groups), _f(self.statistic), _f(self.p_value), self.detail]


def metric_groups(reports: Sequence[MetricReport], metric: str) -> dict[str, np.ndarray]:
    """Finite values of ``metric`` per condition, in canonical condition order."""
    out = {}
    for cond in CONDITIONS:
        vals = [getattr(r, metric) for r in sorted(reports, key=_sort_key) if r.condition == cond]
        vals = np.array([v for v in vals if math.isfinite(v)], dtype=float)
        if len(vals):
            out[cond] = vals
    return out


def compute_stats(reports: Sequence[MetricReport], alpha: float = 0.05) -> list[StatRow]:
    """Kruskal-Wallis, Brown-Forsythe and Bonferroni post-hoc per metric."""
    rows = []
    for metric in METRICS:
        groups = metric_groups(reports, metric)
        labels = tuple(groups)
        data = [groups[c] for c in labels]
        if len(labels) < 2:
            continue
        try:
            kw = kruskal_wallis(data, labels)
            ranks = ",".join(f"{k}:{v:.6f}" for k, v in kw.detail["mean_ranks"].items())
            rows.append(StatRow(metric, kw.method.value, labels, kw.statistic, kw.p_value, f"mean_ranks={ranks}"))
        except (DegenerateDataError, InputDomainError) as exc:
            rows.append(StatRow(metric, "KruskalWallis", labels, math.nan, math.nan, f"skipped: {exc}"))
        try:
            lv = levene(data, labels)
            spread = ",".join(f"{k}:{v:.9f}" for k, v in lv.detail["spread"].items())
            rows.append(StatRow(metric, lv.method.value, labels, lv.statistic, lv.p_value, f"spread={spread}"))
        except (DegenerateDataError, InputDomainError) as exc:
            rows.append(StatRow(metric, "Levene", labels, math.nan, math.nan, f"skipped: {exc}"))
        for r in bonferroni_posthoc(data, alpha, labels):
            rows.append(StatRow(metric, r.method.value, r.groups, r.statistic, r.p_value,
                                f"raw_p={r.detail['raw_p']:.9f},reject={int(r.detail['reject'])}"))
    return rows


def write_stats_table(rows: Sequence[StatRow], path: Union[str, Path]) -> None:
    lines = ["\t".join(STATS_COLUMNS)] + ["\t".join(r.fields()) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def bootstrap_means(reports: Sequence[MetricReport], seed: int, iterations: int,
                    fraction: float = 0.8) -> dict:
    """Seeded subset-bootstrap of each condition's mean metric.

    Returns ``{metric: {condition: (low, high)}}`` with the 2.5 and 97.5
    percentiles of the subset means.
    """
    out = {}
    for i, metric in enumerate(METRICS):
        out[metric] = {}
        for j, (cond, vals) in enumerate(metric_groups(reports, metric).items()):
            size = max(1, int(math.floor(fraction * len(vals))))
            # disjoint seed blocks per (metric, condition) cell
            s = seed + (i * len(CONDITIONS) + j) * iterations
            means = bootstrap(vals, size, iterations, s, lambda x: float(np.mean(x)))
            out[metric][cond] = (float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5)))
    return out


def summary(reports: Sequence[MetricReport], rows: Sequence[StatRow], boot: dict, extra: dict) -> dict:
    means = {}
    for metric in METRICS:
        means[metric] = {}
        for cond, vals in metric_groups(reports, metric).items():
            m, h = comparison_interval(vals)
            means[metric][cond] = {"n": int(len(vals)), "mean": round(m, 9), "interval_half_width": round(h, 9)}
            if metric in boot and cond in boot[metric]:
                lo, hi = boot[metric][cond]
                means[metric][cond]["bootstrap_95"] = [round(lo, 9), round(hi, 9)]
    tests = [{"metric": r.metric, "test": r.test, "groups": list(r.groups),
              "statistic": None if math.isnan(r.statistic) else round(r.statistic, 9),
              "p_value": None if math.isnan(r.p_value) else round(r.p_value, 9), "detail": r.detail}
             for r in rows]
    return {**extra, "metrics": means, "tests": tests}


def write_summary(data: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_plots(reports: Sequence[MetricReport], directory: Union[str, Path]) -> list[Path]:
    """One bar chart per metric: condition means with comparison intervals."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in METRICS:
        groups = metric_groups(reports, metric)
        if not groups:
            continue
        labels = list(groups)
        ci = [comparison_interval(groups[c]) for c in labels]
        svg = bar_chart(labels, [m for m, _ in ci], [h for _, h in ci], title=f"mean {metric.upper()}")
        p = d / f"{metric}.svg"
        p.write_text(svg, encoding="utf-8")
        paths.append(p)
    return paths
