"""Savings metrics and their aggregation."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

GLOBAL_AVG_CI = 368.39
METRICS = ("relative_pct", "absolute", "relative_to_global_pct")
# report CSV columns after the group labels
REPORT_COLUMNS = ("metric", "mean", "std", "n")


class MetricsError(ValueError):
    pass


def relative_savings(baseline: float, shifted: float) -> float:
    """Percent reduction of ``shifted`` emissions against ``baseline``."""
    if not baseline > 0:
        raise MetricsError(f"baseline emissions must be positive, got {baseline}")
    return 100.0 * (baseline - shifted) / baseline


def relative_to_global(absolute_per_hour: float, global_avg: float = GLOBAL_AVG_CI) -> float:
    if not global_avg > 0:
        raise MetricsError(f"global average must be positive, got {global_avg}")
    return 100.0 * absolute_per_hour / global_avg


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation, fixed-order and compensated."""
    n = len(values)
    if n == 0:
        raise MetricsError("mean of an empty sequence")
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class SavingsReport:
    relative_pct: float
    absolute: float
    relative_to_global_pct: float
    labels: Mapping[str, object] = field(default_factory=dict)
    relative_pct_std: float = 0.0
    absolute_std: float = 0.0
    relative_to_global_pct_std: float = 0.0
    n: int = 1

    @classmethod
    def from_emissions(
        cls, baseline: float, shifted: float, hours: float, global_avg: float = GLOBAL_AVG_CI, **labels
    ) -> "SavingsReport":
        """Report for one placement; ``absolute`` is per hour of job runtime."""
        absolute = (baseline - shifted) / hours
        rel = relative_savings(baseline, shifted) if baseline > 0 else 0.0
        return cls(rel, absolute, relative_to_global(absolute, global_avg), labels)

    def value(self, metric: str) -> float:
        return getattr(self, metric)

    def std(self, metric: str) -> float:
        return getattr(self, metric + "_std")


def _group_key(report: SavingsReport, group_by: Sequence[str]) -> tuple:
    try:
        return tuple(report.labels[g] for g in group_by)
    except KeyError as exc:
        raise MetricsError(f"report missing grouping label {exc.args[0]!r}") from None


def _sort_key(key: tuple):
    return tuple((0, v) if isinstance(v, (int, float)) else (1, str(v)) for v in key)


def aggregate(reports: Iterable[SavingsReport], group_by: Sequence[str] = ()) -> list[SavingsReport]:
    """Mean and population std of every metric per group, ordered by group key."""
    group_by = tuple(group_by)
    groups: dict[tuple, list[SavingsReport]] = {}
    for r in reports:
        groups.setdefault(_group_key(r, group_by), []).append(r)
    if not groups:
        raise MetricsError("nothing to aggregate")
    out = []
    for key in sorted(groups, key=_sort_key):
        members = groups[key]
        stats = {}
        for m in METRICS:
            mean, std = mean_std([r.value(m) for r in members])
            stats[m] = mean
            stats[m + "_std"] = std
        out.append(SavingsReport(labels=dict(zip(group_by, key)), n=len(members), **stats))
    return out


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def reports_to_csv(reports: Sequence[SavingsReport], group_by: Sequence[str]) -> str:
    """Long format: group labels, then ``metric,mean,std,n``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*group_by, *REPORT_COLUMNS])
    for r in reports:
        labels = [_fmt(r.labels[g]) for g in group_by]
        for m in METRICS:
            w.writerow([*labels, m, _fmt(r.value(m)), _fmt(r.std(m)), r.n])
    return buf.getvalue()


def reports_to_json(reports: Sequence[SavingsReport], group_by: Sequence[str]) -> str:
    """Nested by group key, one level per grouping label."""
    root: dict = {}
    for r in reports:
        node = root
        for g in group_by:
            node = node.setdefault(_fmt(r.labels[g]), {})
        for m in METRICS:
            node[m] = {"mean": r.value(m), "std": r.std(m)}
        node["n"] = r.n
    return json.dumps(root, indent=2, sort_keys=False) + "\n"
