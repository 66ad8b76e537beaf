"""Experiment runner: configuration, corpus loading and the sweep commands."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import fetch as fetch_mod
from . import spatial, temporal
from .metrics import GLOBAL_AVG_CI, SavingsReport, aggregate, mean_std, reports_to_csv, reports_to_json
from .trace import (
    DEFAULT_MAX_GAP,
    DEFAULT_PERIODS,
    CarbonTrace,
    TraceError,
    classify_quadrant,
    compute_stats,
    corpus_averages,
    detect_periodicity,
    kmeans_cluster,
    load_traces,
    trend_cluster_names,
    trend_delta,
)
from .workload import (
    JOB_LENGTHS,
    Fixed,
    Job,
    Multiplier,
    OriginWeights,
    expected_savings,
    is_interactive,
    load_fraction_map,
    load_origin_weights,
    resolve_mix,
)

log = logging.getLogger(__name__)

KINDS = ("analyze", "temporal", "spatial", "latency", "capacity", "fetch")
PATH_FIELDS = ("trace_dir", "trace_dir_b", "regions", "region_sets", "latency", "load", "capacity", "out")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    trace_dir: str | None = None
    trace_dir_b: str | None = None
    regions: str | None = None
    region_sets: str | None = None
    latency: str | None = None
    load: str | None = None
    capacity: str | None = None
    headroom: float = 1.0
    kind: str | None = None
    lengths: list[float] = field(default_factory=lambda: [1, 6, 12, 24, 48, 96, 168])
    length_set: list[float] = field(default_factory=lambda: list(JOB_LENGTHS))
    slack: dict = field(default_factory=lambda: {"fixed": [24]})
    policies: list[str] = field(default_factory=lambda: ["deferred", "interrupted"])
    mix: str = "equal"
    allowed: list[str] | None = None
    matrix_regions: list[str] | None = None
    slo_grid: list[float] = field(default_factory=lambda: [0, 25, 50, 100, 200, 300])
    interval: list[int] | None = None
    periods: list[int] = field(default_factory=lambda: list(DEFAULT_PERIODS))
    per_day_cv: bool = False
    trend_thresholds: list[float] = field(default_factory=lambda: [25.0, 0.01])
    max_gap: int = DEFAULT_MAX_GAP
    out: str = "out"
    seed: int = 0
    parallelism: int = 1
    global_avg: float = GLOBAL_AVG_CI
    fetch: dict | None = None

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir=None) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - names - {"_comment"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**{k: v for k, v in raw.items() if k in names})
        if base_dir is not None:
            for name in PATH_FIELDS:
                value = getattr(cfg, name)
                if value is not None and not os.path.isabs(value):
                    setattr(cfg, name, str(Path(base_dir) / value))
        return cfg

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text())
        cfg = cls.from_dict(raw, base_dir=Path(path).parent)
        return cfg.with_overrides(**overrides)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def slack_specs(self):
        out = []
        for kind, values in self.slack.items():
            cls = {"fixed": Fixed, "multiplier": Multiplier}.get(kind)
            if cls is None:
                raise ConfigError(f"unknown slack kind {kind!r}")
            out.extend(cls(float(v)) for v in values)
        return out

    def validate(self) -> None:
        if self.kind is not None and self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        for name in PATH_FIELDS:
            value = getattr(self, name)
            if name != "out" and value is not None and not Path(value).exists():
                raise ConfigError(f"{name}: {value} does not exist")
        bad = [x for x in self.lengths if float(x) not in {float(y) for y in self.length_set}]
        if bad:
            raise ConfigError(f"job lengths outside the configured set: {bad}")
        self.slack_specs()
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if not self.global_avg > 0:
            raise ConfigError("global_avg must be positive")

    @property
    def interval_tuple(self):
        return tuple(self.interval) if self.interval else None


# ---------------------------------------------------------------- output


class Outputs:
    """Single writer for one command's files: temp-then-rename, plus warnings."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []
        self.warnings: list[dict] = []

    def warn(self, **entry):
        log.warning("%s", entry.get("message", entry))
        self.warnings.append(entry)

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        tmp = self.dir / f".{name}.tmp"
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
        self.written.append(name)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(obj, indent=2) + "\n")

    def finish(self) -> list[str]:
        self.write_json("warnings.json", self.warnings)
        return self.written


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- inputs


def load_corpus(trace_dir, max_gap=DEFAULT_MAX_GAP, allowed=None) -> dict[str, CarbonTrace]:
    """Every region from every ``*.csv`` under ``trace_dir``, keyed by region id."""
    files = sorted(Path(trace_dir).glob("*.csv"))
    if not files:
        raise TraceError(f"no trace CSVs in {trace_dir}")
    corpus: dict[str, CarbonTrace] = {}
    for path in files:
        try:
            for rid, t in load_traces(path.read_bytes(), max_gap=max_gap).items():
                if rid in corpus:
                    raise TraceError(f"region {rid} appears in more than one file")
                corpus[rid] = t
        except TraceError as exc:
            raise TraceError(f"{path.name}: {exc}") from None
    if allowed is not None:
        corpus = {r: t for r, t in corpus.items() if r in set(allowed)}
    if not corpus:
        raise TraceError("no loadable traces")
    return dict(sorted(corpus.items()))


def _metadata(config) -> dict:
    return spatial.load_region_metadata(config.regions) if config.regions else {}


def _catalog(config) -> spatial.RegionCatalog:
    corpus = load_corpus(config.trace_dir, config.max_gap, config.allowed)
    return spatial.RegionCatalog.from_traces(corpus.values(), _metadata(config))


def _groups(config, catalog) -> dict[str, list[str]]:
    if config.region_sets:
        sets = spatial.load_region_sets(config.region_sets)
        return {g: [r for r in members if r in catalog] for g, members in sets.items()}
    return {g: catalog.group_members(g) for g in catalog.geo_groups()}


def _load_weights(config, catalog) -> OriginWeights:
    if config.load:
        w = load_origin_weights(config.load)
        return w.restrict([r for r in w if r in catalog])
    return OriginWeights({r: 1.0 / len(catalog) for r in catalog})


# ---------------------------------------------------------------- analyze


def cmd_analyze(config: ExperimentConfig) -> dict:
    """Per-region statistics, quadrants, periodicity and (with a second year) trends."""
    out = Outputs(config.out)
    corpus = load_corpus(config.trace_dir, config.max_gap, config.allowed)
    stats = {r: compute_stats(t, config.interval_tuple, per_day=config.per_day_cv) for r, t in corpus.items()}
    avg_ci, avg_cv = corpus_averages(stats.values())

    stat_rows, period_rows, result = [], [], {"averages": {"mean": avg_ci, "cv": avg_cv}, "regions": {}}
    for r, s in stats.items():
        q = classify_quadrant(s, avg_ci, avg_cv) if avg_ci > 0 else None
        entry = {"mean": s.mean, "std": s.std, "cv": s.cv, "min": s.min, "max": s.max}
        for metric, value in entry.items():
            stat_rows.append((r, metric, value))
        if q is not None:
            stat_rows += [(r, "ci_class", q.ci_class), (r, "cv_class", q.cv_class)]
            entry.update(ci_class=q.ci_class, cv_class=q.cv_class)
        try:
            p = detect_periodicity(corpus[r], config.periods)
        except TraceError as exc:
            out.warn(region_id=r, stage="periodicity", message=str(exc))
        else:
            entry["periodicity"] = {str(k): v for k, v in p.periods}
            period_rows += [(r, k, v) for k, v in p.periods]
        result["regions"][r] = entry
    if avg_ci <= 0:
        out.warn(stage="quadrant", message="corpus average CI is zero; quadrants skipped")

    out.write("analyze_stats.csv", _csv(("region_id", "metric", "value"), stat_rows))
    out.write("analyze_periodicity.csv", _csv(("region_id", "period_hours", "score"), period_rows))

    if config.trace_dir_b:
        corpus_b = load_corpus(config.trace_dir_b, config.max_gap, config.allowed)
        common = [r for r in corpus if r in corpus_b]
        deltas = [
            trend_delta(corpus[r], corpus_b[r], tuple(config.trend_thresholds), config.per_day_cv) for r in common
        ]
        names = {}
        points = np.array([[d.delta_mean, d.delta_cv] for d in deltas])
        try:
            km = kmeans_cluster(points, k=3, seed=config.seed)
            label_names = trend_cluster_names(km.centroids)
            names = {d.region_id: label_names[int(lab)] for d, lab in zip(deltas, km.labels)}
        except TraceError as exc:
            out.warn(stage="kmeans", message=str(exc))
        rows = [(d.region_id, d.delta_mean, d.delta_cv, d.cluster, names.get(d.region_id, "")) for d in deltas]
        out.write(
            "analyze_trends.csv",
            _csv(("region_id", "delta_mean", "delta_cv", "threshold_cluster", "kmeans_cluster"), rows),
        )
        result["trends"] = {
            d.region_id: {
                "delta_mean": d.delta_mean,
                "delta_cv": d.delta_cv,
                "threshold_cluster": d.cluster,
                "kmeans_cluster": names.get(d.region_id, ""),
            }
            for d in deltas
        }
    out.write_json("analyze.json", result)
    result["written"] = out.finish()
    return result


# ---------------------------------------------------------------- temporal

REPORT_FIELDS = ("region_id", "continent", "length_hours", "slack_kind", "slack_value", "policy")


def _temporal_cell(args):
    """One (region, length, slack) cell; returns report kwargs or a skip message."""
    region, continent, start, values, length, slack_kind, slack_value, global_avg = args
    trace = CarbonTrace(region, start, values)
    slack = Fixed(slack_value) if slack_kind == "fixed" else Multiplier(slack_value)
    if is_interactive(length):
        slack = Fixed(0.0)
    job = Job(length, slack, interruptible=True)
    labels = dict(
        region_id=region, continent=continent, length_hours=float(length), slack_kind=slack_kind,
        slack_value=float(slack_value),
    )
    if temporal.n_arrivals(trace, job) == 0:
        return None, f"{region}: no arrival fits length {length:g}h with {slack_kind} slack {slack_value:g}"
    base, deferred = temporal.arrival_emissions(trace, job, "deferred")
    _, inter = temporal.arrival_emissions(trace, job, "interrupted")
    rel_d = temporal.relative_per_arrival(base, deferred)
    rel_i = temporal.relative_per_arrival(base, inter)
    abs_d = (base - deferred) / length
    abs_i = (base - inter) / length
    out = []
    for policy, rel, ab in (
        ("deferred", rel_d, abs_d),
        ("interrupted", rel_i, abs_i),
        ("extra", rel_i - rel_d, abs_i - abs_d),
    ):
        rm, rs = mean_std(rel.tolist())
        am, as_ = mean_std(ab.tolist())
        out.append(
            dict(
                relative_pct=rm, relative_pct_std=rs, absolute=am, absolute_std=as_,
                relative_to_global_pct=100.0 * am / global_avg,
                relative_to_global_pct_std=100.0 * as_ / global_avg,
                n=len(base), labels={**labels, "policy": policy},
            )
        )
    return out, None


def _run_cells(fn, cells, parallelism):
    if parallelism <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        # map preserves submission order, so output is schedule-independent
        return list(pool.map(fn, cells, chunksize=max(1, len(cells) // (4 * parallelism))))


def cmd_temporal(config: ExperimentConfig) -> dict:
    """Arrival sweeps for every (region, length, slack, policy) cell plus mix-weighted summaries."""
    out = Outputs(config.out)
    corpus = load_corpus(config.trace_dir, config.max_gap, config.allowed)
    meta = _metadata(config)
    policies = list(dict.fromkeys([*config.policies, "extra"]))
    cells = []
    for r, t in corpus.items():
        window = config.interval_tuple
        values = t.values[window[0] : window[1]] if window else t.values
        for length in config.lengths:
            for s in config.slack_specs():
                cells.append(
                    (r, meta.get(r, {}).get("continent", ""), t.start_time, np.array(values),
                     float(length), s.kind, float(s.value), config.global_avg)
                )
    reports = []
    for result, skipped in _run_cells(_temporal_cell, cells, config.parallelism):
        if skipped:
            out.warn(stage="temporal", message=skipped)
            continue
        reports += [SavingsReport(**kw) for kw in result if kw["labels"]["policy"] in policies]
    if not reports:
        raise temporal.ScheduleError("every temporal cell was skipped; no arrival fits any job window")

    out.write("temporal.csv", reports_to_csv(reports, REPORT_FIELDS))
    out.write("temporal.json", reports_to_json(reports, REPORT_FIELDS))

    summary = _mix_summary(config, reports, out)
    if summary:
        keys = ("scope", "slack_kind", "slack_value", "policy")
        out.write("temporal_summary.csv", reports_to_csv(summary, keys))
        out.write("temporal_summary.json", reports_to_json(summary, keys))
    written = out.finish()
    return {"reports": reports, "summary": summary, "written": written}


def _mix_summary(config, reports, out) -> list[SavingsReport]:
    """Mix-weighted expected savings per region, averaged globally and per continent."""
    mix = resolve_mix(config.mix)
    table: dict[tuple, dict[float, SavingsReport]] = {}
    for r in reports:
        lab = r.labels
        key = (lab["region_id"], lab["continent"], lab["slack_kind"], lab["slack_value"], lab["policy"])
        table.setdefault(key, {})[lab["length_hours"]] = r
    per_region = []
    for (region, continent, kind, value, policy), by_len in table.items():
        metric = {}
        try:
            for m in ("relative_pct", "absolute", "relative_to_global_pct"):
                # interactive jobs cannot shift in time
                per_length = {k: 0.0 for k in mix.lengths if is_interactive(k)}
                per_length.update({k: v.value(m) for k, v in by_len.items()})
                metric[m] = expected_savings(per_length, mix)
        except ValueError as exc:
            out.warn(stage="summary", region_id=region, message=f"mix summary skipped: {exc}")
            continue
        base = dict(slack_kind=kind, slack_value=value, policy=policy)
        per_region.append(SavingsReport(labels={**base, "scope": "global"}, **metric))
        if continent:
            per_region.append(SavingsReport(labels={**base, "scope": continent}, **metric))
    if not per_region:
        return []
    return aggregate(per_region, ("scope", "slack_kind", "slack_value", "policy"))


# ---------------------------------------------------------------- spatial


def _scopes(config, catalog):
    scopes = {"global": catalog.ids}
    scopes.update({g: m for g, m in _groups(config, catalog).items() if m})
    return scopes


def migration_comparison(catalog, load: OriginWeights, members, interval=None) -> dict:
    """Load-weighted 1- vs infinite-migration savings within ``members``."""
    lw = load.restrict(members)
    stay = math.fsum(w * catalog.total(o, interval) for o, w in lw.items())
    one = math.fsum(w * spatial.one_migration(catalog, o, members, interval).emissions for o, w in lw.items())
    inf = math.fsum(w * spatial.infinite_migration(catalog, o, members, interval).emissions for o, w in lw.items())
    one_pct = 100.0 * (stay - one) / stay
    inf_pct = 100.0 * (stay - inf) / stay
    return {"one_pct": one_pct, "infinite_pct": inf_pct, "gap_pct": inf_pct - one_pct}


def cmd_spatial(config: ExperimentConfig) -> dict:
    out = Outputs(config.out)
    catalog = _catalog(config)
    interval = config.interval_tuple
    load = _load_weights(config, catalog)
    scopes = _scopes(config, catalog)
    result: dict[str, Any] = {}

    # migrate once to the greenest region in the world
    everywhere = catalog.ids
    reports = []
    for o in catalog:
        plan = spatial.one_migration(catalog, o, everywhere, interval)
        info = catalog.regions[o]
        reports.append(
            SavingsReport.from_emissions(
                plan.stay_emissions, plan.emissions, len(plan.assignment), config.global_avg,
                region_id=o, geo_group=info.geo_group, continent=info.continent, destination=plan.destination,
            )
        )
    out.write("spatial_global.csv", reports_to_csv(reports, ("region_id", "geo_group", "destination")))
    by_group = aggregate(reports, ("geo_group",))
    out.write("spatial_global_groups.csv", reports_to_csv(by_group, ("geo_group",)))
    weighted = math.fsum(load.get(r.labels["region_id"]) * r.absolute for r in reports)
    result["global_relative_to_global_pct"] = 100.0 * weighted / config.global_avg

    # region-to-region matrix
    order = config.matrix_regions or sorted(catalog.ids, key=lambda r: -catalog.mean(r, interval))
    mat = spatial.savings_matrix(catalog, order, interval)
    rows = [(o, d, float(mat.values[i, j])) for i, o in enumerate(mat.regions) for j, d in enumerate(mat.regions)]
    out.write("spatial_matrix.csv", _csv(("origin", "destination", "savings_fraction"), rows))

    result["adjacent_ranking_pct"] = spatial.adjacent_ranking_savings(catalog, load, interval)

    migration = {}
    mrows = []
    for scope, members in scopes.items():
        try:
            migration[scope] = migration_comparison(catalog, load, members, interval)
        except ValueError as exc:
            out.warn(stage="migration", scope=scope, message=str(exc))
            continue
        m = migration[scope]
        mrows.append((scope, m["one_pct"], m["infinite_pct"], m["gap_pct"]))
    out.write("spatial_migration.csv", _csv(("scope", "one_pct", "infinite_pct", "gap_pct"), mrows))
    result["migration"] = migration

    if config.capacity:
        result["capacity"] = _capacity_table(config, catalog, scopes, out)
    out.write_json("spatial.json", result)
    result["written"] = out.finish()
    return result


def _capacity_table(config, catalog, scopes, out) -> dict:
    load_all = load_origin_weights(config.load) if config.load else _load_weights(config, catalog)
    capacity_all = load_fraction_map(config.capacity)
    table = {}
    for scope, members in scopes.items():
        try:
            lw = load_all.restrict([r for r in members if r in catalog])
        except ValueError as exc:
            out.warn(stage="capacity", scope=scope, message=str(exc))
            continue
        cap = {r: capacity_all.get(r, 0.0) for r in members}
        total = math.fsum(cap.values())
        cap = {r: c / total for r, c in cap.items()} if total > 0 else cap
        res = spatial.capacity_constrained(
            catalog, spatial.CapacityModel(lw, cap, config.headroom), config.interval_tuple
        )
        table[scope] = {
            "constrained_pct": res.constrained_pct,
            "unconstrained_pct": res.unconstrained_pct,
            "moves": [list(m) for m in res.moves],
        }
    rows = [(s, v["constrained_pct"], v["unconstrained_pct"]) for s, v in table.items()]
    out.write("capacity.csv", _csv(("scope", "constrained_pct", "unconstrained_pct"), rows))
    return table


def cmd_capacity(config: ExperimentConfig) -> dict:
    if not config.capacity:
        raise ConfigError("capacity experiment needs a capacity file")
    out = Outputs(config.out)
    catalog = _catalog(config)
    table = _capacity_table(config, catalog, _scopes(config, catalog), out)
    out.write_json("capacity.json", table)
    return {"capacity": table, "written": out.finish()}


# ---------------------------------------------------------------- latency


def cmd_latency(config: ExperimentConfig) -> dict:
    """Savings-vs-SLO curves for origins in each scope; destinations anywhere."""
    if not config.latency:
        raise ConfigError("latency experiment needs a latency matrix")
    out = Outputs(config.out)
    catalog = _catalog(config)
    latency = spatial.LatencyMatrix.from_csv(config.latency)
    load = _load_weights(config, catalog)
    curves = {}
    rows = []
    for scope, members in _scopes(config, catalog).items():
        try:
            lw = load.restrict(members)
        except ValueError as exc:
            out.warn(stage="latency", scope=scope, message=str(exc))
            continue
        curve = spatial.latency_curve(
            catalog, latency, lw, config.slo_grid, config.interval_tuple, config.global_avg
        )
        curves[scope] = [{"slo_ms": s, "savings_pct": v} for s, v in curve]
        rows += [(scope, s, v) for s, v in curve]
    out.write("latency.csv", _csv(("scope", "slo_ms", "savings_pct"), rows))
    out.write_json("latency.json", curves)
    return {"curves": curves, "written": out.finish()}


# ---------------------------------------------------------------- fetch


def cmd_fetch(config: ExperimentConfig, client=None, sleep=None) -> dict:
    if not config.fetch:
        raise ConfigError("fetch needs a 'fetch' config section")
    spec = fetch_mod.FetchSpec.from_config(config.fetch)
    target = config.trace_dir or config.out
    kwargs = {"client": client}
    if sleep is not None:
        kwargs["sleep"] = sleep
    status = fetch_mod.fetch(spec, target, **kwargs)
    return {"status": status}


COMMANDS = {
    "analyze": cmd_analyze,
    "temporal": cmd_temporal,
    "spatial": cmd_spatial,
    "latency": cmd_latency,
    "capacity": cmd_capacity,
    "fetch": cmd_fetch,
}
