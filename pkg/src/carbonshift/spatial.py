"""Spatial shifting: migrating work between regions."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .metrics import GLOBAL_AVG_CI, relative_savings, relative_to_global
from .trace import CarbonTrace
from .workload import OriginWeights

CAPACITY_EPS = 1e-12


class SpatialError(ValueError):
    pass


@dataclass(frozen=True)
class RegionInfo:
    trace: CarbonTrace
    continent: str = ""
    geo_group: str = ""
    cloud_tags: tuple[str, ...] = ()


class RegionCatalog:
    """Aligned traces plus region metadata."""

    def __init__(self, regions: Mapping[str, RegionInfo]):
        if not regions:
            raise SpatialError("empty region catalog")
        self.regions = dict(sorted(regions.items()))
        first = next(iter(self.regions.values())).trace
        for rid, info in self.regions.items():
            t = info.trace
            if t.start_time != first.start_time or len(t) != len(first):
                raise SpatialError(
                    f"trace {rid} is not aligned with {first.region_id}: "
                    f"start {t.start_time.isoformat()} len {len(t)} vs "
                    f"start {first.start_time.isoformat()} len {len(first)}"
                )
        self.n_slots = len(first)
        self.start_time = first.start_time
        self._means: dict[tuple, float] = {}

    @classmethod
    def from_traces(cls, traces: Iterable[CarbonTrace], metadata: Mapping | None = None):
        metadata = metadata or {}
        regions = {}
        for t in traces:
            meta = metadata.get(t.region_id, {})
            regions[t.region_id] = RegionInfo(
                t,
                continent=meta.get("continent", ""),
                geo_group=meta.get("geo_group", ""),
                cloud_tags=tuple(meta.get("cloud", ())),
            )
        return cls(regions)

    def __contains__(self, region):
        return region in self.regions

    def __iter__(self):
        return iter(self.regions)

    def __len__(self):
        return len(self.regions)

    @property
    def ids(self) -> list[str]:
        return list(self.regions)

    def trace(self, region: str) -> CarbonTrace:
        try:
            return self.regions[region].trace
        except KeyError:
            raise SpatialError(f"unknown region {region!r}") from None

    def interval(self, interval) -> tuple[int, int]:
        if interval is None:
            return 0, self.n_slots
        start, stop = interval
        if not 0 <= start < stop <= self.n_slots:
            raise SpatialError(f"interval {interval} outside [0, {self.n_slots})")
        return int(start), int(stop)

    def total(self, region: str, interval=None) -> float:
        start, stop = self.interval(interval)
        return math.fsum(self.trace(region).values[start:stop])

    def mean(self, region: str, interval=None) -> float:
        """Mean CI over the interval; the full-trace (annual) value is cached."""
        key = (region, self.interval(interval))
        if key not in self._means:
            start, stop = key[1]
            self._means[key] = self.total(region, interval) / (stop - start)
        return self._means[key]

    def group_members(self, geo_group: str) -> list[str]:
        return [r for r, info in self.regions.items() if info.geo_group == geo_group]

    def geo_groups(self) -> list[str]:
        return sorted({info.geo_group for info in self.regions.values() if info.geo_group})


def load_region_metadata(path) -> dict[str, dict]:
    raw = json.loads(Path(path).read_text())
    return {k: v for k, v in raw.items() if not k.startswith("_")}


def load_region_sets(path) -> dict[str, list[str]]:
    """Named restriction sets: ``{"Europe": ["DE", "SE", ...]}``."""
    raw = json.loads(Path(path).read_text())
    return {k: list(v) for k, v in raw.items() if not k.startswith("_")}


@dataclass(frozen=True)
class LatencyMatrix:
    """Directed round-trip times in milliseconds; rtt(r, r) is 0."""

    rtt: Mapping[tuple[str, str], float]

    def __post_init__(self):
        clean = {}
        for (o, d), ms in dict(self.rtt).items():
            ms = float(ms)
            if not math.isfinite(ms) or ms < 0:
                raise SpatialError(f"invalid latency {ms} for {o}->{d}")
            if o == d and ms != 0:
                raise SpatialError(f"self latency of {o} must be 0, got {ms}")
            clean[(o, d)] = ms
        object.__setattr__(self, "rtt", clean)

    def get(self, origin: str, destination: str) -> float | None:
        if origin == destination:
            return 0.0
        return self.rtt.get((origin, destination))

    def __call__(self, origin: str, destination: str) -> float:
        ms = self.get(origin, destination)
        if ms is None:
            raise SpatialError(f"no latency for {origin}->{destination}")
        return ms

    @property
    def max_rtt(self) -> float:
        return max(self.rtt.values(), default=0.0)

    @classmethod
    def from_csv(cls, source) -> "LatencyMatrix":
        if isinstance(source, (str, Path)) and Path(source).is_file():
            text = Path(source).read_text()
        elif isinstance(source, bytes):
            text = source.decode("utf-8")
        else:
            text = source
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or not {"origin", "destination", "rtt_ms"} <= set(
            reader.fieldnames
        ):
            raise SpatialError("latency CSV needs columns origin,destination,rtt_ms")
        rtt = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                rtt[(row["origin"].strip(), row["destination"].strip())] = float(row["rtt_ms"])
            except ValueError:
                raise SpatialError(f"malformed latency row at line {lineno}") from None
        return cls(rtt)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("origin", "destination", "rtt_ms"))
        for (o, d), ms in sorted(self.rtt.items()):
            w.writerow((o, d, repr(ms)))
        return buf.getvalue()


@dataclass(frozen=True)
class CapacityModel:
    load: OriginWeights
    capacity: Mapping[str, float]
    headroom: float = 1.0

    def __post_init__(self):
        for r, c in self.capacity.items():
            if not c >= 0:
                raise SpatialError(f"negative capacity for {r}")
        if not self.headroom >= 0:
            raise SpatialError("headroom multiplier must be >= 0")

    def capacity_of(self, region: str) -> float:
        return self.capacity.get(region, 0.0) * self.headroom

    @property
    def regions(self) -> list[str]:
        return sorted(set(self.load.weights) | set(self.capacity))


@dataclass(frozen=True)
class MigrationPlan:
    origin: str
    assignment: tuple[str, ...] = field(repr=False)
    emissions: float
    stay_emissions: float
    policy: str

    @property
    def destination(self) -> str:
        """The single destination of a 1-migration plan."""
        dests = set(self.assignment)
        if len(dests) != 1:
            raise SpatialError("plan migrates more than once")
        return self.assignment[0]

    @property
    def relative_pct(self) -> float:
        if self.stay_emissions <= 0:
            return 0.0
        return relative_savings(self.stay_emissions, self.emissions)

    @property
    def absolute_per_hour(self) -> float:
        return (self.stay_emissions - self.emissions) / len(self.assignment)


def _allowed(catalog: RegionCatalog, origin: str, allowed) -> list[str]:
    allowed = set(allowed)
    if not allowed:
        raise SpatialError("allowed region set is empty")
    # staying home is always possible
    regions = sorted(allowed | {origin})
    for r in regions:
        if r not in catalog:
            raise SpatialError(f"unknown region {r!r}")
    return regions


def one_migration(catalog: RegionCatalog, origin: str, allowed, interval=None) -> MigrationPlan:
    """Move once to the allowed region with the lowest mean CI over the interval."""
    regions = _allowed(catalog, origin, allowed)
    start, stop = catalog.interval(interval)
    # equal lengths, so totals rank like means without the division's rounding
    best = min(regions, key=lambda r: (catalog.total(r, interval), r))
    return MigrationPlan(
        origin,
        (best,) * (stop - start),
        catalog.total(best, interval),
        catalog.total(origin, interval),
        "one",
    )


def infinite_migration(catalog: RegionCatalog, origin: str, allowed, interval=None) -> MigrationPlan:
    """Hop to the greenest allowed region in every slot."""
    regions = _allowed(catalog, origin, allowed)
    start, stop = catalog.interval(interval)
    stack = np.vstack([catalog.trace(r).values[start:stop] for r in regions])
    pick = stack.argmin(axis=0)
    minima = stack[pick, np.arange(stop - start)]
    return MigrationPlan(
        origin,
        tuple(regions[i] for i in pick),
        math.fsum(minima),
        catalog.total(origin, interval),
        "infinite",
    )


@dataclass(frozen=True)
class SavingsMatrix:
    regions: tuple[str, ...]
    values: np.ndarray

    def entry(self, origin: str, destination: str) -> float:
        return float(self.values[self.regions.index(origin), self.regions.index(destination)])


def savings_matrix(catalog: RegionCatalog, regions: Sequence[str], interval=None) -> SavingsMatrix:
    """Fractional savings ``(mean_o - mean_d) / mean_o`` for every ordered pair."""
    if len(regions) < 2:
        raise SpatialError("savings matrix needs at least two regions")
    means = np.array([catalog.mean(r, interval) for r in regions])
    if np.any(means <= 0):
        bad = [r for r, m in zip(regions, means) if m <= 0]
        raise SpatialError(f"zero-mean origin region(s): {', '.join(bad)}")
    values = (means[:, None] - means[None, :]) / means[:, None]
    np.fill_diagonal(values, 0.0)
    return SavingsMatrix(tuple(regions), values)


def _ranked(catalog: RegionCatalog, regions, interval) -> list[str]:
    return sorted(regions, key=lambda r: (catalog.mean(r, interval), r))


def _load_emissions(catalog, loads: Mapping[str, float], interval) -> float:
    return math.fsum(w * catalog.mean(r, interval) for r, w in loads.items())


def adjacent_ranking_savings(
    catalog: RegionCatalog, load: OriginWeights, interval=None, regions=None
) -> float:
    """Percent savings when each region's load moves one step greener in the ranking."""
    ranked = _ranked(catalog, regions if regions is not None else catalog.ids, interval)
    if len(ranked) < 2:
        raise SpatialError("adjacent ranking needs at least two regions")
    missing = [r for r in load if r not in ranked]
    if missing:
        raise SpatialError(f"load on regions outside the ranking: {', '.join(missing)}")
    greener = {r: ranked[max(0, i - 1)] for i, r in enumerate(ranked)}
    baseline = _load_emissions(catalog, load.weights, interval)
    moved = math.fsum(w * catalog.mean(greener[r], interval) for r, w in load.items())
    return relative_savings(baseline, moved)


@dataclass(frozen=True)
class CapacityResult:
    constrained_pct: float
    unconstrained_pct: float
    emissions: float
    baseline: float
    final_load: Mapping[str, float]
    moves: tuple[tuple[str, str, float], ...]


def capacity_constrained(catalog: RegionCatalog, model: CapacityModel, interval=None) -> CapacityResult:
    """Greedy fill: greenest destinations first, each drawing from the brownest sources.

    A destination's free capacity is its (headroom-scaled) capacity minus the
    resident load it still holds minus load already received. Load only
    moves to strictly greener regions.
    """
    regions = model.regions
    for r in regions:
        if r not in catalog:
            raise SpatialError(f"capacity model references unknown region {r!r}")
    ranked = _ranked(catalog, regions, interval)
    mean = {r: catalog.mean(r, interval) for r in ranked}
    resident = {r: model.load.get(r) for r in ranked}
    received = dict.fromkeys(ranked, 0.0)
    moves = []
    for dest in ranked:
        free = model.capacity_of(dest) - resident[dest] - received[dest]
        if free <= CAPACITY_EPS:
            continue
        for src in reversed(ranked):
            if mean[src] <= mean[dest]:
                break
            amount = min(resident[src], free)
            if amount <= CAPACITY_EPS:
                continue
            resident[src] -= amount
            received[dest] += amount
            free -= amount
            moves.append((src, dest, amount))
            if free <= CAPACITY_EPS:
                break
    final = {r: resident[r] + received[r] for r in ranked}
    baseline = _load_emissions(catalog, model.load.weights, interval)
    emissions = _load_emissions(catalog, final, interval)
    total_load = math.fsum(model.load.weights.values())
    unconstrained = total_load * mean[ranked[0]]
    return CapacityResult(
        constrained_pct=relative_savings(baseline, emissions),
        unconstrained_pct=relative_savings(baseline, unconstrained),
        emissions=emissions,
        baseline=baseline,
        final_load=final,
        moves=tuple(moves),
    )


def reachable(catalog: RegionCatalog, latency: LatencyMatrix, origin: str, slo_ms: float, candidates=None):
    """Candidate regions within ``slo_ms`` of the origin (the origin always qualifies)."""
    candidates = catalog.ids if candidates is None else candidates
    missing = [d for d in candidates if latency.get(origin, d) is None]
    if missing:
        raise SpatialError(f"missing latency from {origin} to: {', '.join(missing)}")
    return sorted({d for d in candidates if latency(origin, d) <= slo_ms} | {origin})


def latency_routing(
    catalog: RegionCatalog,
    latency: LatencyMatrix,
    load: OriginWeights,
    slo_ms: float,
    interval=None,
    global_avg: float = GLOBAL_AVG_CI,
    candidates=None,
) -> float:
    """Load-weighted savings relative to the global average CI under a latency SLO."""
    terms = []
    for origin, w in load.items():
        if w <= 0:
            continue
        allowed = reachable(catalog, latency, origin, slo_ms, candidates)
        plan = one_migration(catalog, origin, allowed, interval)
        terms.append(w * plan.absolute_per_hour)
    return relative_to_global(math.fsum(terms), global_avg)


def latency_curve(
    catalog: RegionCatalog,
    latency: LatencyMatrix,
    load: OriginWeights,
    slos: Sequence[float],
    interval=None,
    global_avg: float = GLOBAL_AVG_CI,
    candidates=None,
) -> list[tuple[float, float]]:
    return [
        (float(s), latency_routing(catalog, latency, load, s, interval, global_avg, candidates))
        for s in sorted(slos)
    ]
