"""Deterministic synthetic corpora for offline experiments and tests.

The world corpus has 20 regions covering all four mean/CV quadrants. Each
hourly series is a mean level modulated by a diurnal shape (solar regions
dip at local midday, others follow demand), a weekday/weekend cycle, a slow
seasonal swing and AR(1) weather noise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .spatial import LatencyMatrix, RegionCatalog, RegionInfo
from .trace import CarbonTrace, write_trace_csv

YEAR_START = datetime(2021, 1, 1, tzinfo=timezone.utc)
HOURS_PER_YEAR = 8760


@dataclass(frozen=True)
class RegionSpec:
    region_id: str
    continent: str
    geo_group: str
    lat: float
    lon: float
    mean: float
    daily: float
    weekly: float
    noise: float
    solar: bool
    load: float
    capacity: float
    cloud: tuple[str, ...] = ()


# mean CI, diurnal/weekly/noise amplitudes (fractions of mean), load and capacity shares
WORLD_REGIONS = (
    RegionSpec("SE", "Europe", "Europe", 59.3, 18.1, 18.0, 0.04, 0.02, 0.06, False, 0.02, 0.10, ("aws", "azure")),
    RegionSpec("NO", "Europe", "Europe", 59.9, 10.8, 30.0, 0.05, 0.02, 0.07, False, 0.02, 0.06, ("azure",)),
    RegionSpec("CA-QC", "North America", "North America", 45.5, -73.6, 34.0, 0.06, 0.02, 0.08, False, 0.03, 0.08, ("aws", "gcp")),
    RegionSpec("FR", "Europe", "Europe", 48.9, 2.4, 60.0, 0.12, 0.04, 0.10, False, 0.05, 0.06, ("aws", "azure", "gcp")),
    RegionSpec("CH", "Europe", "Europe", 47.4, 8.5, 95.0, 0.10, 0.03, 0.10, False, 0.02, 0.04, ("gcp",)),
    RegionSpec("CA-ON", "North America", "North America", 43.7, -79.4, 85.0, 0.35, 0.08, 0.18, True, 0.05, 0.05, ("gcp",)),
    RegionSpec("BR-S", "South America", "South America", -23.5, -46.6, 110.0, 0.20, 0.05, 0.15, True, 0.04, 0.03, ("aws", "gcp")),
    RegionSpec("ES", "Europe", "Europe", 40.4, -3.7, 170.0, 0.32, 0.06, 0.16, True, 0.04, 0.04, ("azure", "gcp")),
    RegionSpec("US-CAL", "North America", "North America", 37.8, -122.4, 250.0, 0.38, 0.05, 0.12, True, 0.09, 0.08, ("aws", "gcp")),
    RegionSpec("GB", "Europe", "Europe", 51.5, -0.1, 230.0, 0.18, 0.08, 0.22, False, 0.06, 0.06, ("aws", "azure", "gcp")),
    RegionSpec("DE", "Europe", "Europe", 50.1, 8.7, 390.0, 0.30, 0.10, 0.20, True, 0.07, 0.07, ("aws", "azure", "gcp")),
    RegionSpec("US-TEX", "North America", "North America", 32.8, -96.8, 420.0, 0.26, 0.06, 0.18, True, 0.07, 0.05, ("azure",)),
    RegionSpec("AU-NSW", "Oceania", "Asia-Pacific", -33.9, 151.2, 640.0, 0.28, 0.05, 0.10, True, 0.03, 0.03, ("aws", "azure", "gcp")),
    RegionSpec("AU-SA", "Oceania", "Asia-Pacific", -34.9, 138.6, 240.0, 0.40, 0.05, 0.18, True, 0.01, 0.02, ()),
    RegionSpec("JP-TK", "Asia", "Asia-Pacific", 35.7, 139.7, 480.0, 0.06, 0.04, 0.05, False, 0.07, 0.06, ("aws", "azure", "gcp")),
    RegionSpec("SG", "Asia", "Asia-Pacific", 1.35, 103.8, 470.0, 0.03, 0.02, 0.04, False, 0.05, 0.04, ("aws", "azure", "gcp")),
    RegionSpec("IN-WE", "Asia", "Asia-Pacific", 19.1, 72.9, 650.0, 0.05, 0.02, 0.05, False, 0.08, 0.03, ("aws", "azure", "gcp")),
    RegionSpec("PL", "Europe", "Europe", 52.2, 21.0, 750.0, 0.05, 0.04, 0.05, False, 0.04, 0.03, ("azure", "gcp")),
    RegionSpec("ZA", "Africa", "Africa", -26.2, 28.0, 720.0, 0.04, 0.03, 0.05, False, 0.04, 0.03, ("aws", "azure")),
    RegionSpec("ID", "Asia", "Asia-Pacific", -6.2, 106.8, 690.0, 0.03, 0.02, 0.04, False, 0.12, 0.04, ("aws", "gcp")),
)


def _unit(x: np.ndarray) -> np.ndarray:
    x = x - x.mean()
    s = x.std()
    return x / s if s > 0 else x


def _series(spec: RegionSpec, hours: int, rng: np.random.Generator, mean_shift=0.0, daily_gain=1.0):
    t = np.arange(hours, dtype=np.float64)
    local = (t + spec.lon / 15.0) % 24.0
    if spec.solar:
        sun = np.clip(np.sin(2 * np.pi * (local - 6.0) / 24.0), 0.0, None)
        daily = _unit(-sun)
    else:
        daily = _unit(-np.cos(2 * np.pi * (local - 3.0) / 24.0))
    day_of_week = (t // 24 + 4) % 7  # 2021-01-01 is a Friday
    weekly = _unit(np.where(day_of_week >= 5, -1.0, 0.4))
    seasonal = np.cos(2 * np.pi * t / HOURS_PER_YEAR + (np.pi if spec.lat < 0 else 0.0))
    eps = rng.standard_normal(hours)
    phi = 0.97
    ar = np.empty(hours)
    acc = 0.0
    for i in range(hours):
        acc = phi * acc + eps[i]
        ar[i] = acc
    ar *= math.sqrt(1 - phi * phi)
    level = spec.mean + mean_shift
    shape = (
        spec.daily * daily_gain * daily
        + spec.weekly * weekly
        + 0.05 * seasonal
        + spec.noise * ar
    )
    return np.clip(level * (1.0 + shape), 0.02 * level, None)


# year-over-year changes for the second year: (mean shift, diurnal gain)
TREND_CHANGES = {
    "DE": (-60.0, 1.3),
    "ES": (-30.0, 1.2),
    "GB": (-40.0, 1.1),
    "AU-NSW": (-55.0, 1.2),
    "US-CAL": (-35.0, 1.25),
    "PL": (45.0, 1.0),
    "IN-WE": (40.0, 0.9),
    "ID": (50.0, 1.0),
    "ZA": (35.0, 0.95),
}


def world_traces(seed: int = 0, hours: int = HOURS_PER_YEAR, year: int = 0) -> list[CarbonTrace]:
    """One synthetic trace per world region; ``year=1`` applies ``TREND_CHANGES``."""
    out = []
    start = YEAR_START.replace(year=YEAR_START.year + year)
    for i, spec in enumerate(WORLD_REGIONS):
        rng = np.random.default_rng([seed, year, i])
        shift, gain = TREND_CHANGES.get(spec.region_id, (0.0, 1.0)) if year else (0.0, 1.0)
        out.append(CarbonTrace(spec.region_id, start, _series(spec, hours, rng, shift, gain)))
    return out


def region_metadata() -> dict[str, dict]:
    return {
        s.region_id: {"continent": s.continent, "geo_group": s.geo_group, "cloud": list(s.cloud)}
        for s in WORLD_REGIONS
    }


def region_sets() -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for s in WORLD_REGIONS:
        groups.setdefault(s.geo_group, []).append(s.region_id)
    return groups


def _haversine_km(a: RegionSpec, b: RegionSpec) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def world_latency(seed: int = 0) -> LatencyMatrix:
    """Fibre-distance RTT with routing inflation and small directional jitter."""
    rng = np.random.default_rng([seed, 99])
    rtt = {}
    for a in WORLD_REGIONS:
        for b in WORLD_REGIONS:
            if a is b:
                continue
            km = _haversine_km(a, b)
            rtt[(a.region_id, b.region_id)] = round(2 * km * 1.4 / 200.0 + 2.0 + rng.uniform(0, 3), 3)
    return LatencyMatrix(rtt)


def _normalized(attr: str) -> dict[str, float]:
    raw = {s.region_id: getattr(s, attr) for s in WORLD_REGIONS}
    total = math.fsum(raw.values())
    return {r: v / total for r, v in raw.items()}


def world_load() -> dict[str, float]:
    return _normalized("load")


def world_capacity() -> dict[str, float]:
    return _normalized("capacity")


def world_catalog(seed: int = 0, hours: int = HOURS_PER_YEAR) -> RegionCatalog:
    meta = region_metadata()
    return RegionCatalog(
        {
            t.region_id: RegionInfo(
                t, meta[t.region_id]["continent"], meta[t.region_id]["geo_group"], tuple(meta[t.region_id]["cloud"])
            )
            for t in world_traces(seed, hours)
        }
    )


def write_world(out_dir, seed: int = 0, hours: int = HOURS_PER_YEAR) -> Path:
    """Write the corpus, its metadata and a ready-to-run config under ``out_dir``."""
    out = Path(out_dir)
    for sub, year in (("traces", 0), ("traces_b", 1)):
        (out / sub).mkdir(parents=True, exist_ok=True)
        for t in world_traces(seed, hours, year):
            with open(out / sub / f"{t.region_id}.csv", "w", newline="") as fh:
                write_trace_csv([t], fh)
    dump = lambda name, obj: (out / name).write_text(json.dumps(obj, indent=2) + "\n")
    corpus_avg = float(np.mean([t.values.mean() for t in world_traces(seed, hours)]))
    dump("regions.json", region_metadata())
    dump("region_sets.json", region_sets())
    dump("load.json", world_load())
    dump("capacity.json", world_capacity())
    (out / "latency.csv").write_text(world_latency(seed).to_csv())
    dump(
        "config.json",
        {
            "trace_dir": "traces",
            "trace_dir_b": "traces_b",
            "regions": "regions.json",
            "region_sets": "region_sets.json",
            "latency": "latency.csv",
            "load": "load.json",
            "capacity": "capacity.json",
            "lengths": [1, 6, 12, 24, 48, 96, 168],
            "slack": {"fixed": [24]},
            "mix": "equal",
            "slo_grid": [0, 10, 25, 50, 100, 150, 200, 250, 300, 400],
            "seed": seed,
            "global_avg": round(corpus_avg, 2),
        },
    )
    return out
