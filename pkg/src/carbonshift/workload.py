"""Jobs, flexibility dimensions, workload mixes and origin weights."""
from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

JOB_LENGTHS = (0.01, 1.0, 6.0, 12.0, 24.0, 48.0, 96.0, 168.0)
INTERACTIVE_MAX_HOURS = 1.0 / 60.0
SHORT_JOB_MAX_HOURS = 24.0
SUM_TOL = 1e-9


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class Fixed:
    """Slack of a fixed number of hours."""

    hours: float

    def __post_init__(self):
        if not self.hours >= 0:
            raise WorkloadError(f"slack must be >= 0, got {self.hours}")

    def resolve(self, length_hours: float) -> float:
        return float(self.hours)

    @property
    def kind(self):
        return "fixed"

    @property
    def value(self):
        return self.hours


@dataclass(frozen=True)
class Multiplier:
    """Slack as a multiple of the job length."""

    factor: float

    def __post_init__(self):
        if not self.factor >= 0:
            raise WorkloadError(f"slack multiplier must be >= 0, got {self.factor}")

    def resolve(self, length_hours: float) -> float:
        return self.factor * length_hours

    @property
    def kind(self):
        return "multiplier"

    @property
    def value(self):
        return self.factor


Slack = Fixed | Multiplier


def is_interactive(length_hours: float) -> bool:
    return length_hours <= INTERACTIVE_MAX_HOURS


@dataclass(frozen=True)
class Job:
    length_hours: float
    slack: Slack = Fixed(0.0)
    interruptible: bool = False
    arrival_slot: int = 0
    origin: str = ""

    def __post_init__(self):
        if not self.length_hours > 0 or not math.isfinite(self.length_hours):
            raise WorkloadError(f"job length must be positive, got {self.length_hours}")
        if self.arrival_slot < 0:
            raise WorkloadError("arrival slot must be >= 0")
        if is_interactive(self.length_hours) and self.slack_hours != 0:
            raise WorkloadError("interactive jobs have no temporal flexibility; slack must be 0")

    @property
    def slack_hours(self) -> float:
        return self.slack.resolve(self.length_hours)

    @property
    def slack_slots(self) -> int:
        return int(math.floor(self.slack_hours))

    @property
    def n_slots(self) -> int:
        return int(math.ceil(self.length_hours))

    @property
    def window_slots(self) -> int:
        return self.n_slots + self.slack_slots

    def at(self, arrival_slot: int) -> "Job":
        return Job(self.length_hours, self.slack, self.interruptible, arrival_slot, self.origin)


def job_slots(job: Job) -> tuple[int, float]:
    """Whole hours and fractional tail of the job length."""
    full = int(math.floor(job.length_hours))
    return full, job.length_hours - full


def _check_fractions(weights: Mapping, what: str) -> None:
    if not weights:
        raise WorkloadError(f"{what}: no entries")
    for key, w in weights.items():
        if not (0.0 <= w <= 1.0):
            raise WorkloadError(f"{what}: fraction for {key!r} outside [0, 1]: {w}")
    total = math.fsum(weights.values())
    if abs(total - 1.0) > SUM_TOL:
        raise WorkloadError(f"{what}: fractions sum to {total!r}, expected 1")


@dataclass(frozen=True)
class WorkloadMix:
    """Resource-usage fraction per job length class (hours)."""

    weights: Mapping[float, float]

    def __post_init__(self):
        w = {float(k): float(v) for k, v in dict(self.weights).items()}
        _check_fractions(w, "workload mix")
        object.__setattr__(self, "weights", dict(sorted(w.items())))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(self.weights)


@dataclass(frozen=True)
class OriginWeights:
    """Fraction of load originating in each region."""

    weights: Mapping[str, float]

    def __post_init__(self):
        w = {str(k): float(v) for k, v in dict(self.weights).items()}
        _check_fractions(w, "origin weights")
        object.__setattr__(self, "weights", dict(sorted(w.items())))

    def __getitem__(self, region):
        return self.weights[region]

    def get(self, region, default=0.0):
        return self.weights.get(region, default)

    def __iter__(self):
        return iter(self.weights)

    def items(self):
        return self.weights.items()

    def restrict(self, regions) -> "OriginWeights":
        """Weights renormalized over ``regions``."""
        keep = {r: w for r, w in self.weights.items() if r in set(regions)}
        total = math.fsum(keep.values())
        if total <= 0:
            raise WorkloadError("no load in the restricted region set")
        return OriginWeights({r: w / total for r, w in keep.items()})


def _uniform(lengths, mass):
    return {length: mass / len(lengths) for length in lengths}


def load_mix_file(path) -> WorkloadMix:
    raw = json.loads(Path(path).read_text())
    return WorkloadMix({float(k): v for k, v in raw.items() if not k.startswith("_")})


def mix_preset(name: str, short_share: float = 0.8) -> WorkloadMix:
    """Built-in mixes: ``equal``, ``split_80_20``, ``azure`` and ``google``.

    ``short_share`` sets the usage share of jobs up to 24 h in the 80/20 split.
    """
    if name == "equal":
        return WorkloadMix(_uniform(JOB_LENGTHS, 1.0))
    if name == "split_80_20":
        short = [x for x in JOB_LENGTHS if x <= SHORT_JOB_MAX_HOURS]
        long = [x for x in JOB_LENGTHS if x > SHORT_JOB_MAX_HOURS]
        return WorkloadMix({**_uniform(short, short_share), **_uniform(long, 1.0 - short_share)})
    if name == "google":
        rest = [x for x in JOB_LENGTHS if x != 168.0]
        return WorkloadMix({**_uniform(rest, 0.10), 168.0: 0.90})
    if name == "azure":
        with resources.as_file(resources.files("carbonshift") / "data" / "azure_mix.json") as p:
            return load_mix_file(p)
    raise WorkloadError(f"unknown workload mix preset {name!r}")


def resolve_mix(spec: str) -> WorkloadMix:
    """A preset name or a path to a JSON mix file."""
    try:
        return mix_preset(spec)
    except WorkloadError:
        if Path(spec).is_file():
            return load_mix_file(spec)
        raise


def expected_savings(per_length_savings: Mapping[float, float], mix: WorkloadMix) -> float:
    """Mix-weighted average of per-length savings."""
    savings = {float(k): v for k, v in per_length_savings.items()}
    terms = []
    for length, w in mix.weights.items():
        if w == 0:
            continue
        if length not in savings:
            raise WorkloadError(f"no savings given for job length {length:g}h")
        terms.append(w * savings[length])
    return math.fsum(terms)


def load_origin_weights(path) -> OriginWeights:
    raw = json.loads(Path(path).read_text())
    return OriginWeights({k: v for k, v in raw.items() if not k.startswith("_")})


def load_fraction_map(path) -> dict[str, float]:
    """A region -> non-negative fraction map without the sum-to-1 check (capacities)."""
    raw = json.loads(Path(path).read_text())
    out = {}
    for k, v in raw.items():
        if k.startswith("_"):
            continue
        if not float(v) >= 0:
            raise WorkloadError(f"{path}: negative fraction for {k!r}")
        out[str(k)] = float(v)
    return out
