"""Clairvoyant temporal placement of a job inside one region's trace."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .metrics import mean_std
from .trace import CarbonTrace
from .workload import Job, job_slots

POLICIES = ("baseline", "deferred", "interrupted")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleResult:
    slots: tuple[tuple[int, float], ...]
    emissions: float
    policy: str

    @property
    def start(self) -> int:
        return self.slots[0][0]

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self.slots]


def _emissions(values: np.ndarray, slots) -> float:
    return math.fsum(w * float(values[i]) for i, w in slots)


def _contiguous(start: int, full: int, frac: float) -> tuple[tuple[int, float], ...]:
    slots = [(start + i, 1.0) for i in range(full)]
    if frac > 0:
        slots.append((start + full, frac))
    return tuple(slots)


def _check_fit(trace: CarbonTrace, job: Job, slack_slots: int) -> None:
    end = job.arrival_slot + job.n_slots + slack_slots
    if end > len(trace):
        raise ScheduleError(
            f"job window [{job.arrival_slot}, {end}) exceeds trace of {len(trace)} slots"
        )


def schedule_baseline(trace: CarbonTrace, job: Job) -> ScheduleResult:
    """Run as soon as the job arrives."""
    _check_fit(trace, job, 0)
    full, frac = job_slots(job)
    slots = _contiguous(job.arrival_slot, full, frac)
    return ScheduleResult(slots, _emissions(trace.values, slots), "baseline")


def schedule_deferred(trace: CarbonTrace, job: Job) -> ScheduleResult:
    """Best contiguous start within the slack; earliest start wins ties."""
    slack = job.slack_slots
    _check_fit(trace, job, slack)
    full, frac = job_slots(job)
    a = job.arrival_slot
    v = trace.values
    base, _ = kernels.sweep_deferred(
        np.ascontiguousarray(v[a : a + job.n_slots + slack]), full, frac, 0
    )
    # screen with the fast costs, settle near-ties with exact sums
    approx = base[: slack + 1]
    cutoff = approx.min() + 1e-9 * max(1.0, abs(approx.min()))
    best = None
    for d in np.flatnonzero(approx <= cutoff):
        slots = _contiguous(a + int(d), full, frac)
        e = _emissions(v, slots)
        if best is None or e < best[1]:
            best = (slots, e)
    return ScheduleResult(best[0], best[1], "deferred")


def schedule_interrupted(trace: CarbonTrace, job: Job) -> ScheduleResult:
    """Cheapest slots in the window; the fractional tail takes the next cheapest."""
    if not job.interruptible:
        raise ScheduleError("interrupted placement requires an interruptible job")
    slack = job.slack_slots
    _check_fit(trace, job, slack)
    full, frac = job_slots(job)
    a = job.arrival_slot
    window = trace.values[a : a + job.n_slots + slack]
    order = np.argsort(window, kind="stable")
    chosen = [(a + int(i), 1.0) for i in order[:full]]
    if frac > 0:
        chosen.append((a + int(order[full]), frac))
    slots = tuple(sorted(chosen))
    return ScheduleResult(slots, _emissions(trace.values, slots), "interrupted")


SCHEDULERS = {
    "baseline": schedule_baseline,
    "deferred": schedule_deferred,
    "interrupted": schedule_interrupted,
}


def schedule(trace: CarbonTrace, job: Job, policy: str) -> ScheduleResult:
    try:
        return SCHEDULERS[policy](trace, job)
    except KeyError:
        raise ScheduleError(f"unknown policy {policy!r}") from None


def n_arrivals(trace: CarbonTrace, job: Job) -> int:
    """Arrival slots whose whole window fits in the trace (no wrap-around)."""
    return max(0, len(trace) - job.window_slots + 1)


def arrival_emissions(trace: CarbonTrace, job: Job, policy: str, backend=None):
    """Per-arrival (baseline, shifted) emissions arrays for every valid arrival."""
    if policy not in POLICIES:
        raise ScheduleError(f"unknown policy {policy!r}")
    impl = kernels.BACKENDS[backend] if backend else kernels
    full, frac = job_slots(job)
    values = np.ascontiguousarray(trace.values)
    slack = job.slack_slots
    base, deferred = impl.sweep_deferred(values, full, frac, slack)
    if policy == "baseline":
        return base, base
    if policy == "deferred":
        return base, deferred
    inter = impl.sweep_interrupted(values, full, frac, slack)
    # an exact sum can land a few ulps above the contiguous one; at most equal
    return base, np.minimum(inter, deferred)


def relative_per_arrival(base: np.ndarray, shifted: np.ndarray) -> np.ndarray:
    out = np.zeros_like(base)
    pos = base > 0
    out[pos] = 100.0 * (base[pos] - shifted[pos]) / base[pos]
    return out


@dataclass(frozen=True)
class SweepResult:
    mean: float
    std: float
    n_arrivals: int
    mean_absolute: float
    std_absolute: float


def summarize(base: np.ndarray, shifted: np.ndarray, length_hours: float) -> SweepResult:
    if len(base) == 0:
        raise ScheduleError("no valid arrival slot for this job window")
    rel = relative_per_arrival(base, shifted)
    absolute = (base - shifted) / length_hours
    m, s = mean_std(rel.tolist())
    ma, sa = mean_std(absolute.tolist())
    return SweepResult(m, s, len(base), ma, sa)


def sweep_arrivals(trace: CarbonTrace, job_template: Job, policy: str, backend=None) -> SweepResult:
    """Relative savings vs. baseline over every arrival slot whose window fits."""
    if policy == "interrupted" and not job_template.interruptible:
        raise ScheduleError("interrupted sweep requires an interruptible job")
    if n_arrivals(trace, job_template) == 0:
        raise ScheduleError(
            f"{trace.region_id}: no arrival fits a {job_template.window_slots}-slot window"
        )
    base, shifted = arrival_emissions(trace, job_template, policy, backend)
    return summarize(base, shifted, job_template.length_hours)
