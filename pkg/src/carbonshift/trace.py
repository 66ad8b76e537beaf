"""Hourly carbon-intensity traces: ingestion, statistics, periodicity, trends."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import BinaryIO, Iterable, Sequence, TextIO

import numpy as np

HOUR = timedelta(hours=1)
DEFAULT_MAX_GAP = 3
DEFAULT_PERIODS = (24, 168)
MIN_TREND_HOURS = 28 * 24
CSV_HEADER = ("timestamp", "region_id", "carbon_intensity")


class TraceError(ValueError):
    """Raised when a trace cannot be ingested or fails a precondition."""


@dataclass(frozen=True)
class CarbonTrace:
    region_id: str
    start_time: datetime
    values: np.ndarray = field(repr=False)

    resolution = HOUR

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise TraceError("trace values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise TraceError(f"{self.region_id}: non-finite carbon intensity")
        if np.any(values < 0):
            raise TraceError(f"{self.region_id}: negative carbon intensity")
        start = self.start_time
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        start = start.astimezone(timezone.utc)
        if start.minute or start.second or start.microsecond:
            raise TraceError(f"{self.region_id}: start time not on an hour boundary")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_time", start)

    def __len__(self):
        return len(self.values)

    @property
    def end_time(self) -> datetime:
        """Timestamp of the last slot."""
        return self.start_time + (len(self) - 1) * HOUR

    def timestamps(self) -> list[datetime]:
        return [self.start_time + i * HOUR for i in range(len(self))]

    def slice(self, start: int, stop: int) -> "CarbonTrace":
        return CarbonTrace(self.region_id, self.start_time + start * HOUR, self.values[start:stop])

    def scaled(self, factor: float) -> "CarbonTrace":
        return CarbonTrace(self.region_id, self.start_time, self.values * factor)


@dataclass(frozen=True)
class TraceStats:
    mean: float
    std: float
    cv: float
    min: float
    max: float


@dataclass(frozen=True)
class QuadrantLabel:
    ci_class: str
    cv_class: str

    def __str__(self):
        return f"{self.ci_class}-ci/{self.cv_class}-cv"


@dataclass(frozen=True)
class PeriodicityResult:
    periods: tuple[tuple[int, float], ...]

    def score(self, period: int) -> float:
        for p, s in self.periods:
            if p == period:
                return s
        raise KeyError(period)

    @property
    def best(self) -> tuple[int, float]:
        return self.periods[0]


@dataclass(frozen=True)
class TrendDelta:
    region_id: str
    delta_mean: float
    delta_cv: float
    cluster: str


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp and return it in UTC."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _text_stream(source) -> TextIO:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _read_rows(source) -> Iterable[tuple[int, dict]]:
    reader = csv.DictReader(_text_stream(source))
    if reader.fieldnames is None:
        raise TraceError("empty trace file")
    missing = [c for c in CSV_HEADER if c not in reader.fieldnames]
    if missing:
        raise TraceError(f"trace CSV missing columns: {', '.join(missing)}")
    for lineno, row in enumerate(reader, start=2):
        yield lineno, row


def read_regions(source: BinaryIO | TextIO | bytes | str) -> list[str]:
    """Region ids present in a canonical trace CSV, in first-seen order."""
    seen = {}
    for _, row in _read_rows(source):
        seen.setdefault(row["region_id"].strip(), None)
    return list(seen)


def load_trace(source, region_id: str, max_gap: int = DEFAULT_MAX_GAP) -> CarbonTrace:
    """Read ``region_id``'s rows from a canonical CSV into a gap-free trace.

    Runs of up to ``max_gap`` missing hours are filled by linear
    interpolation between their neighbours; longer gaps raise TraceError.
    """
    times: list[datetime] = []
    vals: list[float] = []
    for lineno, row in _read_rows(source):
        if (row.get("region_id") or "").strip() != region_id:
            continue
        try:
            ts = parse_timestamp(row["timestamp"])
            ci = float(row["carbon_intensity"])
        except (TypeError, ValueError) as exc:
            raise TraceError(f"{region_id}: malformed row at line {lineno}: {exc}") from None
        if ts.minute or ts.second or ts.microsecond:
            raise TraceError(f"{region_id}: line {lineno}: timestamp not on an hour boundary")
        if not math.isfinite(ci):
            raise TraceError(f"{region_id}: line {lineno}: non-finite carbon intensity")
        if ci < 0:
            raise TraceError(f"{region_id}: line {lineno}: negative carbon intensity {ci}")
        if times and ts <= times[-1]:
            raise TraceError(f"{region_id}: line {lineno}: timestamps not strictly increasing")
        times.append(ts)
        vals.append(ci)
    if not times:
        raise TraceError(f"no rows for region {region_id!r}")

    out = [vals[0]]
    for i in range(1, len(times)):
        step = (times[i] - times[i - 1]) // HOUR
        missing = step - 1
        if missing > max_gap:
            raise TraceError(
                f"{region_id}: gap of {missing} hours after {format_timestamp(times[i - 1])} "
                f"exceeds max_gap={max_gap}"
            )
        lo, hi = vals[i - 1], vals[i]
        for j in range(1, step):
            out.append(lo + (hi - lo) * j / step)
        out.append(hi)
    return CarbonTrace(region_id, times[0], np.array(out))


def load_traces(source, max_gap: int = DEFAULT_MAX_GAP) -> dict[str, CarbonTrace]:
    """Load every region found in a (possibly mixed) canonical CSV."""
    data = source.read() if hasattr(source, "read") else source
    if isinstance(data, str):
        data = data.encode("utf-8")
    return {r: load_trace(data, r, max_gap=max_gap) for r in read_regions(data)}


def write_trace_csv(traces: Iterable[CarbonTrace], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for trace in traces:
        for ts, v in zip(trace.timestamps(), trace.values):
            writer.writerow((format_timestamp(ts), trace.region_id, repr(float(v))))


def _window(trace: CarbonTrace, window) -> np.ndarray:
    if window is None:
        values = trace.values
    elif isinstance(window, slice):
        values = trace.values[window]
    else:
        start, stop = window
        values = trace.values[start:stop]
    if len(values) == 0:
        raise TraceError(f"{trace.region_id}: empty statistics window")
    return values


def _cv(mean: float, std: float) -> float:
    return std / mean if mean > 0 else 0.0


def compute_stats(trace: CarbonTrace, window=None, per_day: bool = False) -> TraceStats:
    """Population statistics over ``window`` (a slice or ``(start, stop)``).

    With ``per_day`` the CV is the average of the CVs of each complete
    24-hour day in the window instead of the CV of the whole window.
    """
    values = _window(trace, window)
    mean = float(np.mean(values))
    std = float(np.std(values))
    if per_day:
        days = len(values) // 24
        if days == 0:
            raise TraceError(f"{trace.region_id}: per-day CV needs at least 24 hours")
        daily = values[: days * 24].reshape(days, 24)
        means = daily.mean(axis=1)
        stds = daily.std(axis=1)
        cvs = np.divide(stds, means, out=np.zeros(days), where=means > 0)
        cv = float(cvs.mean())
    else:
        cv = _cv(mean, std)
    return TraceStats(mean=mean, std=std, cv=cv, min=float(values.min()), max=float(values.max()))


def corpus_averages(stats: Iterable[TraceStats]) -> tuple[float, float]:
    """Cross-region averages of mean CI and CV."""
    items = list(stats)
    if not items:
        raise TraceError("no statistics to average")
    return (
        float(np.mean([s.mean for s in items])),
        float(np.mean([s.cv for s in items])),
    )


def classify_quadrant(stats: TraceStats, avg_ci: float, avg_cv: float) -> QuadrantLabel:
    if not avg_ci > 0:
        raise TraceError("average carbon intensity must be positive")
    return QuadrantLabel(
        ci_class="high" if stats.mean > avg_ci else "low",
        cv_class="high" if stats.cv > avg_cv else "low",
    )


def _circular_acf(x: np.ndarray, lag: int, energy: float) -> float:
    return float(np.dot(x, np.roll(x, -lag)) / energy)


def detect_periodicity(
    trace: CarbonTrace, candidate_periods: Sequence[int] = DEFAULT_PERIODS
) -> PeriodicityResult:
    """Score each candidate period in [0, 1].

    The raw score is the circular autocorrelation of the mean-removed
    series at the period's lag. A lag that is a multiple of a shorter
    candidate also correlates through that shorter cycle, so the score is
    the excess over the best shorter candidate dividing it.
    """
    periods = sorted({int(p) for p in candidate_periods})
    if not periods or periods[0] <= 0:
        raise TraceError("candidate periods must be positive integers")
    if len(trace) < 2 * periods[-1]:
        raise TraceError(
            f"{trace.region_id}: trace of {len(trace)} hours too short for period {periods[-1]}"
        )
    x = trace.values - trace.values.mean()
    energy = float(np.dot(x, x))
    # relative floor: mean removal leaves rounding residue on constant traces
    if energy <= 1e-24 * len(x) * max(1.0, float(np.max(np.abs(trace.values)))) ** 2:
        return PeriodicityResult(tuple((p, 0.0) for p in periods))
    acf = {p: _circular_acf(x, p, energy) for p in periods}
    scored = []
    for p in periods:
        shorter = [acf[q] for q in periods if q < p and p % q == 0]
        raw = acf[p] - max(0.0, max(shorter)) if shorter else acf[p]
        scored.append((p, min(1.0, max(0.0, raw))))
    scored.sort(key=lambda ps: (-ps[1], ps[0]))
    return PeriodicityResult(tuple(scored))


def classify_trend(delta_mean: float, delta_cv: float, thresholds=(25.0, 0.01)) -> str:
    """Threshold rule for a year-over-year change.

    Within both thresholds the change is insignificant. A significant mean
    change decides by its sign; otherwise a rising CV counts as improved.
    """
    mean_tol, cv_tol = thresholds
    if abs(delta_mean) <= mean_tol and abs(delta_cv) <= cv_tol:
        return "insignificant"
    if abs(delta_mean) > mean_tol:
        return "improved" if delta_mean < 0 else "worsened"
    return "improved" if delta_cv > 0 else "worsened"


def trend_delta(
    trace_year_a: CarbonTrace,
    trace_year_b: CarbonTrace,
    thresholds=(25.0, 0.01),
    per_day: bool = False,
) -> TrendDelta:
    for t in (trace_year_a, trace_year_b):
        if len(t) < MIN_TREND_HOURS:
            raise TraceError(f"{t.region_id}: trend analysis needs at least one month of data")
    a = compute_stats(trace_year_a, per_day=per_day)
    b = compute_stats(trace_year_b, per_day=per_day)
    dm = b.mean - a.mean
    dcv = b.cv - a.cv
    return TrendDelta(trace_year_b.region_id, dm, dcv, classify_trend(dm, dcv, thresholds))


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: list[float]


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_cluster(
    points, k: int = 3, seed: int | None = 0, tol: float = 1e-9, max_iter: int = 300
) -> KMeansResult:
    """K-means++ seeding followed by Lloyd iterations.

    Stops when no centroid moves more than ``tol`` or after ``max_iter``
    iterations. ``history`` records the objective after each assignment.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise TraceError("points must be a 2-d array")
    if k < 1 or len(np.unique(pts, axis=0)) < k:
        raise TraceError(f"need at least k={k} distinct points")
    rng = np.random.default_rng(seed)
    n = len(pts)

    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    closest = _sq_dists(pts, centroids[:1]).ravel()
    for j in range(1, k):
        total = closest.sum()
        idx = rng.choice(n, p=closest / total)
        centroids[j] = pts[idx]
        closest = np.minimum(closest, _sq_dists(pts, centroids[j : j + 1]).ravel())

    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(pts, centroids)
        labels = d.argmin(axis=1)
        history.append(float(d[np.arange(n), labels].sum()))
        new = centroids.copy()
        for j in range(k):
            members = pts[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        shift = float(np.sqrt(((new - centroids) ** 2).sum(axis=1)).max())
        centroids = new
        if shift < tol:
            break
    d = _sq_dists(pts, centroids)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(n), labels].sum())
    return KMeansResult(labels, centroids, inertia, n_iter, history)


def trend_cluster_names(centroids: np.ndarray) -> dict[int, str]:
    """Name k=3 trend clusters by the mean-change coordinate of each centroid."""
    order = np.argsort(centroids[:, 0], kind="stable")
    if len(order) != 3:
        return {int(j): f"cluster{j}" for j in range(len(order))}
    names = ("improved", "insignificant", "worsened")
    return {int(j): names[i] for i, j in enumerate(order)}
