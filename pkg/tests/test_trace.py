import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonshift.trace import (
    PeriodicityResult,
    TraceError,
    classify_quadrant,
    classify_trend,
    compute_stats,
    corpus_averages,
    detect_periodicity,
    kmeans_cluster,
    load_trace,
    load_traces,
    read_regions,
    trend_cluster_names,
    trend_delta,
    write_trace_csv,
)

from .conftest import make_trace
from .oracles import optimal_1d_clusters

HEADER = "timestamp,region_id,carbon_intensity\n"


def csv_text(rows):
    return HEADER + "".join(f"{ts},{r},{v}\n" for ts, r, v in rows)


def test_load_three_rows():
    text = csv_text(
        [("2021-01-01T00:00:00Z", "X", 10), ("2021-01-01T01:00:00Z", "X", 20), ("2021-01-01T02:00:00Z", "X", 30)]
    )
    t = load_trace(text, "X")
    assert list(t.values) == [10, 20, 30]
    assert t.start_time.isoformat() == "2021-01-01T00:00:00+00:00"
    assert t.end_time.hour == 2


def test_two_hour_gap_is_interpolated():
    text = csv_text([("2021-01-01T00:00:00Z", "X", 10), ("2021-01-01T03:00:00Z", "X", 40)])
    assert list(load_trace(text, "X").values) == [10, 20, 30, 40]


def test_gap_above_limit_rejected():
    text = csv_text([("2021-01-01T00:00:00Z", "X", 10), ("2021-01-01T05:00:00Z", "X", 40)])
    with pytest.raises(TraceError, match="gap of 4 hours"):
        load_trace(text, "X")
    assert len(load_trace(text, "X", max_gap=4)) == 6


@pytest.mark.parametrize(
    "rows, msg",
    [
        ([("2021-01-01T00:00:00Z", "X", -1)], "negative"),
        ([("2021-01-01T00:00:00Z", "X", "nan")], "non-finite"),
        ([("2021-01-01T00:30:00Z", "X", 1)], "hour boundary"),
        ([("2021-01-01T01:00:00Z", "X", 1), ("2021-01-01T00:00:00Z", "X", 1)], "increasing"),
        ([("2021-01-01T01:00:00Z", "X", 1), ("2021-01-01T01:00:00Z", "X", 2)], "increasing"),
        ([("garbage", "X", 1)], "malformed"),
        ([("2021-01-01T00:00:00Z", "Y", 1)], "no rows"),
    ],
)
def test_invalid_rows(rows, msg):
    with pytest.raises(TraceError, match=msg):
        load_trace(csv_text(rows), "X")


def test_missing_column():
    with pytest.raises(TraceError, match="missing columns"):
        load_trace("timestamp,region_id\n2021-01-01T00:00:00Z,X\n", "X")


def test_offset_timestamps_normalized_to_utc():
    text = csv_text([("2021-01-01T02:00:00+02:00", "X", 5)])
    assert load_trace(text, "X").start_time.hour == 0


def test_mixed_file_round_trip():
    a = make_trace([1.5, 2.25, 3.0], "A")
    b = make_trace([7.0, 0.1, 4.0], "B")
    buf = io.StringIO()
    write_trace_csv([a, b], buf)
    data = buf.getvalue()
    assert read_regions(data) == ["A", "B"]
    loaded = load_traces(data.encode())
    assert list(loaded["A"].values) == list(a.values)
    assert list(loaded["B"].values) == list(b.values)
    assert load_trace(io.BytesIO(data.encode()), "B").values[1] == 0.1


def test_values_are_read_only():
    t = make_trace([1, 2, 3])
    with pytest.raises(ValueError):
        t.values[0] = 5


def test_stats_population():
    s = compute_stats(make_trace([2, 4, 4, 4, 5, 5, 7, 9]))
    assert (s.mean, s.std, s.cv, s.min, s.max) == (5.0, 2.0, 0.4, 2.0, 9.0)


def test_stats_window_and_zero_mean():
    t = make_trace([0, 0, 3, 5])
    assert compute_stats(t, window=(0, 2)).cv == 0.0
    assert compute_stats(t, window=slice(2, 4)).mean == 4.0
    with pytest.raises(TraceError):
        compute_stats(t, window=(4, 4))


def test_per_day_cv_averages_daily_cvs():
    day1 = [10.0] * 24
    day2 = [10.0, 30.0] * 12  # mean 20, std 10
    s = compute_stats(make_trace(day1 + day2), per_day=True)
    assert s.cv == pytest.approx(0.25)
    with pytest.raises(TraceError):
        compute_stats(make_trace([1, 2]), per_day=True)


def test_quadrants_ties_count_as_low():
    stats = [compute_stats(make_trace(v)) for v in ([100, 100], [200, 200], [50, 150])]
    avg_ci, avg_cv = corpus_averages(stats)
    assert avg_ci == pytest.approx(400 / 3)
    labels = [str(classify_quadrant(s, avg_ci, avg_cv)) for s in stats]
    assert labels == ["low-ci/low-cv", "high-ci/low-cv", "low-ci/high-cv"]
    s = compute_stats(make_trace([avg_ci, avg_ci]))
    assert classify_quadrant(s, avg_ci, 0.0).ci_class == "low"


def test_periodicity_weekly_pattern():
    t = np.arange(24 * 7 * 6)
    weekly = np.where((t // 24) % 7 >= 5, 50.0, 100.0)
    r = detect_periodicity(make_trace(weekly))
    assert r.score(168) > 0.5 > r.score(24)
    assert r.best[0] == 168


def test_periodicity_requires_two_cycles():
    with pytest.raises(TraceError, match="too short"):
        detect_periodicity(make_trace(np.ones(300)))
    with pytest.raises(TraceError):
        detect_periodicity(make_trace(np.ones(400)), candidate_periods=(0,))


def test_periodicity_result_lookup():
    r = PeriodicityResult(((24, 0.9), (168, 0.1)))
    assert r.best == (24, 0.9)
    with pytest.raises(KeyError):
        r.score(12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1000), min_size=336, max_size=400))
def test_periodicity_scores_bounded(values):
    r = detect_periodicity(make_trace(values))
    assert all(0.0 <= s <= 1.0 for _, s in r.periods)


@pytest.mark.parametrize(
    "dm, dcv, label",
    [
        (0, 0, "insignificant"),
        (25, 0.01, "insignificant"),
        (-26, 0, "improved"),
        (30, -0.2, "worsened"),
        (-30, -0.2, "improved"),
        (5, 0.02, "improved"),
        (5, -0.02, "worsened"),
    ],
)
def test_trend_rule(dm, dcv, label):
    assert classify_trend(dm, dcv) == label


def test_trend_delta_requires_a_month():
    a = make_trace(np.full(672, 100.0), "A")
    b = make_trace(np.full(672, 60.0), "A")
    d = trend_delta(a, b)
    assert (d.delta_mean, d.delta_cv, d.cluster) == (-40.0, 0.0, "improved")
    with pytest.raises(TraceError, match="one month"):
        trend_delta(a, b.slice(0, 671))


def test_kmeans_matches_exact_1d_optimum():
    rng = np.random.default_rng(3)
    xs = np.concatenate([rng.normal(c, 1.0, 6) for c in (0, 20, 50)])
    res = kmeans_cluster(xs[:, None], k=3, seed=1)
    assert sorted(res.centroids[:, 0]) == pytest.approx(optimal_1d_clusters(xs.tolist()))
    assert res.inertia == pytest.approx(res.history[-1])


def test_kmeans_history_non_increasing_and_deterministic():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(200, 2))
    a = kmeans_cluster(pts, k=4, seed=7)
    b = kmeans_cluster(pts, k=4, seed=7)
    assert np.array_equal(a.labels, b.labels)
    assert all(x >= y - 1e-9 for x, y in zip(a.history, a.history[1:]))


def test_kmeans_rejects_too_few_distinct_points():
    with pytest.raises(TraceError):
        kmeans_cluster(np.ones((10, 2)), k=2)


def test_cluster_names_follow_mean_change():
    names = trend_cluster_names(np.array([[5.0, 0], [-90.0, 0.1], [80.0, -0.1]]))
    assert names == {0: "insignificant", 1: "improved", 2: "worsened"}
    assert trend_cluster_names(np.zeros((2, 2))) == {0: "cluster0", 1: "cluster1"}


def test_scaled_and_slice():
    t = make_trace([1, 2, 3, 4])
    assert list(t.slice(1, 3).values) == [2, 3]
    assert t.slice(1, 3).start_time.hour == 1
    assert list(t.scaled(2).values) == [2, 4, 6, 8]
    assert math.isclose(compute_stats(t.scaled(3)).cv, compute_stats(t).cv)
