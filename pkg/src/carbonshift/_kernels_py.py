"""Numpy fallback for the arrival-sweep kernels in ``_kernels.pyx``."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_CHUNK = 512


def _n_slots(full, frac):
    return full + (1 if frac > 0.0 else 0)


def _window_costs(values, full, frac):
    n_cost = len(values) - _n_slots(full, frac) + 1
    if full > 0:
        cost = sliding_window_view(values, full).sum(axis=1)[:n_cost]
    else:
        cost = np.zeros(n_cost)
    if frac > 0.0:
        cost = cost + frac * values[full:full + n_cost]
    return cost


def sweep_deferred(values, full, frac, slack):
    """Per-arrival (baseline, deferred) emissions."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    n_arr = len(values) - (_n_slots(full, frac) + slack) + 1
    if n_arr <= 0:
        return np.empty(0), np.empty(0)
    cost = _window_costs(values, full, frac)
    base = cost[:n_arr].copy()
    deferred = sliding_window_view(cost, slack + 1).min(axis=1)[:n_arr]
    return base, np.ascontiguousarray(deferred)


def sweep_interrupted(values, full, frac, slack):
    """Per-arrival emissions of the k-smallest-slots placement."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    width = _n_slots(full, frac) + slack
    n_arr = len(values) - width + 1
    if n_arr <= 0:
        return np.empty(0)
    windows = sliding_window_view(values, width)[:n_arr]
    kth = min(full, width - 1)
    out = np.empty(n_arr)
    for lo in range(0, n_arr, _CHUNK):
        part = np.partition(windows[lo:lo + _CHUNK], kth, axis=1)
        acc = part[:, :full].sum(axis=1)
        if frac > 0.0:
            acc = acc + frac * part[:, full]
        out[lo:lo + _CHUNK] = acc
    return out
