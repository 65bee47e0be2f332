"""Temporal activity analysis: timelines, hour/weekday profiles, and the
distribution of gaps between consecutive activities.

The gap distribution is modeled as a power law minus a rectified
24-hour-periodic cosine,

    f(t) = k * t**(-alpha) - |A * cos(pi*t/T - pi/2)|

with t in hours.  :func:`fit_power_cosine` fits (k, alpha, A) to a
binned gap histogram by least squares in log space, with the period T
held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import minimize

from .eventlog import ActivityType, EventLog

__all__ = [
    "IntervalHistogram",
    "PowerCosineParams",
    "FitResult",
    "FitError",
    "DailyProfile",
    "WeeklyProfile",
    "WithinFraction",
    "activity_timeline",
    "daily_profile",
    "weekly_profile",
    "interval_distribution",
    "fraction_within",
    "eval_power_cosine",
    "fit_power_cosine",
]

SECONDS_PER_HOUR = 3600
SECONDS_PER_DAY = 86400
# 1970-01-01 was a Thursday; shift so Monday maps to 0.
_EPOCH_WEEKDAY = 3


class FitError(ValueError):
    """Raised when a histogram cannot support the requested fit."""


@dataclass(frozen=True)
class IntervalHistogram:
    """Binned distribution of consecutive-activity gaps.

    Bin i covers [i*bin_width, (i+1)*bin_width) seconds; empty bins are
    omitted from ``counts``.
    """

    perspective: str
    bin_width: int
    counts: Mapping[int, float]
    total_intervals: float

    def __post_init__(self) -> None:
        if self.perspective not in ("learner", "course"):
            raise ValueError("perspective must be 'learner' or 'course'")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")

    def nonempty_bins(self) -> list[int]:
        return sorted(i for i, c in self.counts.items() if c > 0)


@dataclass(frozen=True)
class PowerCosineParams:
    """Parameters of the power-law-plus-rectified-cosine gap model."""

    k: float
    alpha: float
    amplitude: float
    period_hours: float = 24.0

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("k must be > 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.period_hours <= 0:
            raise ValueError("period_hours must be > 0")


@dataclass(frozen=True)
class FitResult:
    params: PowerCosineParams
    residual: float
    bins_used: int


@dataclass(frozen=True)
class WithinFraction:
    """Share of intervals below a threshold; ``empty`` marks a 0-total histogram."""

    value: float
    empty: bool = False


@dataclass(frozen=True)
class DailyProfile:
    """Hour-of-day event counts per activity type (24 bins, hour 0-23)."""

    counts: np.ndarray  # shape (len(ActivityType), 24)

    def for_type(self, t: ActivityType) -> np.ndarray:
        return self.counts[int(t)]


@dataclass(frozen=True)
class WeeklyProfile:
    """Day-of-week event counts per activity type (7 bins, Monday=0)."""

    counts: np.ndarray  # shape (len(ActivityType), 7)

    def for_type(self, t: ActivityType) -> np.ndarray:
        return self.counts[int(t)]


def activity_timeline(log: EventLog, bucket_seconds: int) -> list[tuple[int, int]]:
    """Event counts per time bucket, zeros included across the log's span.

    Buckets are aligned to multiples of ``bucket_seconds`` since the
    epoch; each point is (bucket_start_seconds, count).
    """
    if bucket_seconds <= 0:
        raise ValueError("bucket must be positive")
    if len(log) == 0:
        return []
    b = log.timestamps // bucket_seconds
    lo, hi = int(b.min()), int(b.max())
    counts = np.bincount(b - lo, minlength=hi - lo + 1)
    return [(int((lo + i) * bucket_seconds), int(n)) for i, n in enumerate(counts)]


def _profile(log: EventLog, n_bins: int, bin_of) -> np.ndarray:
    n_types = len(ActivityType)
    if len(log) == 0:
        return np.zeros((n_types, n_bins), dtype=np.int64)
    bins = bin_of(log.timestamps)
    combined = log.activity_codes.astype(np.int64) * n_bins + bins
    flat = np.bincount(combined, minlength=n_types * n_bins)
    return flat.reshape(n_types, n_bins)


def daily_profile(log: EventLog, tz_offset_seconds: int = 0) -> DailyProfile:
    """Per-type event counts by hour of day in the configured zone."""
    return DailyProfile(
        _profile(log, 24, lambda ts: ((ts + tz_offset_seconds) // SECONDS_PER_HOUR) % 24)
    )


def weekly_profile(log: EventLog, tz_offset_seconds: int = 0) -> WeeklyProfile:
    """Per-type event counts by day of week (Monday=0) in the configured zone."""
    return WeeklyProfile(
        _profile(
            log,
            7,
            lambda ts: ((ts + tz_offset_seconds) // SECONDS_PER_DAY + _EPOCH_WEEKDAY) % 7,
        )
    )


def interval_distribution(
    log: EventLog, perspective: str, bin_width: int
) -> IntervalHistogram:
    """Histogram of gaps between consecutive events of the same entity.

    ``perspective='learner'`` takes gaps between a learner's successive
    events across all courses; ``perspective='course'`` takes gaps
    between successive events within one course across all learners.
    Entities with fewer than two events contribute nothing.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if perspective == "learner":
        entity = log.learner_codes
        ts = log.timestamps  # canonical order is already (learner, time)
    elif perspective == "course":
        order = np.lexsort((log.timestamps, log.course_codes))
        entity = log.course_codes[order]
        ts = log.timestamps[order]
    else:
        raise ValueError("perspective must be 'learner' or 'course'")

    if len(ts) < 2:
        return IntervalHistogram(perspective, bin_width, {}, 0)
    same = entity[1:] == entity[:-1]
    gaps = (ts[1:] - ts[:-1])[same]
    if len(gaps) == 0:
        return IntervalHistogram(perspective, bin_width, {}, 0)
    bins = gaps // bin_width
    idx, cnt = np.unique(bins, return_counts=True)
    counts = {int(i): int(c) for i, c in zip(idx, cnt)}
    return IntervalHistogram(perspective, bin_width, counts, int(len(gaps)))


def fraction_within(hist: IntervalHistogram, threshold_seconds: int) -> WithinFraction:
    """Fraction of intervals in bins fully below ``threshold_seconds``.

    The threshold must be a positive multiple of the bin width so the
    answer never involves a partial bin.
    """
    if threshold_seconds <= 0 or threshold_seconds % hist.bin_width != 0:
        raise ValueError("threshold must be a positive multiple of bin_width")
    if hist.total_intervals == 0:
        return WithinFraction(0.0, empty=True)
    limit = threshold_seconds // hist.bin_width
    below = sum(c for i, c in hist.counts.items() if i < limit)
    return WithinFraction(below / hist.total_intervals, empty=False)


def eval_power_cosine(params: PowerCosineParams, t_hours):
    """Evaluate k*t^(-alpha) - |A*cos(pi*t/T - pi/2)| at t (hours, > 0)."""
    t = np.asarray(t_hours, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("t must be > 0")
    osc = np.abs(
        params.amplitude * np.cos(np.pi * t / params.period_hours - np.pi / 2.0)
    )
    out = params.k * t ** (-params.alpha) - osc
    return float(out) if np.isscalar(t_hours) else out


def _objective(theta, t, lny, y, osc_shape):
    lnk, alpha, a = theta
    amp = abs(a)
    with np.errstate(over="ignore", invalid="ignore"):
        model = math.exp(min(lnk, 700.0)) * t ** (-alpha) - amp * osc_shape
        floor = y * 1e-9
        clipped = np.maximum(model, floor)
        r = np.log(clipped) - lny
        val = float(r @ r)
        # Keep the objective finite but increasing in any nonpositivity
        # violation of the model at a bin center.
        viol = np.maximum(0.0, -model) / y
        val += 1e3 * float(viol.sum())
    if not np.isfinite(val):
        return 1e30
    return val


def _nm(fun, x0, args):
    res = minimize(
        fun,
        x0,
        args=args,
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": 1e-9, "maxiter": 10000, "maxfev": 20000},
    )
    return res.x, float(res.fun)


def fit_power_cosine(
    hist: IntervalHistogram,
    period_hours: float = 24.0,
    fit_amplitude: bool = True,
) -> FitResult:
    """Least-squares fit of the gap model to a histogram, in log space.

    Frequencies are normalised to a density per hour over nonempty
    bins; empty bins are excluded (their log is undefined), and bins
    where a candidate model is nonpositive are excluded from the log
    term with a penalty proportional to the violation.  The search is
    a fixed multi-start grid over the exponent and amplitude followed
    by Nelder-Mead refinement, so the result is deterministic for a
    given histogram.

    Requires at least 8 nonempty bins; when the amplitude is fitted the
    nonempty bins must span at least two periods.
    """
    if period_hours <= 0:
        raise ValueError("period_hours must be > 0")
    bins = hist.nonempty_bins()
    if len(bins) < 8:
        raise FitError(f"need >= 8 nonempty bins, got {len(bins)}")
    w_hours = hist.bin_width / SECONDS_PER_HOUR
    t = (np.asarray(bins, dtype=np.float64) + 0.5) * w_hours
    total = float(sum(hist.counts[i] for i in bins))
    y = np.asarray([hist.counts[i] for i in bins], dtype=np.float64) / (total * w_hours)
    lny = np.log(y)
    if fit_amplitude and (t[-1] - t[0]) < 2.0 * period_hours:
        raise FitError("nonempty bins must span >= 2 periods to identify the amplitude")

    osc_shape = np.abs(np.cos(np.pi * t / period_hours - np.pi / 2.0))
    lnt = np.log(t)
    y_max = float(y.max())

    alpha_grid = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    amp_grid = (0.0, 0.01 * y_max, 0.1 * y_max) if fit_amplitude else (0.0,)

    best_x, best_val = None, math.inf
    for alpha0 in alpha_grid:
        lnk0 = float(np.mean(lny + alpha0 * lnt))
        for a0 in amp_grid:
            x, val = _nm(_objective, np.array([lnk0, alpha0, a0]), (t, lny, y, osc_shape))
            if not fit_amplitude:
                # Project out the amplitude coordinate entirely.
                x = np.array([x[0], x[1], 0.0])
                val = _objective(x, t, lny, y, osc_shape)
            if val < best_val - 1e-15:
                best_x, best_val = x, val

    # A pure power law is a frequent special case; refine it separately
    # and prefer it on ties so a zero amplitude is recovered exactly.
    def obj2(theta2, *args):
        return _objective(np.array([theta2[0], theta2[1], 0.0]), *args)

    x2, val2 = _nm(obj2, np.array([best_x[0], best_x[1]]), (t, lny, y, osc_shape))
    if val2 <= best_val + 1e-15:
        best_x = np.array([x2[0], x2[1], 0.0])
        best_val = val2

    lnk, alpha, a = best_x
    amp = abs(float(a))
    if alpha <= 0:
        raise FitError("fit did not converge to a positive exponent")
    params = PowerCosineParams(
        k=math.exp(float(lnk)),
        alpha=float(alpha),
        amplitude=amp,
        period_hours=period_hours,
    )
    model = params.k * t ** (-params.alpha) - params.amplitude * osc_shape
    pos = model > 0
    resid = float(np.sum((np.log(model[pos]) - lny[pos]) ** 2))
    return FitResult(params=params, residual=resid, bins_used=int(pos.sum()))
