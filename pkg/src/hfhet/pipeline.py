"""Tick-data ingestion, cleaning, calendar sampling and daily reports.

The cleaning routine keeps transactions inside the regular session,
drops nonpositive prices, merges same-second transactions at the
size-weighted mean price, and samples the result on a fixed calendar
grid by previous-tick interpolation. Daily series feed the three test
variants (coarser grids for the raw-increment tests, the fine grid for
the pre-averaged one) and aggregate into rejection-proportion tables
and cross-sectional spot-variance curves.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, DegenerateDataError, HfhetError, ParameterError
from .estimators import TuningParams, preavg_params, window_kn
from .het import TestOutcome, VARIANTS, decision, run_test, spot_profile
from .simulate import SamplePath, SimGrid

__all__ = [
    "TickRecord",
    "RowError",
    "LoadResult",
    "CleaningStats",
    "CleanSeries",
    "SpanSpec",
    "VariantPlan",
    "DailyReport",
    "SESSION_START",
    "SESSION_END",
    "load_ticks",
    "clean",
    "sample_calendar",
    "restrict_span",
    "subsample",
    "daily_report",
    "spot_curve",
    "synthetic_tick_csv",
    "parse_span",
]

SESSION_START = dt.time(9, 30, 0)
SESSION_END = dt.time(16, 0, 0)


@dataclass(frozen=True)
class TickRecord:
    """One transaction, timestamp floored to the second."""

    timestamp: dt.datetime
    price: float
    size: int


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


@dataclass
class LoadResult:
    """Per-day tick records in timestamp order plus row-level errors."""

    days: Dict[dt.date, List[TickRecord]]
    row_errors: List[RowError]


def load_ticks(source) -> LoadResult:
    """Parse a tick CSV with header date,time,price,size.

    ``source`` is a path or an open text stream. Sub-second timestamps
    are floored to the second. Malformed rows are collected as
    :class:`RowError` entries instead of aborting; an unusable header is
    fatal.
    """
    if hasattr(source, "read"):
        return _load_ticks_stream(source)
    with open(source, "r", newline="") as handle:
        return _load_ticks_stream(handle)


def _load_ticks_stream(stream) -> LoadResult:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        return LoadResult(days={}, row_errors=[])
    if [c.strip().lower() for c in header] != ["date", "time", "price", "size"]:
        raise DataError(f"expected header date,time,price,size; got {header!r}")
    days: Dict[dt.date, List[TickRecord]] = {}
    row_errors: List[RowError] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            if len(row) != 4:
                raise ValueError(f"expected 4 fields, got {len(row)}")
            day = dt.date.fromisoformat(row[0].strip())
            clock = _parse_time_floored(row[1].strip())
            price = float(row[2])
            if not math.isfinite(price):
                raise ValueError(f"non-finite price {row[2]!r}")
            size = int(row[3])
            if size < 0:
                raise ValueError(f"negative size {size}")
        except (ValueError, ArithmeticError) as exc:
            row_errors.append(RowError(line=line_no, message=str(exc)))
            continue
        days.setdefault(day, []).append(
            TickRecord(timestamp=dt.datetime.combine(day, clock), price=price, size=size)
        )
    ordered = {day: sorted(records, key=lambda r: r.timestamp) for day, records in sorted(days.items())}
    return LoadResult(days=ordered, row_errors=row_errors)


def _parse_time_floored(text: str) -> dt.time:
    base = text.split(".", 1)[0]
    parsed = dt.datetime.strptime(base, "%H:%M:%S")
    return parsed.time()


@dataclass
class CleaningStats:
    input_rows: int = 0
    dropped_outside_session: int = 0
    dropped_nonpositive_price: int = 0
    merged_groups: int = 0
    zero_size_groups: int = 0
    output_rows: int = 0

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def clean(
    ticks: Sequence[TickRecord],
    session: Tuple[dt.time, dt.time] = (SESSION_START, SESSION_END),
) -> Tuple[List[TickRecord], CleaningStats]:
    """Session filter, nonpositive-price drop, same-timestamp merge.

    Records outside [session start, session end] and records with
    price <= 0 are dropped; groups sharing a timestamp collapse to one
    record at the size-weighted mean price with the summed size. A group
    with total size 0 falls back to the unweighted mean and is flagged
    in the stats. Idempotent: cleaning a cleaned list is a no-op.
    """
    stats = CleaningStats(input_rows=len(ticks))
    start, end = session
    kept: List[TickRecord] = []
    for record in ticks:
        clock = record.timestamp.time()
        if clock < start or clock > end:
            stats.dropped_outside_session += 1
            continue
        if record.price <= 0.0:
            stats.dropped_nonpositive_price += 1
            continue
        kept.append(record)
    kept.sort(key=lambda r: r.timestamp)

    merged: List[TickRecord] = []
    i = 0
    while i < len(kept):
        j = i
        while j + 1 < len(kept) and kept[j + 1].timestamp == kept[i].timestamp:
            j += 1
        group = kept[i : j + 1]
        if len(group) == 1:
            merged.append(group[0])
        else:
            stats.merged_groups += 1
            total_size = sum(r.size for r in group)
            if total_size > 0:
                price = sum(r.price * r.size for r in group) / total_size
            else:
                stats.zero_size_groups += 1
                price = sum(r.price for r in group) / len(group)
            merged.append(TickRecord(timestamp=group[0].timestamp, price=price, size=total_size))
        i = j + 1
    stats.output_rows = len(merged)
    return merged, stats


@dataclass(frozen=True)
class CleanSeries:
    """A calendar-sampled daily log-price series over a clock-time span."""

    day: dt.date
    grid_seconds: int
    log_prices: np.ndarray
    span: Tuple[dt.time, dt.time]

    def __post_init__(self):
        values = np.asarray(self.log_prices, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise DataError("log_prices must be a finite 1-d array")
        object.__setattr__(self, "log_prices", values)

    @property
    def n(self) -> int:
        return self.log_prices.shape[0] - 1

    def to_path(self) -> SamplePath:
        """Re-index the span to [0, 1] as the estimators expect."""
        return SamplePath(grid=SimGrid(self.n), obs=self.log_prices, labels=("real",))

    def grid_times(self) -> List[dt.time]:
        base = dt.datetime.combine(self.day, self.span[0])
        return [(base + dt.timedelta(seconds=self.grid_seconds * k)).time() for k in range(self.n + 1)]


def _seconds_of(clock: dt.time) -> int:
    return clock.hour * 3600 + clock.minute * 60 + clock.second


def sample_calendar(
    ticks: Sequence[TickRecord],
    grid_seconds: int,
    span: Tuple[dt.time, dt.time] = (SESSION_START, SESSION_END),
) -> CleanSeries:
    """Previous-tick sampling of cleaned records on a fixed calendar grid.

    Each grid time takes the last observed price at or before it; the
    day is rejected when no record exists at or before the span start.
    """
    if grid_seconds < 1:
        raise ParameterError(f"grid_seconds must be >= 1, got {grid_seconds}")
    if not ticks:
        raise DegenerateDataError("no records to sample")
    start_sec, end_sec = _seconds_of(span[0]), _seconds_of(span[1])
    if end_sec <= start_sec:
        raise ParameterError("span end must come after span start")
    day = ticks[0].timestamp.date()
    tick_secs = np.array([_seconds_of(r.timestamp.time()) for r in ticks], dtype=np.int64)
    prices = np.array([r.price for r in ticks], dtype=float)
    if np.any(np.diff(tick_secs) < 0):
        raise DataError("records must be sorted by timestamp")
    steps = (end_sec - start_sec) // grid_seconds
    grid = start_sec + grid_seconds * np.arange(steps + 1, dtype=np.int64)
    idx = np.searchsorted(tick_secs, grid, side="right") - 1
    if idx[0] < 0:
        raise DegenerateDataError(f"no opening price: first record after span start on {day}")
    if np.any(prices[idx] <= 0):
        raise DataError("nonpositive price survived cleaning; clean the records first")
    return CleanSeries(day=day, grid_seconds=grid_seconds, log_prices=np.log(prices[idx]), span=span)


def restrict_span(series: CleanSeries, start: dt.time, end: dt.time) -> CleanSeries:
    """Sub-series over [start, end]; both ends must sit on the grid."""
    base_start, base_end = (_seconds_of(t) for t in series.span)
    lo, hi = _seconds_of(start), _seconds_of(end)
    if lo < base_start or hi > base_end or hi <= lo:
        raise ParameterError(f"window {start}-{end} outside series span {series.span[0]}-{series.span[1]}")
    if (lo - base_start) % series.grid_seconds or (hi - base_start) % series.grid_seconds:
        raise ParameterError(f"window {start}-{end} not aligned to the {series.grid_seconds}s grid")
    i0 = (lo - base_start) // series.grid_seconds
    i1 = (hi - base_start) // series.grid_seconds
    if i1 > series.n:
        raise ParameterError(f"window {start}-{end} extends past the sampled grid")
    return CleanSeries(
        day=series.day,
        grid_seconds=series.grid_seconds,
        log_prices=series.log_prices[i0 : i1 + 1],
        span=(start, end),
    )


def subsample(series: CleanSeries, grid_seconds: int) -> CleanSeries:
    """Coarsen to a grid that is an integer multiple of the current one.

    Previous-tick sampling commutes with taking every k-th grid point,
    so this equals sampling the cleaned ticks directly at the coarse grid.
    """
    if grid_seconds == series.grid_seconds:
        return series
    if grid_seconds < series.grid_seconds or grid_seconds % series.grid_seconds:
        raise ParameterError(
            f"target grid {grid_seconds}s must be a multiple of the base grid {series.grid_seconds}s"
        )
    step = grid_seconds // series.grid_seconds
    return CleanSeries(
        day=series.day,
        grid_seconds=grid_seconds,
        log_prices=series.log_prices[::step],
        span=series.span,
    )


@dataclass(frozen=True)
class SpanSpec:
    start: dt.time
    end: dt.time

    @property
    def label(self) -> str:
        return f"{self.start:%H:%M}-{self.end:%H:%M}"


def parse_span(text: str) -> SpanSpec:
    """Parse 'HH:MM-HH:MM' into a SpanSpec."""
    try:
        lo, hi = text.split("-")
        h0, m0 = (int(x) for x in lo.strip().split(":"))
        h1, m1 = (int(x) for x in hi.strip().split(":"))
        return SpanSpec(dt.time(h0, m0), dt.time(h1, m1))
    except (ValueError, TypeError) as exc:
        raise ParameterError(f"malformed span {text!r}; expected HH:MM-HH:MM") from exc


@dataclass(frozen=True)
class VariantPlan:
    """Which grid a test variant consumes (e.g. 300s for plain, 5s for pre-averaged)."""

    variant: str
    grid_seconds: int

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}; known: {VARIANTS}")
        if self.grid_seconds < 1:
            raise ParameterError("grid_seconds must be >= 1")


DEFAULT_PLANS = (
    VariantPlan("plain", 300),
    VariantPlan("truncated", 300),
    VariantPlan("preaveraged", 5),
)


@dataclass
class DailyReport:
    """Per-day outcomes plus rejection proportions per (variant, alpha, span)."""

    outcomes: Dict[Tuple[str, str, str], TestOutcome]
    proportions: Dict[Tuple[str, float, str], float]
    day_counts: Dict[Tuple[str, str], int]
    excluded: List[Tuple[str, str, str, str]]
    alphas: Tuple[float, ...]
    spans: Tuple[str, ...]
    variants: Tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "spans": list(self.spans),
            "variants": list(self.variants),
            "day_counts": {f"{v}|{s}": c for (v, s), c in sorted(self.day_counts.items())},
            "proportions": {
                f"{v}|{a:g}|{s}": p for (v, a, s), p in sorted(self.proportions.items())
            },
            "excluded": [list(item) for item in self.excluded],
            "outcomes": {
                f"{day}|{v}|{s}": outcome.to_json_dict()
                for (day, v, s), outcome in sorted(self.outcomes.items())
            },
        }

    def proportions_csv(self) -> str:
        """Span-by-(variant x alpha) table mirroring the time-span analysis."""
        out = io.StringIO()
        headers = ["span"] + [f"{v}_{a:g}" for v in self.variants for a in self.alphas]
        out.write(",".join(headers) + "\n")
        for span in self.spans:
            cells = []
            for variant in self.variants:
                for alpha in self.alphas:
                    value = self.proportions.get((variant, alpha, span))
                    cells.append("" if value is None else f"{value:.10g}")
            out.write(",".join([span] + cells) + "\n")
        return out.getvalue()


def _min_increments(variant: str, n: int, tuning: TuningParams, mult: float) -> Tuple[bool, str]:
    """Day-size rule: require n >= mult * (localization window)."""
    if variant in ("plain", "truncated"):
        window = window_kn(n, tuning.theta)
    else:
        window, _ = preavg_params(n, tuning.c_pre, tuning.chi, tuning.a_ker, tuning.b_ker)
    if n < mult * window:
        return False, f"only {n} increments < {mult:g} x window {window}"
    return True, ""


def daily_report(
    days: Sequence[CleanSeries],
    plans: Sequence[VariantPlan] = DEFAULT_PLANS,
    tuning: TuningParams = TuningParams(),
    alphas: Sequence[float] = (0.10, 0.05, 0.01),
    spans: Optional[Sequence[SpanSpec]] = None,
    min_kn_mult: float = 10.0,
) -> DailyReport:
    """Run every requested test per day and span; aggregate rejection proportions.

    Day-level failures (too few increments, degenerate data, window
    configuration) exclude that day from the affected cell and are
    recorded with their reason, never raised.
    """
    if not days:
        raise ParameterError("no daily series supplied")
    alphas = tuple(float(a) for a in alphas)
    if spans is None:
        spans = [SpanSpec(days[0].span[0], days[0].span[1])]
    span_labels = tuple(s.label for s in spans)
    variants = tuple(p.variant for p in plans)
    if len(set(variants)) != len(variants):
        raise ParameterError("duplicate variant in plans")

    outcomes: Dict[Tuple[str, str, str], TestOutcome] = {}
    reject_counts: Dict[Tuple[str, float, str], int] = {}
    day_counts: Dict[Tuple[str, str], int] = {}
    excluded: List[Tuple[str, str, str, str]] = []

    for plan in plans:
        for span in spans:
            for series in days:
                day_label = series.day.isoformat()
                try:
                    coarse = subsample(series, plan.grid_seconds)
                    window = restrict_span(coarse, span.start, span.end)
                    ok, reason = _min_increments(plan.variant, window.n, tuning, min_kn_mult)
                    if not ok:
                        excluded.append((day_label, plan.variant, span.label, reason))
                        continue
                    outcome = run_test(window.to_path(), plan.variant, tuning, alpha=alphas[0])
                except HfhetError as exc:
                    excluded.append((day_label, plan.variant, span.label, str(exc)))
                    continue
                outcomes[(day_label, plan.variant, span.label)] = outcome
                day_counts[(plan.variant, span.label)] = day_counts.get((plan.variant, span.label), 0) + 1
                for alpha in alphas:
                    key = (plan.variant, alpha, span.label)
                    reject_counts[key] = reject_counts.get(key, 0) + int(decision(outcome.statistic, alpha))

    proportions = {}
    for (variant, alpha, span_label), count in reject_counts.items():
        total = day_counts.get((variant, span_label), 0)
        if total:
            proportions[(variant, alpha, span_label)] = count / total
    return DailyReport(
        outcomes=outcomes,
        proportions=proportions,
        day_counts=day_counts,
        excluded=excluded,
        alphas=alphas,
        spans=span_labels,
        variants=variants,
    )


def spot_curve(
    days: Sequence[CleanSeries],
    variant: str = "plain",
    tuning: TuningParams = TuningParams(),
    grid_seconds: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Cross-sectional average of per-block spot-variance estimates.

    Returns (block_times in [0, 1], mean spot variance per block), with
    days averaged index-wise; days with fewer blocks than the shortest
    day would be a data error, so the profile is truncated to the
    common block count.
    """
    if not days:
        raise ParameterError("no daily series supplied")
    profiles = []
    taus = None
    for series in days:
        coarse = subsample(series, grid_seconds) if grid_seconds else series
        tau, spots = spot_profile(coarse.to_path(), variant, tuning)
        profiles.append(spots)
        if taus is None or tau.shape[0] < taus.shape[0]:
            taus = tau
    common = min(p.shape[0] for p in profiles)
    stacked = np.vstack([p[:common] for p in profiles])
    return taus[:common], stacked.mean(axis=0)


def synthetic_tick_csv(
    stream,
    n_days: int = 10,
    seed: int = 20110103,
    base_sigma2: float = 1.4e-4,
    edge_factor: float = 4.0,
    start_day: dt.date = dt.date(2011, 1, 3),
    tick_seconds: int = 1,
) -> List[dt.date]:
    """Write a deterministic tick fixture with U-shaped intraday variance.

    Each day covers the 9:30-16:00 session with one tick every
    ``tick_seconds``; log-price increments are Gaussian with variance
    base_sigma2 * edge_factor in the first and last tenth of the session
    and base_sigma2 in between. A few malformed-session rows (early tick,
    zero price, duplicated timestamp) are injected per day so the
    cleaning stage has real work to do. Returns the day list.
    """
    if n_days < 1:
        raise ParameterError("n_days must be >= 1")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["date", "time", "price", "size"])
    session_seconds = _seconds_of(SESSION_END) - _seconds_of(SESSION_START)
    n = session_seconds // tick_seconds
    t_mid = (np.arange(n) + 0.5) / n
    variance = np.where((t_mid < 0.1) | (t_mid >= 0.9), edge_factor * base_sigma2, base_sigma2)
    day = start_day
    days: List[dt.date] = []
    for d in range(n_days):
        while day.weekday() >= 5:
            day += dt.timedelta(days=1)
        days.append(day)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(d,)))
        steps = np.sqrt(variance / n) * rng.standard_normal(n)
        logp = math.log(100.0) + np.concatenate([[0.0], np.cumsum(steps)])
        prices = np.exp(logp)
        sizes = rng.poisson(100, n + 1) + 1
        base = dt.datetime.combine(day, SESSION_START)
        writer.writerow([day.isoformat(), "09:29:59", f"{prices[0]:.6f}", "100"])
        for i in range(n + 1):
            stamp = (base + dt.timedelta(seconds=i * tick_seconds)).time()
            writer.writerow([day.isoformat(), f"{stamp:%H:%M:%S}", f"{prices[i]:.6f}", str(sizes[i])])
            if i == n // 2:
                # duplicate timestamp to exercise the weighted merge
                writer.writerow([day.isoformat(), f"{stamp:%H:%M:%S}", f"{prices[i] * 1.0001:.6f}", str(sizes[i])])
        writer.writerow([day.isoformat(), "12:00:00", "0", "50"])
        day += dt.timedelta(days=1)
    return days
