"""Displacement and postponed-hiring diagnostics below the duration threshold.

If the targeted subsidy displaced or delayed hires of workers just below
the eligibility threshold, their hire rate should rise once the subsidy
ends, while durations far from the threshold should not change. The
before/after change is compared between a near window and far windows.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .errors import EmptyPeriod
from .panel_ingest.cells import CellPanel, _as_day
from .panel_ingest.records import from_daynum
from .stats_core import TestResult, kernel_local_poly, silverman_bandwidth, welch_ttest

THRESHOLD_DAYS = 729
NEAR_WINDOW = (714, 728)
FAR_WINDOWS = ((365, 380), (545, 560))


@dataclass(frozen=True)
class DiffByDuration:
    duration: int
    mean_before: float
    mean_after: float
    diff: float
    n_before: int
    n_after: int


def outcome_diff_by_duration(
    panel: CellPanel,
    threshold: int = THRESHOLD_DAYS,
    split_date=dt.date(2015, 1, 1),
    before_period=None,
    after_period=None,
) -> list[DiffByDuration]:
    """Per duration below the threshold, the pooled outcome after minus before.

    Means are group-size weighted (total hires over total members). The
    default periods are everything before ``split_date`` and everything
    from it on.
    """
    split = _as_day(split_date)
    sub = panel.take(panel.duration < threshold)
    before = (sub.day < split) if before_period is None else _in(sub.day, before_period)
    after = (sub.day >= split) if after_period is None else _in(sub.day, after_period)
    if not (before & (sub.group_size > 0)).any():
        raise EmptyPeriod("no members in the before period")
    if not (after & (sub.group_size > 0)).any():
        raise EmptyPeriod("no members in the after period")
    durations, codes = np.unique(sub.duration, return_inverse=True)

    def pooled(mask):
        n = np.bincount(codes, weights=np.where(mask, sub.group_size, 0), minlength=durations.size)
        h = np.bincount(codes, weights=np.where(mask, sub.hires, 0), minlength=durations.size)
        return n, h

    nb, hb = pooled(before)
    na, ha = pooled(after)
    out = []
    for k, i in enumerate(durations):
        if nb[k] == 0 or na[k] == 0:
            continue
        mb, ma = hb[k] / nb[k], ha[k] / na[k]
        out.append(DiffByDuration(int(i), float(mb), float(ma), float(ma - mb), int(nb[k]), int(na[k])))
    return out


def _in(days, period) -> np.ndarray:
    lo, hi = (_as_day(p) for p in period)
    return (days >= lo) & (days <= hi)


def _pooled_by_day(panel: CellPanel, window) -> pd.Series:
    """Pooled window outcome per day, indexed by day number."""
    sub = panel.select(durations=window)
    frame = pd.DataFrame({"day": sub.day, "n": sub.group_size, "h": sub.hires}).groupby("day").sum()
    frame = frame[frame["n"] > 0]
    return frame["h"] / frame["n"]


def _calendar_key(days: np.ndarray) -> np.ndarray:
    """(month, day) key; 29 February gets -1 so it never matches."""
    d = days.astype("datetime64[D]")
    month = d.astype("datetime64[M]")
    mday = (d - month).astype(np.int64) + 1
    m = month.astype(np.int64) % 12 + 1
    key = m * 100 + mday
    return np.where(key == 229, -1, key)


def _year_of(days: np.ndarray) -> np.ndarray:
    return days.astype("datetime64[D]").astype("datetime64[Y]").astype(np.int64) + 1970


def _yearly_diffs(series: pd.Series, year: int, after_years) -> np.ndarray:
    """Same-calendar-day differences, after-years pooled minus ``year``."""
    days = series.index.to_numpy(np.int64)
    years = _year_of(days)
    keys = _calendar_key(days)
    before = pd.Series(series.to_numpy()[years == year], index=keys[years == year])
    mask = np.isin(years, list(after_years))
    after = pd.Series(series.to_numpy()[mask], index=keys[mask]).groupby(level=0).mean()
    before = before[before.index >= 0]
    after = after[after.index >= 0]
    common = before.index.intersection(after.index).sort_values()
    return (after.loc[common] - before.loc[common]).to_numpy()


def _cell_diffs(panel: CellPanel, window, year: int, after_years) -> np.ndarray:
    sub = panel.select(durations=window)
    sub = sub.take(sub.group_size > 0)
    keys = _calendar_key(sub.day)
    years = _year_of(sub.day)
    frame = pd.DataFrame({"i": sub.duration, "key": keys, "y": sub.outcome, "yr": years})
    frame = frame[frame["key"] >= 0]
    before = frame[frame["yr"] == year].set_index(["i", "key"])["y"]
    after = frame[frame["yr"].isin(list(after_years))].groupby(["i", "key"])["y"].mean()
    common = before.index.intersection(after.index).sort_values()
    return (after.loc[common] - before.loc[common]).to_numpy()


@dataclass(frozen=True)
class NearFarRow:
    year: int
    far_window: tuple
    near_window: tuple
    test: TestResult
    detected: bool
    detected_two_sided: bool
    p_one_sided: float
    n_near: int
    n_far: int

    def to_dict(self) -> dict:
        lo, hi = self.test.ci95
        return {
            "year": self.year,
            "near_window": list(self.near_window),
            "far_window": list(self.far_window),
            "mean": self.test.mean_diff,
            "std_err": self.test.std_err,
            "ci95_lower": lo,
            "ci95_upper": hi,
            "statistic": self.test.statistic,
            "dof": self.test.dof,
            "p_value": self.test.p_value,
            "p_one_sided": self.p_one_sided,
            "detected": self.detected,
            "detected_two_sided": self.detected_two_sided,
            "n_near": self.n_near,
            "n_far": self.n_far,
        }


def near_far_welch(
    panel: CellPanel,
    near=NEAR_WINDOW,
    far=FAR_WINDOWS,
    years=(2011, 2012, 2013, 2014),
    after_years=(2015,),
    *,
    sample_unit: str = "day",
) -> list[NearFarRow]:
    """Welch tests of the before/after change, near window versus far windows.

    For each ``year`` the change is measured on matching calendar days
    (after-years pooled minus ``year``; 29 February skipped). With
    ``sample_unit='day'`` one observation per day is the pooled window
    outcome; with ``'cell'`` every (duration, day) cell is an observation.
    An effect is detected when the 95% CI of near minus far excludes zero
    with a positive sign (hires suppressed before the split).
    """
    if sample_unit not in ("day", "cell"):
        raise ValueError("sample_unit must be 'day' or 'cell'")
    if isinstance(far[0], (int, np.integer)):
        far = (tuple(far),)
    near = tuple(int(v) for v in near)
    rows = []
    series = {}
    if sample_unit == "day":
        for w in (near, *far):
            series[tuple(w)] = _pooled_by_day(panel, w)
    for year in years:
        if sample_unit == "day":
            near_s = _yearly_diffs(series[near], year, after_years)
        else:
            near_s = _cell_diffs(panel, near, year, after_years)
        for w in far:
            w = tuple(int(v) for v in w)
            far_s = _yearly_diffs(series[w], year, after_years) if sample_unit == "day" else _cell_diffs(
                panel, w, year, after_years
            )
            if near_s.size == 0 or far_s.size == 0:
                raise EmptyPeriod(f"no matched days for year {year} in window {near if near_s.size == 0 else w}")
            res = welch_ttest(near_s, far_s)
            lo, hi = res.ci95
            two_sided = bool(lo > 0 or hi < 0)
            p_one = float(stats.t.sf(res.statistic, res.dof))
            rows.append(NearFarRow(
                year=int(year), far_window=w, near_window=near, test=res,
                detected=bool(lo > 0), detected_two_sided=two_sided, p_one_sided=p_one,
                n_near=int(near_s.size), n_far=int(far_s.size),
            ))
    return rows


@dataclass(frozen=True)
class SmoothedCurve:
    grid: np.ndarray
    smoothed: np.ndarray
    durations: np.ndarray
    raw: np.ndarray
    threshold: int
    bandwidth: float
    degree: int

    def to_frame(self) -> pd.DataFrame:
        raw = pd.Series(self.raw, index=self.durations)
        return pd.DataFrame({
            "i": self.grid,
            "raw_diff": raw.reindex(self.grid).to_numpy(),
            "smoothed_diff": self.smoothed,
        })

    def sidecar(self) -> dict:
        return {
            "x": {"column": "i", "label": "days out of work"},
            "y": {"columns": ["raw_diff", "smoothed_diff"], "label": "outcome after minus before"},
            "markers": [{"axis": "x", "value": self.threshold, "label": "eligibility threshold"}],
            "bandwidth": self.bandwidth,
            "degree": self.degree,
        }


def smoothed_diff_curve(
    diffs,
    *,
    threshold: int = THRESHOLD_DAYS,
    bandwidth: float | None = None,
    degree: int = 1,
    grid=None,
) -> SmoothedCurve:
    """Local-polynomial smooth of the before/after difference against duration."""
    diffs = list(diffs)
    if len(diffs) < 30:
        raise ValueError("need at least 30 durations to smooth")
    x = np.array([d.duration for d in diffs], dtype=float)
    y = np.array([d.diff for d in diffs], dtype=float)
    bw = float(bandwidth) if bandwidth is not None else silverman_bandwidth(x)
    g = x if grid is None else np.asarray(grid, dtype=float)
    smooth = kernel_local_poly(x, y, degree=degree, bandwidth=bw, grid=g)
    return SmoothedCurve(
        grid=g.astype(np.int64) if np.all(g == np.round(g)) else g,
        smoothed=smooth,
        durations=x.astype(np.int64),
        raw=y,
        threshold=threshold,
        bandwidth=bw,
        degree=degree,
    )


def split_label(split_date) -> str:
    return from_daynum(_as_day(split_date)).isoformat()
