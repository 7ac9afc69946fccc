"""Time-threshold regression discontinuity on a daily series.

The daily pooled hire share is regressed on an intercept, eleven month
dummies, a quadratic trend in the day index, a post-date dummy and its
interactions with the trend, plus optional covariates:

    y = a + sum_l theta_l m_l + g1 T + g2 T^2 + g3 P + g4 T P + g5 T^2 P + covariates

With ``T`` centred at the threshold date, ``g3`` is the discontinuity.
"""

from __future__ import annotations

import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InsufficientSpan, LtuEvalError, MissingAuxiliarySeries
from .panel_ingest.cells import DailySeries, _as_day
from .panel_ingest.records import COVARIATE_FAMILIES, daynums_to_iso, from_daynum, share_column
from .stats_core import significance_stars, t_confidence_interval, wls_fit

from scipy import stats

VARIANT_TAGS = (
    "standard",
    "exclude_december",
    "add_gdp",
    "add_consumption",
    "add_lagged_consumption",
    "add_unemployment_share",
    "exclude_jobs_act",
    "add_composition",
    "placebo_date",
)
GAMMA_NAMES = ("T", "T2", "P", "TP", "T2P")


def _months(days: np.ndarray) -> np.ndarray:
    return days.astype("datetime64[D]").astype("datetime64[M]").astype(np.int64) % 12


def _years(days: np.ndarray) -> np.ndarray:
    return days.astype("datetime64[D]").astype("datetime64[Y]").astype(np.int64) + 1970


@dataclass(frozen=True)
class AuxSeries:
    """Covariate observed at daily, quarterly or annual frequency.

    ``keys`` are period labels: day numbers (``"D"``), ``year * 4 +
    quarter - 1`` (``"Q"``) or years (``"A"``). Values are held constant
    within a period when mapped to days; ``lag`` shifts by whole periods
    of the native frequency.
    """

    name: str
    frequency: str
    keys: np.ndarray
    values: np.ndarray
    lag: int = 0

    def __post_init__(self):
        if self.frequency not in ("D", "Q", "A"):
            raise ValueError(f"unknown frequency {self.frequency!r}")

    @classmethod
    def annual(cls, name, years, values, lag: int = 0) -> AuxSeries:
        return cls(name, "A", np.asarray(years, dtype=np.int64), np.asarray(values, dtype=float), lag)

    @classmethod
    def quarterly(cls, name, years, quarters, values, lag: int = 0) -> AuxSeries:
        keys = np.asarray(years, dtype=np.int64) * 4 + np.asarray(quarters, dtype=np.int64) - 1
        return cls(name, "Q", keys, np.asarray(values, dtype=float), lag)

    @classmethod
    def daily(cls, name, days, values, lag: int = 0) -> AuxSeries:
        keys = np.array([_as_day(d) for d in days], dtype=np.int64)
        return cls(name, "D", keys, np.asarray(values, dtype=float), lag)

    def with_lag(self, lag: int) -> AuxSeries:
        return AuxSeries(self.name, self.frequency, self.keys, self.values, lag)

    def period_keys(self, days: np.ndarray) -> np.ndarray:
        if self.frequency == "D":
            return days
        years = _years(days)
        if self.frequency == "A":
            return years
        return years * 4 + _months(days) // 3

    def to_daily(self, days: np.ndarray) -> np.ndarray:
        wanted = self.period_keys(np.asarray(days, dtype=np.int64)) - self.lag
        lookup = pd.Series(self.values, index=self.keys)
        lookup = lookup[~lookup.index.duplicated(keep="last")]
        out = lookup.reindex(wanted).to_numpy(float)
        if np.any(np.isnan(out)):
            missing = np.unique(wanted[np.isnan(out)])
            raise MissingAuxiliarySeries(f"{self.name}: no value for period(s) {missing[:5].tolist()}")
        return out


@dataclass(frozen=True)
class TimeRddEstimate:
    gamma: tuple
    gamma_se: tuple
    gamma_p: tuple
    gamma3_se: float
    jump_at_threshold: float
    jump_se: float
    jump_p_value: float
    jump_ci95: tuple
    monthly_effects: tuple
    n_obs: int
    r_squared: float
    variant_tag: str
    threshold_date: str
    center_time: bool
    time_origin: str
    label: str = ""
    covariates: tuple = ()
    covariate_coefficients: dict = field(default_factory=dict)
    dropped_covariates: tuple = ()
    excluded_months: tuple = ()
    period: tuple = ()
    intercept: float = float("nan")
    curves: dict = field(default=None, repr=False, compare=False)

    @property
    def gamma3(self) -> float:
        return self.gamma[2]

    @property
    def p_value(self) -> float:
        return self.gamma_p[2]

    def to_dict(self) -> dict:
        return {
            "variant_tag": self.variant_tag,
            "label": self.label,
            "threshold_date": self.threshold_date,
            "center_time": self.center_time,
            "time_origin": self.time_origin,
            "period": list(self.period),
            "gamma": dict(zip(GAMMA_NAMES, self.gamma)),
            "gamma_se": dict(zip(GAMMA_NAMES, self.gamma_se)),
            "gamma_p": dict(zip(GAMMA_NAMES, self.gamma_p)),
            "gamma_stars": {n: significance_stars(p) for n, p in zip(GAMMA_NAMES, self.gamma_p)},
            "gamma3_se": self.gamma3_se,
            "jump_at_threshold": self.jump_at_threshold,
            "jump_se": self.jump_se,
            "jump_p_value": self.jump_p_value,
            "jump_ci95": list(self.jump_ci95),
            "jump_stars": significance_stars(self.jump_p_value),
            "monthly_effects": list(self.monthly_effects),
            "intercept": self.intercept,
            "n_obs": self.n_obs,
            "r_squared": self.r_squared,
            "covariates": list(self.covariates),
            "covariate_coefficients": self.covariate_coefficients,
            "dropped_covariates": list(self.dropped_covariates),
            "excluded_months": [f"{y:04d}-{m:02d}" for y, m in self.excluded_months],
        }

    def curve_frame(self) -> pd.DataFrame:
        """Daily series with fitted values and the no-policy counterfactual."""
        c = self.curves
        return pd.DataFrame({
            "day": daynums_to_iso(c["day"]),
            "y": c["y"],
            "fitted": c["fitted"],
            "counterfactual": c["counterfactual"],
            "post": c["post"].astype(int),
        })


def estimate_time_itt(
    series: DailySeries,
    threshold_date=dt.date(2015, 1, 1),
    *,
    exclude_months=(),
    extra_covariates=None,
    center_time: bool = True,
    time_origin=None,
    baseline_month: int = 1,
    truncate_from=None,
    start=None,
    variant_tag: str = "standard",
    label: str | None = None,
    min_side_days: int = 90,
) -> TimeRddEstimate:
    """Fit the seasonal quadratic-trend discontinuity model.

    Parameters
    ----------
    series : DailySeries
    threshold_date : date
        First day of the post period (``P = 1`` from this day on).
    exclude_months : iterable of (year, month)
        Observations dropped before fitting.
    extra_covariates : dict of name -> AuxSeries or day-aligned array
    center_time : bool
        Day index measured from ``threshold_date`` (True) or from
        ``time_origin`` (False; default the first day of ``series``).
    truncate_from : date, optional
        Drop observations on or after this day.
    start : date, optional
        Drop observations before this day.
    """
    if variant_tag not in VARIANT_TAGS:
        raise ValueError(f"unknown variant_tag {variant_tag!r}")
    thr = _as_day(threshold_date)
    origin = int(series.day.min()) if time_origin is None else _as_day(time_origin)
    data = series
    if start is not None:
        data = data.restrict(start=start)
    if truncate_from is not None:
        data = data.restrict(end=_as_day(truncate_from) - 1)
    data = data.exclude_months(list(exclude_months))

    days = data.day
    post = days >= thr
    if np.count_nonzero(post) < min_side_days or np.count_nonzero(~post) < min_side_days:
        raise InsufficientSpan(
            f"need {min_side_days} days on each side of {from_daynum(thr)}; have "
            f"{np.count_nonzero(~post)} before and {np.count_nonzero(post)} after"
        )

    t = (days - (thr if center_time else origin)).astype(float)
    p = post.astype(float)
    months = _months(days)
    dummy_months = [m for m in range(12) if m != baseline_month - 1]
    month_cols = [(months == m).astype(float) for m in dummy_months]

    cov_names, cov_cols = [], []
    for name, cov in (extra_covariates or {}).items():
        if isinstance(cov, AuxSeries):
            values = cov.to_daily(days)
        else:
            values = np.asarray(cov, dtype=float)
            if values.shape != days.shape:
                values = _align(values, series, data)
        cov_names.append(name)
        cov_cols.append(values)

    design = np.column_stack([np.ones(days.size)] + month_cols + [t, t**2, p, t * p, t**2 * p] + cov_cols)
    fit = wls_fit(design, data.y)
    g0 = 1 + len(month_cols)
    gi = list(range(g0, g0 + 5))
    if any(k in fit.dropped for k in gi):
        raise InsufficientSpan("trend or policy terms are collinear after exclusions")
    gamma = fit.coefficients[gi]
    se = fit.std_errors[gi]
    pv = fit.p_values()[gi]

    t_thr = 0.0 if center_time else float(thr - origin)
    grad = np.array([1.0, t_thr, t_thr**2])
    jump = float(grad @ gamma[2:])
    jump_se = float(np.sqrt(grad @ fit.vcov[np.ix_(gi[2:], gi[2:])] @ grad))
    jump_p = float(2 * stats.t.sf(abs(jump / jump_se), fit.dof)) if jump_se > 0 else float("nan")

    monthly = np.zeros(12)
    for k, m in enumerate(dummy_months):
        monthly[m] = fit.coefficients[1 + k]

    cov_idx = range(g0 + 5, design.shape[1])
    cov_coefs = {n: float(fit.coefficients[k]) for n, k in zip(cov_names, cov_idx) if k not in fit.dropped}
    dropped_cov = tuple(n for n, k in zip(cov_names, cov_idx) if k in fit.dropped)

    counter_design = design.copy()
    counter_design[:, gi[2:]] = 0.0
    coefs = np.nan_to_num(fit.coefficients)
    curves = {
        "day": days,
        "y": data.y,
        "fitted": fit.fitted,
        "counterfactual": counter_design @ coefs,
        "post": post,
    }

    return TimeRddEstimate(
        gamma=tuple(float(v) for v in gamma),
        gamma_se=tuple(float(v) for v in se),
        gamma_p=tuple(float(v) for v in pv),
        gamma3_se=float(se[2]),
        jump_at_threshold=jump,
        jump_se=jump_se,
        jump_p_value=jump_p,
        jump_ci95=t_confidence_interval(jump, jump_se, fit.dof),
        monthly_effects=tuple(float(v) for v in monthly),
        n_obs=fit.n_obs,
        r_squared=fit.r_squared,
        variant_tag=variant_tag,
        threshold_date=from_daynum(thr).isoformat(),
        center_time=center_time,
        time_origin=from_daynum(thr if center_time else origin).isoformat(),
        label=label or variant_tag,
        covariates=tuple(cov_names),
        covariate_coefficients=cov_coefs,
        dropped_covariates=dropped_cov,
        excluded_months=tuple((int(y), int(m)) for y, m in exclude_months),
        period=(from_daynum(days.min()).isoformat(), from_daynum(days.max()).isoformat()),
        intercept=float(fit.coefficients[0]),
        curves=curves,
    )


def _align(values: np.ndarray, full: DailySeries, sub: DailySeries) -> np.ndarray:
    if values.shape != full.day.shape:
        raise ValueError("daily covariate must align with the series days")
    pos = np.searchsorted(full.day, sub.day)
    return values[pos]


@dataclass(frozen=True)
class TimeBatteryResult:
    estimates: tuple
    skipped: tuple

    def by_label(self) -> dict:
        return {e.label: e for e in self.estimates}

    def to_dict(self) -> dict:
        return {
            "estimates": [e.to_dict() for e in self.estimates],
            "skipped": [{"label": lab, "reason": why} for lab, why in self.skipped],
        }


PLACEBO_DATES = (
    dt.date(2014, 1, 1),
    dt.date(2013, 12, 31),
    dt.date(2013, 1, 1),
    dt.date(2012, 12, 31),
    dt.date(2012, 1, 1),
)


def composition_covariates(series: DailySeries, families=("education", "sector")) -> dict:
    """Non-baseline daily shares of the given covariate families."""
    out = {}
    for fam in families:
        for cat in COVARIATE_FAMILIES[fam][1:]:
            col = share_column(fam, cat)
            if col in series.shares:
                out[col] = series.shares[col]
    return out


def robustness_battery_time(
    series: DailySeries,
    threshold_date=dt.date(2015, 1, 1),
    *,
    gdp: AuxSeries | None = None,
    consumption: AuxSeries | None = None,
    unemployment_share: AuxSeries | None = None,
    gdp_lag: int = 4,
    consumption_lag: int = 1,
    exclude_months=((2015, 12),),
    jobs_act_date=dt.date(2015, 3, 1),
    placebo_dates=PLACEBO_DATES,
    center_time: bool = True,
    threads: int = 1,
) -> TimeBatteryResult:
    """Every robustness variant of the time discontinuity, tagged.

    The base fit drops the months in ``exclude_months``; each other variant
    adds one auxiliary regressor, truncates the series, adds composition
    shares, or moves the threshold to a placebo date on pre-policy data.
    Variants whose auxiliary series is absent are skipped with a reason.
    """
    thr = _as_day(threshold_date)
    base = dict(threshold_date=threshold_date, center_time=center_time)
    runs = [
        ("standard", "standard", dict(base)),
        ("exclude_december", "exclude_december", dict(base, exclude_months=exclude_months)),
    ]
    skipped = []
    aux = {
        "add_gdp": (gdp, gdp_lag),
        "add_consumption": (consumption, 0),
        "add_lagged_consumption": (consumption, consumption_lag),
        "add_unemployment_share": (unemployment_share, 0),
    }
    for tag, (series_aux, lag) in aux.items():
        if series_aux is None:
            skipped.append((tag, "auxiliary series not supplied"))
            continue
        named = series_aux.with_lag(lag)
        runs.append((tag, tag, dict(base, exclude_months=exclude_months, extra_covariates={named.name: named})))
    # truncating at the Jobs Act leaves about two post-policy months
    runs.append(("exclude_jobs_act", "exclude_jobs_act",
                 dict(base, exclude_months=exclude_months, truncate_from=jobs_act_date, min_side_days=30)))
    comp = composition_covariates(series)
    if comp:
        runs.append(("add_composition", "add_composition", dict(base, exclude_months=exclude_months, extra_covariates=comp)))
    else:
        skipped.append(("add_composition", "series carries no composition shares"))
    pre = series.restrict(end=thr - 1)
    for d in placebo_dates:
        runs.append((f"placebo_{d.isoformat()}", "placebo_date",
                     dict(threshold_date=d, center_time=center_time, _series=pre)))

    def one(run):
        label, tag, kwargs = run
        kwargs = dict(kwargs)
        data = kwargs.pop("_series", series)
        if "extra_covariates" in kwargs and tag == "add_composition":
            kwargs["extra_covariates"] = composition_covariates(data)
        try:
            return estimate_time_itt(data, variant_tag=tag, label=label, **kwargs)
        except LtuEvalError as exc:
            return (label, f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, runs))
    else:
        results = [one(r) for r in runs]
    estimates = tuple(r for r in results if isinstance(r, TimeRddEstimate))
    skipped.extend(r for r in results if isinstance(r, tuple))
    return TimeBatteryResult(estimates=estimates, skipped=tuple(skipped))
