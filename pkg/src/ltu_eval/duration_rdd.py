"""Duration-threshold regression discontinuity with daily fixed effects.

Cell outcomes (hire shares) are regressed on an eligibility dummy for
durations at or above the threshold, with one fixed effect per calendar
day absorbed by within-day demeaning and HC1 standard errors.
"""

from __future__ import annotations

import datetime as dt
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateDesign, EmptyPanel, LtuEvalError, ZeroControlMean
from .panel_ingest.cells import CellPanel, _as_day
from .panel_ingest.records import NON_BASELINE_SHARE_COLUMNS, from_daynum
from .stats_core import absorb_fixed_effects, pearson_corr, significance_stars, t_confidence_interval, wls_fit

THRESHOLD_DAYS = 729
SPEC_TAGS = ("standard", "with_covariates", "alt_bandwidth", "placebo_threshold", "placebo_year", "mezzogiorno")


def months_to_days(months: float, threshold: int = THRESHOLD_DAYS, threshold_months: int = 24) -> int:
    """Month count to duration days, proportional to ``threshold`` days = 24 months.

    22 months map to 669 days and 26 months to 790 days.
    """
    return int(math.ceil(months * threshold / threshold_months - 1e-12))


@dataclass(frozen=True)
class RddEstimate:
    """Eligibility effect on the cell hire share with its HC1 inference."""

    beta: float
    se: float
    p_value: float
    ci95: tuple
    n_obs: int
    r_squared: float
    r_squared_within: float
    window: tuple
    period: tuple
    threshold: int
    spec_tag: str = "standard"
    label: str = "standard"
    weighted: bool = False
    constant: float = float("nan")
    control_mean: float = float("nan")
    relative_effect: float | None = None
    n_days: int = 0
    dof: int = 0
    covariates: tuple = ()
    covariate_coefficients: dict = field(default_factory=dict)
    dropped_covariates: tuple = ()
    one_sided_days: tuple = ()
    n_empty_cells: int = 0

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        out["window"] = list(self.window)
        out["period"] = list(self.period)
        out["covariates"] = list(self.covariates)
        out["dropped_covariates"] = list(self.dropped_covariates)
        out["one_sided_days"] = list(self.one_sided_days)
        out["n_one_sided_days"] = len(self.one_sided_days)
        out["stars"] = self.stars
        return out


def _period(panel: CellPanel, period) -> tuple[int, int]:
    if period is None:
        if len(panel) == 0:
            raise EmptyPanel("panel has no cells")
        return int(panel.day.min()), int(panel.day.max())
    lo, hi = (_as_day(p) for p in period)
    return lo, hi


def year_period(year: int) -> tuple[dt.date, dt.date]:
    return dt.date(year, 1, 1), dt.date(year, 12, 31)


def control_mean(panel: CellPanel, window, threshold: int = THRESHOLD_DAYS, period=None) -> float:
    """Group-size-weighted mean outcome of control cells (total hires / total members)."""
    lo, _ = window
    sub = panel.select(durations=(lo, threshold - 1), days=None if period is None else _period(panel, period))
    total = int(sub.group_size.sum())
    if total <= 0:
        raise ZeroControlMean("control cells have no members")
    mean = int(sub.hires.sum()) / total
    if mean <= 0:
        raise ZeroControlMean("control cells have no hires")
    return mean


def relative_effect(beta: float, control_cells: CellPanel | float) -> float:
    """``beta`` relative to the weighted control mean outcome.

    ``control_cells`` is either a panel holding only control cells or the
    control mean itself.
    """
    if isinstance(control_cells, CellPanel):
        total = int(control_cells.group_size.sum())
        mean = int(control_cells.hires.sum()) / total if total > 0 else 0.0
    else:
        mean = float(control_cells)
    if not mean > 0:
        raise ZeroControlMean("weighted control mean must be positive")
    return beta / mean


def estimate_itt(
    panel: CellPanel,
    window=(714, 744),
    threshold: int = THRESHOLD_DAYS,
    period=None,
    *,
    covariates=(),
    weights: str | None = None,
    spec_tag: str = "standard",
    label: str | None = None,
    with_relative_effect: bool = True,
    cov_type: str = "HC1",
) -> RddEstimate:
    """Eligibility effect on hire shares with absorbed daily fixed effects.

    Parameters
    ----------
    panel : CellPanel
    window : (int, int)
        Inclusive duration window; cells with duration >= ``threshold`` are
        treated.
    period : (date, date), optional
        Inclusive day range; all panel days by default.
    covariates : sequence of str
        Share columns (``"family:category"``) added as regressors.
    weights : {None, "group_size"}
        Unweighted OLS over cells, or WLS with cell group sizes.
    """
    if spec_tag not in SPEC_TAGS:
        raise ValueError(f"unknown spec_tag {spec_tag!r}")
    if weights not in (None, "none", "group_size"):
        raise ValueError(f"unknown weights {weights!r}")
    weighted = weights == "group_size"
    lo, hi = int(window[0]), int(window[1])
    if not lo < threshold <= hi:
        raise DegenerateDesign(f"window [{lo}, {hi}] does not straddle threshold {threshold}")
    plo, phi = _period(panel, period)
    sub = panel.select(durations=(lo, hi), days=(plo, phi))
    if len(sub) == 0:
        raise EmptyPanel(f"no cells in durations [{lo}, {hi}] and the requested period")
    n_empty = sub.n_empty
    sub = sub.take(sub.group_size > 0)
    if len(sub) == 0:
        raise EmptyPanel("every cell in the window is empty")

    treated = (sub.duration >= threshold).astype(float)
    covariates = tuple(covariates)
    missing = [c for c in covariates if c not in sub.counts]
    if missing:
        raise EmptyPanel(f"panel lacks covariate columns {missing}")
    design = np.column_stack([treated] + [sub.share(c) for c in covariates])
    y = sub.outcome
    w = sub.group_size.astype(float) if weighted else None

    uniq, codes = np.unique(sub.day, return_inverse=True)
    n_treated_day = np.bincount(codes, weights=treated, minlength=uniq.size)
    n_cells_day = np.bincount(codes, minlength=uniq.size)
    one_sided = (n_treated_day == 0) | (n_treated_day == n_cells_day)
    if np.all(one_sided):
        raise DegenerateDesign("treatment dummy is constant within every day")

    absorbed = absorb_fixed_effects(sub.day, design, y, w)
    fit = wls_fit(absorbed.design, absorbed.outcome, w, absorbed_dof=absorbed.dof_correction, cov_type=cov_type)
    if 0 in fit.dropped:
        raise DegenerateDesign("treatment dummy is collinear with the daily fixed effects")

    beta = float(fit.coefficients[0])
    se = float(np.sqrt(fit.vcov[0, 0]))
    p = float(fit.p_values()[0])
    ci = t_confidence_interval(beta, se, fit.dof)

    ww = np.ones(y.size) if w is None else w
    ybar = float(np.sum(ww * y) / ww.sum())
    sst = float(np.sum(ww * (y - ybar) ** 2))
    ssr = float(np.sum(ww * fit.residuals**2))
    r2_full = 0.0 if sst <= 0 else max(0.0, 1.0 - ssr / sst)
    xbar = (ww[:, None] * design).sum(axis=0) / ww.sum()
    coefs = np.nan_to_num(fit.coefficients)
    constant = ybar - float(xbar @ coefs)

    ctrl = sub.duration < threshold
    ctrl_total = int(sub.group_size[ctrl].sum())
    ctrl_mean = int(sub.hires[ctrl].sum()) / ctrl_total if ctrl_total else float("nan")
    rel = None
    if with_relative_effect and ctrl_mean > 0:
        rel = beta / ctrl_mean

    cov_coefs = {c: float(fit.coefficients[k + 1]) for k, c in enumerate(covariates) if (k + 1) not in fit.dropped}
    dropped_cov = tuple(covariates[k - 1] for k in fit.dropped if k > 0)

    return RddEstimate(
        beta=beta,
        se=se,
        p_value=p,
        ci95=ci,
        n_obs=fit.n_obs,
        r_squared=r2_full,
        r_squared_within=fit.r_squared,
        window=(lo, hi),
        period=(from_daynum(plo).isoformat(), from_daynum(phi).isoformat()),
        threshold=threshold,
        spec_tag=spec_tag,
        label=label or spec_tag,
        weighted=weighted,
        constant=constant,
        control_mean=ctrl_mean,
        relative_effect=rel,
        n_days=int(uniq.size),
        dof=int(fit.dof),
        covariates=covariates,
        covariate_coefficients=cov_coefs,
        dropped_covariates=dropped_cov,
        one_sided_days=tuple(from_daynum(d).isoformat() for d in uniq[one_sided]),
        n_empty_cells=n_empty,
    )


@dataclass(frozen=True)
class BatteryFailure:
    label: str
    spec_tag: str
    error: str
    message: str


@dataclass(frozen=True)
class BatteryResult:
    estimates: tuple
    failures: tuple

    def by_label(self) -> dict:
        return {e.label: e for e in self.estimates}

    def to_dict(self) -> dict:
        return {
            "estimates": [e.to_dict() for e in self.estimates],
            "failures": [asdict(f) for f in self.failures],
        }


def placebo_battery(
    panel: CellPanel,
    window=(714, 744),
    threshold: int = THRESHOLD_DAYS,
    period=None,
    *,
    covariates=None,
    placebo_months=(22, 26),
    placebo_years=(2015,),
    shrunk_offsets=((-9, 11), (-5, 5)),
    mezzogiorno_panel: CellPanel | None = None,
    threads: int = 1,
) -> BatteryResult:
    """Base estimate plus every robustness variant, tagged.

    Runs the standard and group-size-weighted fits, a covariate-augmented
    fit, shrunken bandwidths (offsets from the threshold), fake thresholds
    at ``placebo_months`` with the window re-centred, the true threshold in
    post-policy ``placebo_years``, and optionally the Mezzogiorno subsample.
    Failing runs are recorded and the battery continues.
    """
    lo, hi = int(window[0]), int(window[1])
    below, above = threshold - lo, hi - threshold
    if covariates is None:
        covariates = tuple(c for c in NON_BASELINE_SHARE_COLUMNS if c in panel.counts)

    runs = [
        ("standard", "standard", panel, dict(window=(lo, hi), threshold=threshold, period=period)),
        ("weighted", "standard", panel, dict(window=(lo, hi), threshold=threshold, period=period, weights="group_size")),
        ("with_covariates", "with_covariates", panel,
         dict(window=(lo, hi), threshold=threshold, period=period, covariates=covariates)),
    ]
    for a, b in shrunk_offsets:
        w = (threshold + a, threshold + b)
        runs.append((f"bandwidth_{w[0]}_{w[1]}", "alt_bandwidth", panel, dict(window=w, threshold=threshold, period=period)))
    for m in placebo_months:
        fake = months_to_days(m, threshold)
        runs.append((f"placebo_{m}_months_{fake}_days", "placebo_threshold", panel,
                     dict(window=(fake - below, fake + above), threshold=fake, period=period)))
    for y in placebo_years:
        runs.append((f"placebo_year_{y}", "placebo_year", panel,
                     dict(window=(lo, hi), threshold=threshold, period=year_period(y))))
    if mezzogiorno_panel is not None:
        runs.append(("mezzogiorno", "mezzogiorno", mezzogiorno_panel,
                     dict(window=(lo, hi), threshold=threshold, period=period)))

    def one(run):
        label, tag, source, kwargs = run
        try:
            return estimate_itt(source, spec_tag=tag, label=label, **kwargs)
        except LtuEvalError as exc:
            return BatteryFailure(label, tag, type(exc).__name__, str(exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, runs))
    else:
        results = [one(r) for r in runs]
    return BatteryResult(
        estimates=tuple(r for r in results if isinstance(r, RddEstimate)),
        failures=tuple(r for r in results if isinstance(r, BatteryFailure)),
    )


@dataclass(frozen=True)
class YearlyCorrelation:
    years: tuple
    betas: tuple
    counts: tuple
    correlation: float
    estimates: tuple = ()

    def to_dict(self) -> dict:
        return {
            "years": list(self.years),
            "betas": list(self.betas),
            "counts": list(self.counts),
            "correlation": self.correlation,
        }


def yearly_effect_correlation(
    panel: CellPanel,
    years,
    subsidy_counts,
    window=(714, 744),
    threshold: int = THRESHOLD_DAYS,
    *,
    betas=None,
) -> YearlyCorrelation:
    """Per-year effects and their Pearson correlation with subsidy counts.

    ``betas`` may be supplied directly (e.g. published estimates), in which
    case no regression is run.
    """
    years = tuple(int(y) for y in years)
    counts = tuple(float(c) for c in subsidy_counts)
    if len(years) < 3 or len(counts) != len(years):
        raise ValueError("need at least 3 years with one subsidy count each")
    estimates = ()
    if betas is None:
        estimates = tuple(estimate_itt(panel, window, threshold, year_period(y), label=f"year_{y}") for y in years)
        betas = tuple(e.beta for e in estimates)
    betas = tuple(float(b) for b in betas)
    return YearlyCorrelation(years, betas, counts, pearson_corr(betas, counts), estimates)
