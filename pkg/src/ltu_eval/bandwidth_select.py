"""Local-randomization window selection by day-paired covariate balance.

For a candidate duration window the per-day, group-size-weighted share of
each covariate on the treated side is paired with the same day's share on
the control side and the differences are tested with a one-sample t-test.
The window grows one duration per side until some covariate fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySide, NoBalancedWindow, NoPairedDays, TooFewPairs, ZeroVarianceDifferences
from .panel_ingest.cells import CellPanel
from .panel_ingest.records import DEFAULT_BALANCE_COVARIATES
from .stats_core import TestResult, paired_ttest

THRESHOLD_DAYS = 729


def _degenerate_result(diffs: np.ndarray) -> TestResult:
    """Constant nonzero differences: imbalance is certain."""
    mean = float(diffs.mean())
    return TestResult(
        statistic=float(np.sign(mean) * np.inf), dof=float(diffs.size - 1), p_value=0.0,
        mean_diff=mean, std_err=0.0, ci95=(mean, mean),
    )


@dataclass(frozen=True)
class BalanceReport:
    """Per-covariate day-paired balance tests for one window."""

    window: tuple
    per_covariate: dict
    min_p: float
    balanced: bool
    alpha: float
    n_days: int
    correction: str = "none"

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "min_p": self.min_p,
            "balanced": self.balanced,
            "alpha": self.alpha,
            "correction": self.correction,
            "n_days": self.n_days,
            "per_covariate": {k: v.to_dict() for k, v in self.per_covariate.items()},
        }


def side_shares(panel: CellPanel, window, covariates, threshold: int = THRESHOLD_DAYS):
    """Per-day pooled shares of each covariate on both sides of the threshold.

    Returns ``(days, treated, control)`` where the share arrays have one row
    per day on which both sides have members and one column per covariate.
    """
    lo, hi = int(window[0]), int(window[1])
    sub = panel.select(durations=(lo, hi))
    if len(sub) == 0:
        raise EmptySide("window contains no cells")
    treated = sub.duration >= threshold
    if not treated.any() or treated.all():
        raise EmptySide(f"window [{lo}, {hi}] lacks a control or a treated duration")
    days, codes = np.unique(sub.day, return_inverse=True)
    n_t = np.bincount(codes, weights=np.where(treated, sub.group_size, 0), minlength=days.size)
    n_c = np.bincount(codes, weights=np.where(treated, 0, sub.group_size), minlength=days.size)
    both = (n_t > 0) & (n_c > 0)
    if np.count_nonzero(both) < 2:
        raise NoPairedDays(f"fewer than 2 days with members on both sides of window [{lo}, {hi}]")
    missing = [c for c in covariates if c not in sub.counts]
    if missing:
        raise KeyError(f"panel lacks covariate columns {missing}")
    t_sh = np.empty((int(both.sum()), len(covariates)))
    c_sh = np.empty_like(t_sh)
    for k, col in enumerate(covariates):
        counts = sub.counts[col]
        ct = np.bincount(codes, weights=np.where(treated, counts, 0), minlength=days.size)
        cc = np.bincount(codes, weights=np.where(treated, 0, counts), minlength=days.size)
        t_sh[:, k] = ct[both] / n_t[both]
        c_sh[:, k] = cc[both] / n_c[both]
    return days[both], t_sh, c_sh


def balance_test(
    panel: CellPanel,
    window,
    covariates=DEFAULT_BALANCE_COVARIATES,
    threshold: int = THRESHOLD_DAYS,
    *,
    alpha: float = 0.15,
    correction: str = "none",
) -> BalanceReport:
    """Day-paired t-tests of treated versus control covariate shares.

    The window is balanced when the smallest p-value is at least ``alpha``
    (divided by the number of covariates under ``correction='bonferroni'``).
    Constant nonzero daily differences count as p = 0.
    """
    if correction not in ("none", "bonferroni"):
        raise ValueError(f"unknown correction {correction!r}")
    covariates = tuple(covariates)
    days, t_sh, c_sh = side_shares(panel, window, covariates, threshold)
    results = {}
    for k, col in enumerate(covariates):
        try:
            results[col] = paired_ttest(a=t_sh[:, k], b=c_sh[:, k])
        except ZeroVarianceDifferences:
            results[col] = _degenerate_result(t_sh[:, k] - c_sh[:, k])
        except TooFewPairs as exc:
            raise NoPairedDays(str(exc)) from None
    min_p = min((r.p_value for r in results.values()), default=1.0)
    level = alpha / len(covariates) if correction == "bonferroni" and covariates else alpha
    return BalanceReport(
        window=(int(window[0]), int(window[1])),
        per_covariate=results,
        min_p=float(min_p),
        balanced=bool(min_p >= level),
        alpha=alpha,
        n_days=int(days.size),
        correction=correction,
    )


def window_for(half_width: int, threshold: int = THRESHOLD_DAYS, extra_treated: int = 0) -> tuple[int, int]:
    """Symmetric window: ``half_width`` control and ``half_width + extra_treated`` treated durations."""
    return threshold - half_width, threshold + half_width - 1 + extra_treated


@dataclass(frozen=True)
class BandwidthSelection:
    window: tuple
    half_width: int
    trail: tuple

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "half_width": self.half_width,
            "trail": [r.to_dict() for r in self.trail],
        }


def select_bandwidth(
    panel: CellPanel,
    threshold: int = THRESHOLD_DAYS,
    max_half_width: int = 30,
    alpha: float = 0.15,
    *,
    covariates=DEFAULT_BALANCE_COVARIATES,
    extra_treated: int = 0,
    correction: str = "none",
) -> BandwidthSelection:
    """Grow the window from ``[threshold - 1, threshold]`` until balance fails.

    Returns the largest window such that it and every smaller window in the
    sequence is balanced, together with the audit trail of reports (the
    first unbalanced one included, when reached).
    """
    if max_half_width < 1:
        raise ValueError("max_half_width must be at least 1")
    trail = []
    chosen = None
    for k in range(1, max_half_width + 1):
        report = balance_test(
            panel, window_for(k, threshold, extra_treated), covariates, threshold, alpha=alpha, correction=correction
        )
        trail.append(report)
        if not report.balanced:
            break
        chosen = k
    if chosen is None:
        raise NoBalancedWindow(f"smallest window {window_for(1, threshold, extra_treated)} is unbalanced")
    return BandwidthSelection(window=window_for(chosen, threshold, extra_treated), half_width=chosen, trail=tuple(trail))
