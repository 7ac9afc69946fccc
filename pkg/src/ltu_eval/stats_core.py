"""Numerical kernel shared by the estimators.

Weighted least squares with heteroskedasticity-robust (HC0/HC1) covariance,
within-group demeaning for absorbed fixed effects, Welch and paired t-tests,
Pearson correlation and Epanechnikov local polynomial smoothing.

Every function here is pure: inputs are never modified and results are
frozen dataclasses holding numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    ConstantInput,
    DimensionMismatch,
    EmptyInput,
    EmptyNeighborhood,
    RankDeficient,
    SingletonOnlyGroups,
    TooFewObservations,
    TooFewPairs,
    ZeroVariance,
    ZeroVarianceDifferences,
)

__all__ = [
    "FitResult",
    "AbsorbedPanel",
    "TestResult",
    "wls_fit",
    "absorb_fixed_effects",
    "welch_ttest",
    "paired_ttest",
    "one_sample_ttest",
    "pearson_corr",
    "kernel_local_poly",
    "silverman_bandwidth",
    "t_confidence_interval",
    "significance_stars",
]

# relative residual norm below which a column counts as collinear
COLLINEAR_TOL = 1e-9
# relative spread below which paired differences count as constant
ZERO_SPREAD_TOL = 1e-12


@dataclass(frozen=True)
class FitResult:
    """Result of :func:`wls_fit`.

    Coefficients of dropped (collinear) columns are NaN and so are the
    corresponding rows and columns of ``vcov``.
    """

    coefficients: np.ndarray
    vcov: np.ndarray
    residuals: np.ndarray
    r_squared: float
    n_obs: int
    dof: int
    dropped: tuple[int, ...] = ()
    cov_type: str = "HC1"
    fitted: np.ndarray = field(default=None, repr=False)

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov))

    def t_stats(self) -> np.ndarray:
        return self.coefficients / self.std_errors

    def p_values(self) -> np.ndarray:
        return 2.0 * stats.t.sf(np.abs(self.t_stats()), self.dof)

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        crit = stats.t.ppf(0.5 + level / 2.0, self.dof)
        se = self.std_errors
        return np.column_stack([self.coefficients - crit * se, self.coefficients + crit * se])


def _independent_columns(x: np.ndarray, tol: float) -> list[int]:
    # Gram-Schmidt with reorthogonalisation; a column is kept only if it adds
    # a direction to the span of the columns kept before it.
    n, k = x.shape
    basis = np.empty((n, 0))
    keep: list[int] = []
    for j in range(k):
        v = x[:, j].astype(float, copy=True)
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            continue
        for _ in range(2):
            v -= basis @ (basis.T @ v)
        norm = np.linalg.norm(v)
        if norm <= tol * norm0:
            continue
        basis = np.column_stack([basis, v / norm])
        keep.append(j)
    return keep


def _has_constant(x: np.ndarray) -> bool:
    if x.shape[0] == 0:
        return False
    span = np.ptp(x, axis=0)
    return bool(np.any((span == 0) & (x[0] != 0)))


def wls_fit(
    design,
    outcome,
    weights=None,
    *,
    cov_type: str = "HC1",
    absorbed_dof: int = 0,
    on_collinear: str = "drop",
    tol: float = COLLINEAR_TOL,
    centered_r2: bool | None = None,
) -> FitResult:
    """(Weighted) least squares with a robust sandwich covariance.

    Parameters
    ----------
    design : array_like, shape (n, k)
    outcome : array_like, shape (n,)
    weights : array_like, shape (n,), optional
        Nonnegative analytic weights. Rows with zero weight do not count
        towards ``n``.
    cov_type : {"HC1", "HC0"}
        HC1 scales the HC0 sandwich by ``n / (n - k - absorbed_dof)``.
    absorbed_dof : int
        Parameters already removed from the data (e.g. absorbed fixed
        effects); they enter the residual degrees of freedom.
    on_collinear : {"drop", "raise"}
        Collinear columns are dropped in listed order (earlier columns win)
        or reported through :class:`RankDeficient`.
    centered_r2 : bool, optional
        Use the mean-centred total sum of squares. Defaults to True when the
        design contains a constant column.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(outcome, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or y.ndim != 1:
        raise DimensionMismatch("design must be 2-D and outcome 1-D")
    n_rows, k = x.shape
    if n_rows == 0:
        raise EmptyInput("no observations")
    if y.shape[0] != n_rows:
        raise DimensionMismatch(f"design has {n_rows} rows, outcome has {y.shape[0]}")
    if cov_type not in ("HC0", "HC1"):
        raise ValueError(f"unknown cov_type {cov_type!r}")

    if weights is None:
        w = np.ones(n_rows)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n_rows,):
            raise DimensionMismatch("weights must have one entry per row")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise EmptyInput("all weights are zero")
    n = int(np.count_nonzero(w > 0))

    sw = np.sqrt(w)
    xw = x * sw[:, None]
    yw = y * sw
    norms = np.linalg.norm(xw, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    xs = xw / safe

    keep = _independent_columns(xs, tol)
    dropped = tuple(j for j in range(k) if j not in keep)
    if dropped and on_collinear == "raise":
        raise RankDeficient(dropped)
    if n < len(keep):
        raise TooFewObservations(f"{n} observations for {len(keep)} parameters")

    xk = xs[:, keep]
    q, r = np.linalg.qr(xk)
    beta_s = np.linalg.solve(r, q.T @ yw) if keep else np.empty(0)
    beta_k = beta_s / safe[keep]

    coefficients = np.full(k, np.nan)
    coefficients[keep] = beta_k
    fitted = x[:, keep] @ beta_k if keep else np.zeros(n_rows)
    resid = y - fitted

    dof = n - len(keep) - int(absorbed_dof)
    vcov = np.full((k, k), np.nan)
    if keep:
        r_inv = np.linalg.solve(r, np.eye(len(keep)))
        bread = r_inv @ r_inv.T
        u = resid * sw
        scores = xk * u[:, None]
        meat = scores.T @ scores
        v = bread @ meat @ bread
        if cov_type == "HC1":
            v = v * (n / dof) if dof > 0 else np.full_like(v, np.nan)
        v = v / np.outer(safe[keep], safe[keep])
        v = 0.5 * (v + v.T)
        vcov[np.ix_(keep, keep)] = v

    if centered_r2 is None:
        centered_r2 = _has_constant(x[w > 0])
    ssr = float(np.sum(w * resid**2))
    if centered_r2:
        ybar = np.sum(w * y) / np.sum(w)
        sst = float(np.sum(w * (y - ybar) ** 2))
    else:
        sst = float(np.sum(w * y**2))
    r2 = 0.0 if sst <= 0 else min(max(1.0 - ssr / sst, 0.0), 1.0)

    return FitResult(
        coefficients=coefficients,
        vcov=vcov,
        residuals=resid,
        r_squared=r2,
        n_obs=n,
        dof=dof,
        dropped=dropped,
        cov_type=cov_type,
        fitted=fitted,
    )


@dataclass(frozen=True)
class AbsorbedPanel:
    """Within-group demeaned regressors and outcome."""

    design: np.ndarray
    outcome: np.ndarray
    weights: np.ndarray | None
    n_groups: int
    codes: np.ndarray
    group_means_outcome: np.ndarray
    group_means_design: np.ndarray

    @property
    def dof_correction(self) -> int:
        return self.n_groups


def absorb_fixed_effects(groups, design, outcome, weights=None) -> AbsorbedPanel:
    """Subtract within-group (weighted) means from regressors and outcome.

    Regressor columns that are constant within every group are returned as
    exact zeros so that :func:`wls_fit` drops them deterministically.
    The number of absorbed groups is the degrees-of-freedom correction.
    """
    g = np.asarray(groups)
    x = np.asarray(design, dtype=float)
    y = np.asarray(outcome, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = y.shape[0]
    if n == 0:
        raise EmptyInput("no observations")
    if g.shape[0] != n or x.shape[0] != n:
        raise DimensionMismatch("groups, design and outcome must have equal length")

    _, codes = np.unique(g, return_inverse=True)
    codes = codes.ravel()
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise DimensionMismatch("weights must have one entry per row")

    n_groups_all = int(codes.max()) + 1
    wsum = np.bincount(codes, weights=w, minlength=n_groups_all)
    counts = np.bincount(codes[w > 0], minlength=n_groups_all)
    if not np.any(counts >= 2):
        raise SingletonOnlyGroups("every group has a single observation; slopes unidentified")
    denom = np.where(wsum > 0, wsum, 1.0)

    ymean = np.bincount(codes, weights=w * y, minlength=n_groups_all) / denom
    xmean = np.column_stack(
        [np.bincount(codes, weights=w * x[:, j], minlength=n_groups_all) / denom for j in range(x.shape[1])]
    ) if x.shape[1] else np.empty((n_groups_all, 0))

    y_dm = y - ymean[codes]
    x_dm = x - xmean[codes]
    raw = np.linalg.norm(x * np.sqrt(w)[:, None], axis=0)
    new = np.linalg.norm(x_dm * np.sqrt(w)[:, None], axis=0)
    absorbed = new <= 1e-12 * np.where(raw > 0, raw, 1.0)
    x_dm[:, absorbed] = 0.0

    return AbsorbedPanel(
        design=x_dm,
        outcome=y_dm,
        weights=None if weights is None else w,
        n_groups=int(np.count_nonzero(counts > 0)),
        codes=codes,
        group_means_outcome=ymean,
        group_means_design=xmean,
    )


@dataclass(frozen=True)
class TestResult:
    """Two-sided t-test summary with a 95% confidence interval."""

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    dof: float
    p_value: float
    mean_diff: float
    std_err: float
    ci95: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "mean_diff": self.mean_diff,
            "std_err": self.std_err,
            "ci95_lower": self.ci95[0],
            "ci95_upper": self.ci95[1],
        }


def t_confidence_interval(mean_diff: float, std_err: float, dof: float, level: float = 0.95) -> tuple[float, float]:
    crit = float(stats.t.ppf(0.5 + level / 2.0, dof))
    return (mean_diff - crit * std_err, mean_diff + crit * std_err)


def _result(mean_diff: float, std_err: float, dof: float) -> TestResult:
    if std_err > 0:
        statistic = mean_diff / std_err
        p = float(2.0 * stats.t.sf(abs(statistic), dof))
    else:
        statistic = 0.0 if mean_diff == 0 else float(np.copysign(np.inf, mean_diff))
        p = 1.0 if mean_diff == 0 else 0.0
    return TestResult(
        statistic=float(statistic),
        dof=float(dof),
        p_value=min(max(p, 0.0), 1.0),
        mean_diff=float(mean_diff),
        std_err=float(std_err),
        ci95=t_confidence_interval(mean_diff, std_err, dof),
    )


def welch_ttest(a, b) -> TestResult:
    """Unequal-variance two-sample t-test, mean difference ``mean(a) - mean(b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise TooFewObservations(f"need at least 2 observations per sample, got {na} and {nb}")
    va = a.var(ddof=1) / na
    vb = b.var(ddof=1) / nb
    mean_diff = a.mean() - b.mean()
    if va == 0 and vb == 0:
        if mean_diff == 0:
            raise ZeroVariance("both samples are constant and equal")
        return _result(mean_diff, 0.0, na + nb - 2)
    se = np.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
    return _result(mean_diff, se, dof)


def one_sample_ttest(values, popmean: float = 0.0) -> TestResult:
    d = np.asarray(values, dtype=float) - popmean
    n = d.size
    if n < 2:
        raise TooFewObservations("need at least 2 observations")
    return _result(d.mean(), d.std(ddof=1) / np.sqrt(n), n - 1)


def paired_ttest(pairs=None, *, a=None, b=None) -> TestResult:
    """Paired t-test: a one-sample t-test on the differences ``a - b``.

    Accepts either a sequence of ``(a, b)`` pairs or the two aligned
    vectors as keywords. Differences that are all zero (to machine
    precision relative to the data scale) give statistic 0 and p = 1;
    constant nonzero differences raise :class:`ZeroVarianceDifferences`.
    """
    if pairs is not None:
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        a, b = arr[:, 0], arr[:, 1]
    else:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != b.shape:
            raise DimensionMismatch("paired samples must have equal length")
    if a.size < 2:
        raise TooFewPairs(f"need at least 2 pairs, got {a.size}")
    d = a - b
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    spread = float(np.max(np.abs(d - d.mean())))
    if spread <= ZERO_SPREAD_TOL * scale:
        if abs(d.mean()) <= ZERO_SPREAD_TOL * scale:
            return _result(0.0, 0.0, a.size - 1)
        raise ZeroVarianceDifferences("paired differences are constant and nonzero")
    return one_sample_ttest(d)


def pearson_corr(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch("x and y must be 1-D with equal length")
    if x.size < 2:
        raise TooFewObservations("need at least 2 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ConstantInput("correlation undefined for a constant vector")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(max(r, -1.0), 1.0))


def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u**2), 0.0)


def silverman_bandwidth(x) -> float:
    """Silverman's rule of thumb, ``0.9 min(sd, IQR/1.34) n^(-1/5)``."""
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** (-0.2))


def kernel_local_poly(x, y, degree: int = 1, bandwidth: float | None = None, grid=None) -> np.ndarray:
    """Epanechnikov-weighted local polynomial fit evaluated on ``grid``.

    At each grid point ``g`` a polynomial in ``(x - g) / bandwidth`` is fitted
    by weighted least squares and its intercept is returned.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch("x and y must have equal length")
    if degree not in (0, 1, 2, 3):
        raise ValueError("degree must be 0, 1, 2 or 3")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    grid = x.copy() if grid is None else np.asarray(grid, dtype=float)

    out = np.empty(grid.shape[0])
    bad = []
    for m, g in enumerate(grid):
        u = (x - g) / bandwidth
        w = epanechnikov(u)
        mask = w > 0
        if np.unique(x[mask]).size < degree + 1:
            bad.append(g)
            continue
        sw = np.sqrt(w[mask])
        vander = np.vander(u[mask], degree + 1, increasing=True)
        coef = np.linalg.lstsq(vander * sw[:, None], y[mask] * sw, rcond=None)[0]
        out[m] = coef[0]
    if bad:
        raise EmptyNeighborhood(bad)
    return out


def significance_stars(p_value: float) -> str:
    """Star convention: *** p<0.01, ** p<0.05, * p<0.1."""
    if p_value is None or not np.isfinite(p_value):
        return ""
    if p_value < 0.01:
        return "***"
    if p_value < 0.05:
        return "**"
    if p_value < 0.1:
        return "*"
    return ""
