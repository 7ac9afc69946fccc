"""Monte Carlo validation of the estimators against the synthetic truth.

Replication ``r`` draws from a generator seeded with ``(config.seed, r)``,
so every report depends only on the config and the replication count, not
on how replications are scheduled across threads.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..bandwidth_select import select_bandwidth, window_for
from ..duration_rdd import estimate_itt
from ..errors import LtuEvalError, ReplicationFailed
from ..indirect_fx import FAR_WINDOWS, NEAR_WINDOW, near_far_welch
from ..panel_ingest.cells import daily_collapse, ingest
from ..time_rdd import estimate_time_itt
from .config import DgpConfig
from .corpus import make_rng, simulate_corpus
from .panel import PanelSimulator, planted_boundary_panel

ESTIMATORS = ("duration_rdd", "time_rdd", "indirect_fx", "bandwidth")

DEFAULT_DAYS = {
    "duration_rdd": ("2011-01-01", "2014-12-31"),
    "time_rdd": ("2010-01-01", "2015-12-31"),
    "indirect_fx": ("2011-01-01", "2015-12-31"),
    "bandwidth": ("2011-01-01", "2014-12-31"),
}


@dataclass(frozen=True)
class EstimatorSpec:
    """What to estimate in each replication.

    ``level='panel'`` simulates cell panels directly; ``'corpus'`` runs the
    whole pipeline from a simulated contract corpus (ingest, optional
    bandwidth selection, estimation).
    """

    name: str = "duration_rdd"
    level: str = "panel"
    window: tuple = (714, 744)
    day_range: tuple | None = None
    select_window: bool = False
    max_half_width: int = 30
    balance_alpha: float = 0.15
    alpha: float = 0.05
    weights: str | None = None
    exclude_months: tuple = ((2015, 12),)
    threshold_date: str = "2015-01-01"
    near: tuple = NEAR_WINDOW
    far: tuple = FAR_WINDOWS
    years: tuple = (2011, 2012, 2013, 2014)
    planted_half_width: int = 15

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.name!r}; expected one of {ESTIMATORS}")
        if self.level not in ("panel", "corpus"):
            raise ValueError("level must be 'panel' or 'corpus'")

    @property
    def days(self) -> tuple:
        return tuple(self.day_range) if self.day_range else DEFAULT_DAYS[self.name]

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class MonteCarloReport:
    estimator: str
    replications: int
    truth: float | None
    mean_estimate: float
    bias: float
    mc_se: float
    sd_estimate: float
    mean_se: float
    coverage: float
    rejection_rate: float
    detection_rate: float | None
    n_failed: int
    extra: dict = field(default_factory=dict)
    runtime_seconds: float = field(default=0.0, compare=False)

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "estimator": self.estimator,
            "replications": self.replications,
            "truth": self.truth,
            "mean_estimate": self.mean_estimate,
            "bias": self.bias,
            "mc_se": self.mc_se,
            "sd_estimate": self.sd_estimate,
            "mean_se": self.mean_se,
            "coverage": self.coverage,
            "rejection_rate": self.rejection_rate,
            "detection_rate": self.detection_rate,
            "n_failed": self.n_failed,
            "extra": self.extra,
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime_seconds
        return out

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True, allow_nan=True) + "\n"


def truth_for(config: DgpConfig, spec: EstimatorSpec) -> float | None:
    if spec.name == "duration_rdd":
        if isinstance(config.true_itt, dict):
            years = range(int(spec.days[0][:4]), int(spec.days[1][:4]) + 1)
            return float(np.mean([config.true_itt.get(y, 0.0) for y in years]))
        return float(config.true_itt)
    if spec.name == "time_rdd":
        return float(config.time_jump)
    return None


class _Replicator:
    def __init__(self, config: DgpConfig, spec: EstimatorSpec):
        self.config = config
        self.spec = spec
        self.sim = None
        if spec.level == "panel" and spec.name != "bandwidth":
            self.sim = PanelSimulator(config, spec.days, self._durations())

    def _durations(self):
        s = self.spec
        thr = self.config.threshold
        if s.name == "indirect_fx":
            return [tuple(w) for w in s.far] + [tuple(s.near)]
        if s.select_window:
            return window_for(s.max_half_width, thr)
        return tuple(s.window)

    def panel(self, rep: int, covariates: bool):
        rng = make_rng(self.config.seed, rep)
        if self.spec.level == "panel":
            return self.sim.draw(rng, covariates=covariates)
        corpus = simulate_corpus(self.config, rng=rng)
        durations = self._durations()
        if isinstance(durations, list):
            durations = (min(d[0] for d in durations), max(d[1] for d in durations))
        return ingest(corpus.table, self.config.period, self.spec.days, durations, covariates=covariates)

    def run(self, rep: int) -> list[dict]:
        s = self.spec
        thr = self.config.threshold
        if s.name == "bandwidth":
            panel = planted_boundary_panel(
                make_rng(self.config.seed, rep), s.days, threshold=thr,
                half_width=s.planted_half_width, max_half_width=s.max_half_width, config=self.config,
            )
            sel = select_bandwidth(panel, thr, s.max_half_width, s.balance_alpha)
            return [{"half_width": sel.half_width, "hit": sel.half_width == s.planted_half_width}]
        if s.name == "duration_rdd":
            panel = self.panel(rep, covariates=s.select_window)
            window = tuple(s.window)
            if s.select_window:
                window = select_bandwidth(panel, thr, s.max_half_width, s.balance_alpha).window
            e = estimate_itt(panel, window, thr, weights=s.weights)
            return [{"estimate": e.beta, "se": e.se, "lo": e.ci95[0], "hi": e.ci95[1], "p": e.p_value,
                     "relative_effect": e.relative_effect if e.relative_effect is not None else float("nan")}]
        if s.name == "time_rdd":
            series = daily_collapse(self.panel(rep, covariates=False), durations=tuple(s.window))
            e = estimate_time_itt(series, s.threshold_date, exclude_months=[tuple(m) for m in s.exclude_months])
            return [{"estimate": e.gamma3, "se": e.gamma3_se, "lo": e.jump_ci95[0], "hi": e.jump_ci95[1], "p": e.p_value}]
        rows = near_far_welch(self.panel(rep, covariates=False), s.near, s.far, s.years)
        return [{"estimate": r.test.mean_diff, "se": r.test.std_err, "lo": r.test.ci95[0], "hi": r.test.ci95[1],
                 "p": r.test.p_value, "detected": r.detected} for r in rows]


def _guarded(fn, rep, record):
    try:
        return fn(rep)
    except LtuEvalError as exc:
        if not record:
            raise ReplicationFailed(rep, exc) from exc
        return {"failed": rep, "error": f"{type(exc).__name__}: {exc}"}


def monte_carlo(
    config: DgpConfig,
    replications: int,
    estimator: EstimatorSpec | str = "duration_rdd",
    *,
    threads: int = 1,
    record_failures: bool = False,
) -> MonteCarloReport:
    """Replicate an estimator on synthetic data and summarise it against the truth.

    Reports the mean estimate, bias, Monte Carlo standard error of the mean,
    95% CI coverage of the truth, and the share of tests rejecting at
    ``spec.alpha``. For ``indirect_fx`` every (year, far window) test is one
    draw and ``detection_rate`` uses the signed detection rule; for
    ``bandwidth`` the planted-boundary hit rate is in ``extra``.

    A failing replication raises :class:`ReplicationFailed` carrying its
    index, unless ``record_failures`` is set, in which case it is skipped
    and listed in ``extra['failures']``.
    """
    spec = EstimatorSpec(estimator) if isinstance(estimator, str) else estimator
    if replications < 1:
        raise ValueError("need at least one replication")
    job = _Replicator(config, spec)
    t0 = time.perf_counter()
    reps = range(int(replications))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _guarded(job.run, r, record_failures), reps))
    else:
        results = [_guarded(job.run, r, record_failures) for r in reps]
    runtime = time.perf_counter() - t0

    failures = [r for r in results if isinstance(r, dict)]
    draws = [d for r in results if isinstance(r, list) for d in r]
    truth = truth_for(config, spec)
    extra = {"spec": spec.to_dict(), "failures": failures[:20]}

    if not draws:
        nan = float("nan")
        return MonteCarloReport(spec.name, int(replications), truth, nan, nan, nan, nan, nan, nan, nan, None,
                                len(failures), extra, runtime)

    if spec.name == "bandwidth":
        widths = np.array([d["half_width"] for d in draws])
        hit = float(np.mean([d["hit"] for d in draws])) if draws else float("nan")
        extra.update({"hit_rate": hit, "half_width_counts": {int(k): int(v) for k, v in zip(*np.unique(widths, return_counts=True))}})
        nan = float("nan")
        return MonteCarloReport(spec.name, int(replications), float(spec.planted_half_width), float(widths.mean()),
                                float(widths.mean() - spec.planted_half_width), nan, float(widths.std(ddof=1)) if widths.size > 1 else nan,
                                nan, hit, nan, None, len(failures), extra, runtime)

    est = np.array([d["estimate"] for d in draws])
    se = np.array([d["se"] for d in draws])
    lo = np.array([d["lo"] for d in draws])
    hi = np.array([d["hi"] for d in draws])
    p = np.array([d["p"] for d in draws])
    ref = 0.0 if truth is None else truth
    sd = float(est.std(ddof=1)) if est.size > 1 else float("nan")
    detection = None
    if spec.name == "indirect_fx":
        detection = float(np.mean([d["detected"] for d in draws]))
    if spec.name == "duration_rdd":
        rel = np.array([d["relative_effect"] for d in draws])
        extra["mean_relative_effect"] = float(np.nanmean(rel)) if np.isfinite(rel).any() else None
        extra["mc_se_relative_effect"] = float(np.nanstd(rel, ddof=1) / np.sqrt(np.isfinite(rel).sum())) if np.isfinite(rel).sum() > 1 else None
    return MonteCarloReport(
        estimator=spec.name,
        replications=int(replications),
        truth=truth,
        mean_estimate=float(est.mean()),
        bias=float(est.mean() - ref),
        mc_se=float(sd / np.sqrt(est.size)) if est.size > 1 else float("nan"),
        sd_estimate=sd,
        mean_se=float(se.mean()),
        coverage=float(np.mean((lo <= ref) & (ref <= hi))),
        rejection_rate=float(np.mean(p < spec.alpha)),
        detection_rate=detection,
        n_failed=len(failures),
        extra=extra,
        runtime_seconds=runtime,
    )


def calibrate_displacement(config: DgpConfig, replications: int = 100, multiple: float = 3.0, spec: EstimatorSpec | None = None):
    """Displacement intensity whose effect equals ``multiple`` times the null noise SE.

    The noise scale is the mean Welch standard error of the near-minus-far
    test on null panels; the effect of intensity ``d`` on the near window's
    before/after change is about ``d`` times its pooled control hire rate.
    Returns ``(intensity, noise_se, control_rate)``.
    """
    spec = spec or EstimatorSpec("indirect_fx")
    null = config.replace(displacement_intensity=0.0, postponement_intensity=0.0)
    report = monte_carlo(null, replications, spec)
    sim = PanelSimulator(null, spec.days, [tuple(spec.near)])
    lo, hi = spec.near
    rate = float(np.mean(sim.hazard[:, lo - 1:hi]))
    noise = report.mean_se
    return min(1.0, multiple * noise / rate), noise, rate
