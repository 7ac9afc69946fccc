"""Direct simulation of cell panels from cohort flows.

Instead of simulating workers one by one, every cohort (the workers whose
contract ended on the same day) enters the first requested duration range
as a Poisson count, thinned from the daily inflow by the deterministic
survival up to that duration. Inside a duration range hires follow a
binomial recursion along the cohort diagonal, which is exact for the hazard
model; survivors are carried between ranges by binomial thinning.
Covariate counts are drawn per cell from the (possibly duration-dependent)
mixture, ignoring the persistence of individual workers across days.
"""

from __future__ import annotations

import numpy as np

from ..panel_ingest.cells import CellPanel, _as_day
from ..panel_ingest.records import COVARIATE_FAMILIES, from_daynum, share_column
from .config import DgpConfig
from .corpus import make_rng
from .hazard import hire_hazard, month_of


def _ranges(duration_ranges) -> list[tuple[int, int]]:
    if isinstance(duration_ranges[0], (int, np.integer)):
        duration_ranges = [duration_ranges]
    out = sorted((int(lo), int(hi)) for lo, hi in duration_ranges)
    for (_, hi), (lo2, _) in zip(out, out[1:]):
        if lo2 <= hi:
            raise ValueError("duration ranges overlap")
    return out


class PanelSimulator:
    """Reusable cell-panel simulator for one config, day range and duration ranges.

    The deterministic part (hazards, survival, expected inflow) is computed
    once; :meth:`draw` only generates the random counts.
    """

    def __init__(self, config: DgpConfig, day_range, duration_ranges):
        self.config = config
        self.days = (_as_day(day_range[0]), _as_day(day_range[1]))
        self.ranges = _ranges(duration_ranges)
        jlo, jhi = self.days
        dmin = self.ranges[0][0]
        dmax = self.ranges[-1][1]
        self.cohorts = np.arange(jlo - dmax, jhi - dmin + 1, dtype=np.int64)
        durations = np.arange(1, dmax + 1)
        # hazard along each cohort's diagonal: row = cohort, col = duration - 1
        self.hazard = hire_hazard(config, durations[None, :], self.cohorts[:, None] + durations[None, :])
        log_surv = np.concatenate(
            [np.zeros((self.cohorts.size, 1)), np.cumsum(np.log1p(-self.hazard), axis=1)], axis=1
        )
        # survival[c, d] = P(still out of work when reaching duration d + 1)
        self.survival = np.exp(log_surv)
        self.inflow = config.inflow_per_day * config.endings[month_of(self.cohorts)]

    def draw(self, rng: np.random.Generator, covariates: bool = True) -> CellPanel:
        jlo, jhi = self.days
        n_days = jhi - jlo + 1
        cohorts = self.cohorts
        ncoh = cohorts.size
        parts = []
        lo0 = self.ranges[0][0]
        alive = rng.poisson(self.inflow * self.survival[:, lo0 - 1])
        prev_hi = None
        for lo, hi in self.ranges:
            if prev_hi is not None:
                # carry survivors from duration prev_hi + 1 to lo
                s_from = self.survival[:, prev_hi]
                s_to = self.survival[:, lo - 1]
                with np.errstate(invalid="ignore", divide="ignore"):
                    p = np.where(s_from > 0, s_to / s_from, 0.0)
                alive = rng.binomial(alive, np.clip(p, 0.0, 1.0))
            n_dur = hi - lo + 1
            group = np.zeros((n_days, n_dur), dtype=np.int64)
            hires = np.zeros((n_days, n_dur), dtype=np.int64)
            for k, i in enumerate(range(lo, hi + 1)):
                h = rng.binomial(alive, self.hazard[:, i - 1])
                day_idx = cohorts + i - jlo
                inside = (day_idx >= 0) & (day_idx < n_days)
                group[day_idx[inside], k] = alive[inside]
                hires[day_idx[inside], k] = h[inside]
                alive = alive - h
            parts.append((lo, hi, group, hires))
            prev_hi = hi

        duration = np.concatenate([np.tile(np.arange(lo, hi + 1), n_days) for lo, hi, _, _ in parts])
        day = np.concatenate([np.repeat(np.arange(jlo, jhi + 1), hi - lo + 1) for lo, hi, _, _ in parts])
        group = np.concatenate([g.ravel() for _, _, g, _ in parts])
        hires = np.concatenate([h.ravel() for _, _, _, h in parts])
        order = np.lexsort((duration, day))
        duration, day, group, hires = duration[order], day[order], group[order], hires[order]
        counts = {}
        if covariates:
            mixture = self.config.covariate_mixture
            for family, cats in COVARIATE_FAMILIES.items():
                uniq, inv = np.unique(duration, return_inverse=True)
                probs = mixture.family_probabilities(family, uniq)[inv]
                draws = rng.multinomial(group, probs)
                for k, cat in enumerate(cats):
                    counts[share_column(family, cat)] = draws[:, k].astype(np.int64)
        meta = {
            "day_range": [from_daynum(jlo).isoformat(), from_daynum(jhi).isoformat()],
            "duration_ranges": [list(r) for r in self.ranges],
            "source": "synthetic",
            "n_cells": int(duration.size),
            "n_empty_cells": int(np.count_nonzero(group == 0)),
        }
        return CellPanel(duration=duration, day=day, group_size=group, hires=hires, counts=counts, meta=meta)


def simulate_panel(config: DgpConfig, day_range, duration_ranges, *, rep: int = 0, covariates: bool = True) -> CellPanel:
    """One synthetic cell panel; replication ``rep`` uses seed ``(config.seed, rep)``."""
    return PanelSimulator(config, day_range, duration_ranges).draw(make_rng(config.seed, rep), covariates)


def planted_boundary_panel(
    rng: np.random.Generator,
    day_range,
    *,
    threshold: int = 729,
    half_width: int = 15,
    max_half_width: int = 30,
    group_mean: float = 1000.0,
    column: str = "sex:female",
    jump: float = 0.2,
    config: DgpConfig | None = None,
) -> CellPanel:
    """Panel balanced by construction inside ``half_width`` and imbalanced outside.

    For ``d < half_width`` the cell at duration ``threshold + d`` is an exact
    copy (group size and every covariate count) of the cell at
    ``threshold - 1 - d`` on the same day, so every day-paired share
    difference is exactly zero for windows up to ``half_width``. Beyond it,
    treated-side cells draw ``column`` with probability raised by ``jump``.
    """
    config = config or DgpConfig()
    jlo, jhi = (_as_day(d) for d in day_range)
    n_days = jhi - jlo + 1
    lo, hi = threshold - max_half_width, threshold + max_half_width - 1
    durations = np.arange(lo, hi + 1)
    n_dur = durations.size
    group = rng.poisson(group_mean, size=(n_days, n_dur))
    base_p = config.baseline_hazard(durations)[None, :]
    hires = rng.binomial(group, np.broadcast_to(base_p, group.shape))

    mirror_src = {threshold + d: threshold - 1 - d for d in range(half_width)}
    col_of = {int(i): k for k, i in enumerate(durations)}
    for dst, src in mirror_src.items():
        group[:, col_of[dst]] = group[:, col_of[src]]
        hires[:, col_of[dst]] = hires[:, col_of[src]]

    family, _, category = column.partition(":")
    counts = {}
    flat_group = group.ravel()
    dur_flat = np.tile(durations, n_days)
    for fam, cats in COVARIATE_FAMILIES.items():
        probs = np.tile(np.asarray(config.covariate_mixture.probabilities[fam], dtype=float), (n_dur, 1))
        if fam == family:
            outside = durations >= threshold + half_width
            probs[outside, cats.index(category)] += jump
            probs[outside, 0] -= jump
        draws = rng.multinomial(flat_group, probs[np.tile(np.arange(n_dur), n_days)]).reshape(n_days, n_dur, len(cats))
        for dst, src in mirror_src.items():
            draws[:, col_of[dst], :] = draws[:, col_of[src], :]
        for k, cat in enumerate(cats):
            counts[share_column(fam, cat)] = draws[:, :, k].ravel().astype(np.int64)
    return CellPanel(
        duration=dur_flat.astype(np.int64),
        day=np.repeat(np.arange(jlo, jhi + 1, dtype=np.int64), n_dur),
        group_size=flat_group.astype(np.int64),
        hires=hires.ravel().astype(np.int64),
        counts=counts,
        meta={"source": "planted_boundary", "half_width": half_width},
    )
