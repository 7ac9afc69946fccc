"""Vectorised daily hire hazard of the synthetic process."""

from __future__ import annotations

import numpy as np

from ..panel_ingest.records import to_daynum
from .config import DgpConfig


def month_of(days) -> np.ndarray:
    """Calendar month (0-11) of day numbers."""
    return np.asarray(days, dtype=np.int64).astype("datetime64[D]").astype("datetime64[M]").astype(np.int64) % 12


def year_of(days) -> np.ndarray:
    return np.asarray(days, dtype=np.int64).astype("datetime64[D]").astype("datetime64[Y]").astype(np.int64) + 1970


def hire_hazard(config: DgpConfig, durations, days, *, potential: bool = False) -> np.ndarray:
    """Hazard at spell duration ``durations`` on day ``days`` (broadcast).

    With ``potential=True`` the policy terms (treatment effect, distortions,
    time jump) are switched off, giving the no-policy counterfactual.
    """
    i = np.asarray(durations, dtype=np.int64)
    j = np.asarray(days, dtype=np.int64)
    h = config.baseline_hazard(i) * config.season[month_of(j)]
    if potential:
        return np.clip(h, 0.0, 1.0)

    thr = config.threshold
    active = j <= to_daynum(config.policy_end)
    if config.displacement_intensity:
        near = (i >= thr - config.displacement_width) & (i < thr) & active
        h = h * np.where(near, 1.0 - config.displacement_intensity, 1.0)
    if config.postponement_intensity:
        below = (i >= thr - config.postponement_width) & (i < thr) & active
        above = (i >= thr) & (i < thr + config.postponement_width) & active
        h = h * np.where(below, 1.0 - config.postponement_intensity, np.where(above, 1.0 + config.postponement_intensity, 1.0))
    itt = config.itt_for_years(year_of(j))
    h = h + np.where((i >= thr) & active, itt, 0.0)
    if config.time_jump:
        h = h + np.where(j >= to_daynum(config.time_policy_date), config.time_jump, 0.0)
    return np.clip(h, 0.0, 1.0)
