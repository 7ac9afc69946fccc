"""Ground-truth configuration for the synthetic labour-market generator."""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidConfig
from ..panel_ingest.records import COVARIATE_FAMILIES, share_column

THRESHOLD_DAYS = 729


@dataclass(frozen=True)
class BaselineHazard:
    """Daily hire hazard as a function of spell duration (1-based).

    ``values[k]`` is the hazard at duration ``k + 1``; durations beyond the
    table reuse the last value.
    """

    values: tuple

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0 or np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
            raise InvalidConfig("baseline hazard values must lie in [0, 1]")

    def __call__(self, duration) -> np.ndarray:
        arr = np.asarray(self.values, dtype=float)
        idx = np.clip(np.asarray(duration, dtype=np.int64) - 1, 0, arr.size - 1)
        return arr[idx]

    @classmethod
    def piecewise(cls, breaks, levels, max_duration: int = 4000) -> BaselineHazard:
        """Piecewise-constant hazard: ``levels[k]`` on durations up to ``breaks[k]``.

        ``levels`` has one more entry than ``breaks``; the last level applies
        beyond the final break.
        """
        if len(levels) != len(breaks) + 1:
            raise InvalidConfig("piecewise hazard needs len(levels) == len(breaks) + 1")
        durations = np.arange(1, max_duration + 1)
        pos = np.searchsorted(np.asarray(breaks), durations, side="left")
        return cls(tuple(float(v) for v in np.asarray(levels, dtype=float)[pos]))

    @classmethod
    def from_potential_mixture(
        cls, low_mass: float = 0.1, split: int = 699, f_max: int = 12_728, max_duration: int = 4000
    ) -> BaselineHazard:
        """Hazard implied by a two-part uniform mixture of potential spell lengths.

        A share ``low_mass`` of lengths is uniform on ``1 .. split - 1`` and
        the rest uniform on ``split .. f_max``. With the defaults the hazard at
        duration 729 is 1/12000, about 8.33e-5.
        """
        if not (0 <= low_mass < 1 and 1 < split < f_max):
            raise InvalidConfig("invalid potential-length mixture")
        lengths = np.arange(1, f_max + 1)
        pmf = np.where(lengths < split, low_mass / (split - 1), (1 - low_mass) / (f_max - split + 1))
        survival = np.concatenate([[1.0], 1.0 - np.cumsum(pmf)[:-1]])
        hazard = np.clip(pmf / np.maximum(survival, 1e-300), 0.0, 1.0)
        hazard = hazard[:max_duration] if max_duration < hazard.size else hazard
        return cls(tuple(float(v) for v in hazard))


@dataclass(frozen=True)
class CovariateShift:
    """Raise the probability of one category on a duration range.

    The mass is taken from the family's first (baseline) category.
    """

    column: str
    delta: float
    durations: tuple


@dataclass(frozen=True)
class CovariateMixture:
    probabilities: dict = field(default_factory=lambda: dict(DEFAULT_COVARIATE_PROBABILITIES))
    shifts: tuple = ()

    def __post_init__(self):
        for family, probs in self.probabilities.items():
            if family not in COVARIATE_FAMILIES or len(probs) != len(COVARIATE_FAMILIES[family]):
                raise InvalidConfig(f"covariate family {family!r} has the wrong categories")
            p = np.asarray(probs, dtype=float)
            if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
                raise InvalidConfig(f"probabilities for {family!r} must be nonnegative and sum to 1")
        for s in self.shifts:
            family, _, category = s.column.partition(":")
            if family not in COVARIATE_FAMILIES or category not in COVARIATE_FAMILIES[family]:
                raise InvalidConfig(f"unknown shift column {s.column!r}")

    def family_probabilities(self, family: str, durations: np.ndarray) -> np.ndarray:
        """Category probabilities per duration, shape ``(len(durations), K)``."""
        base = np.asarray(self.probabilities[family], dtype=float)
        probs = np.tile(base, (durations.size, 1))
        cats = COVARIATE_FAMILIES[family]
        for s in self.shifts:
            fam, _, category = s.column.partition(":")
            if fam != family:
                continue
            lo, hi = s.durations
            rows = (durations >= lo) & (durations <= hi)
            probs[rows, cats.index(category)] += s.delta
            probs[rows, 0] -= s.delta
        if np.any(probs < -1e-12):
            raise InvalidConfig(f"covariate shift makes a {family!r} probability negative")
        return np.clip(probs, 0.0, 1.0)


DEFAULT_COVARIATE_PROBABILITIES = {
    "sex": (0.55, 0.45),
    "education": (0.10, 0.35, 0.35, 0.05, 0.10, 0.05),
    "first_job_age": (0.15, 0.35, 0.25, 0.20, 0.05),
    "citizenship": (0.88, 0.12),
    "sector": (0.05, 0.25, 0.12, 0.58),
    "area": (0.25, 0.20, 0.20, 0.35),
}

# mean-one monthly multipliers: summer trough, autumn and January peaks
DEFAULT_SEASONAL_PROFILE = (1.10, 1.00, 1.05, 1.00, 1.00, 0.95, 0.90, 0.70, 1.10, 1.10, 1.05, 1.05)
# contract endings are concentrated at the end of June and December
DEFAULT_ENDING_PROFILE = (0.9, 0.8, 0.9, 0.9, 0.9, 1.3, 0.9, 0.8, 1.0, 0.9, 0.9, 1.8)


def _normalise(profile) -> tuple:
    arr = np.asarray(profile, dtype=float)
    return tuple(float(v) for v in arr / arr.mean())


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the synthetic data-generating process.

    The daily hire hazard of a worker at spell duration ``i`` on day ``j`` is

    ``base(i) * season(month j) * distortion(i, j) + itt(year j) * [i >= threshold, j <= policy_end]
    + time_jump * [j >= time_policy_date]``

    clipped to ``[0, 1]``. ``distortion`` suppresses hires in the
    ``displacement_width`` durations below the threshold while the targeted
    policy is active and, for postponement, moves hazard from the
    ``postponement_width`` durations below the threshold to as many above.
    """

    n_workers: int = 100_000
    period: tuple = (dt.date(2008, 1, 1), dt.date(2016, 12, 31))
    true_itt: float | dict = 0.0
    baseline_hazard: BaselineHazard = field(default_factory=BaselineHazard.from_potential_mixture)
    seasonal_profile: tuple = DEFAULT_SEASONAL_PROFILE
    covariate_mixture: CovariateMixture = field(default_factory=CovariateMixture)
    displacement_intensity: float = 0.0
    displacement_width: int = 60
    postponement_intensity: float = 0.0
    postponement_width: int = 30
    time_jump: float = 0.0
    time_policy_date: dt.date = dt.date(2015, 1, 1)
    policy_end: dt.date = dt.date(2014, 12, 31)
    threshold: int = THRESHOLD_DAYS
    inflow_per_day: float = 1100.0
    ending_profile: tuple = DEFAULT_ENDING_PROFILE
    temporary_share: float = 0.6
    other_share: float = 0.1
    temporary_mean_days: float = 180.0
    permanent_mean_days: float = 1500.0
    year_end_snap: float = 0.2
    n_firms: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.n_workers < 0:
            raise InvalidConfig("n_workers must be nonnegative")
        if self.period[1] < self.period[0]:
            raise InvalidConfig("period ends before it starts")
        if len(self.seasonal_profile) != 12 or any(v <= 0 for v in self.seasonal_profile):
            raise InvalidConfig("seasonal_profile needs 12 positive multipliers")
        if len(self.ending_profile) != 12 or any(v <= 0 for v in self.ending_profile):
            raise InvalidConfig("ending_profile needs 12 positive multipliers")
        for name in ("displacement_intensity", "postponement_intensity"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        if not (0 <= self.temporary_share and 0 <= self.other_share and self.temporary_share + self.other_share <= 1):
            raise InvalidConfig("contract type shares must be a valid distribution")
        if self.inflow_per_day <= 0:
            raise InvalidConfig("inflow_per_day must be positive")
        if not 0 <= self.year_end_snap <= 1:
            raise InvalidConfig("year_end_snap must lie in [0, 1]")
        itts = self.true_itt.values() if isinstance(self.true_itt, dict) else [self.true_itt]
        if any(not np.isfinite(v) for v in itts):
            raise InvalidConfig("true_itt must be finite")

    def replace(self, **changes) -> DgpConfig:
        return dataclasses.replace(self, **changes)

    @property
    def season(self) -> np.ndarray:
        return np.asarray(_normalise(self.seasonal_profile))

    @property
    def endings(self) -> np.ndarray:
        return np.asarray(_normalise(self.ending_profile))

    def itt_for_years(self, years: np.ndarray) -> np.ndarray:
        if isinstance(self.true_itt, dict):
            lookup = {int(k): float(v) for k, v in self.true_itt.items()}
            return np.array([lookup.get(int(y), 0.0) for y in np.asarray(years).ravel()]).reshape(np.shape(years))
        return np.full(np.shape(years), float(self.true_itt))

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, BaselineHazard):
                value = {"values_head": list(value.values[:5]), "length": len(value.values)}
            elif isinstance(value, CovariateMixture):
                value = {
                    "probabilities": {k: list(v) for k, v in value.probabilities.items()},
                    "shifts": [dataclasses.asdict(s) for s in value.shifts],
                }
            elif isinstance(value, dt.date):
                value = value.isoformat()
            elif isinstance(value, tuple):
                value = [v.isoformat() if isinstance(v, dt.date) else v for v in value]
            elif isinstance(value, dict):
                value = {str(k): v for k, v in value.items()}
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> DgpConfig:
        """Build a config from plain values (as read from YAML or JSON)."""
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known - {"baseline_mixture", "baseline_piecewise"}
        if unknown:
            raise InvalidConfig(f"unknown DGP parameters: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key == "period":
                kwargs[key] = tuple(_date(v) for v in value)
            elif key in ("time_policy_date", "policy_end"):
                kwargs[key] = _date(value)
            elif key == "true_itt" and isinstance(value, dict):
                kwargs[key] = {int(k): float(v) for k, v in value.items()}
            elif key in ("seasonal_profile", "ending_profile"):
                kwargs[key] = tuple(float(v) for v in value)
            elif key == "covariate_mixture":
                probs = {k: tuple(v) for k, v in value.get("probabilities", DEFAULT_COVARIATE_PROBABILITIES).items()}
                merged = dict(DEFAULT_COVARIATE_PROBABILITIES)
                merged.update(probs)
                shifts = tuple(
                    CovariateShift(s["column"], float(s["delta"]), tuple(s["durations"])) for s in value.get("shifts", ())
                )
                kwargs[key] = CovariateMixture(merged, shifts)
            elif key == "baseline_mixture":
                kwargs["baseline_hazard"] = BaselineHazard.from_potential_mixture(**value)
            elif key == "baseline_piecewise":
                kwargs["baseline_hazard"] = BaselineHazard.piecewise(value["breaks"], value["levels"])
            elif key == "baseline_hazard":
                kwargs[key] = value if isinstance(value, BaselineHazard) else BaselineHazard(tuple(value))
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None


def _date(value) -> dt.date:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise InvalidConfig(f"invalid date {value!r}") from None


def covariate_columns() -> tuple:
    return tuple(share_column(f, c) for f, cats in COVARIATE_FAMILIES.items() for c in cats)
