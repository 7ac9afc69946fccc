"""Synthetic contract corpora and cell panels with known ground truth."""

from .config import (
    DEFAULT_COVARIATE_PROBABILITIES,
    DEFAULT_ENDING_PROFILE,
    DEFAULT_SEASONAL_PROFILE,
    BaselineHazard,
    CovariateMixture,
    CovariateShift,
    DgpConfig,
)
from .corpus import SpellTruth, SyntheticCorpus, draw_spell_lengths, make_rng, simulate_corpus
from .hazard import hire_hazard
from .montecarlo import ESTIMATORS, EstimatorSpec, MonteCarloReport, calibrate_displacement, monte_carlo
from .panel import PanelSimulator, planted_boundary_panel, simulate_panel

__all__ = [
    "DEFAULT_COVARIATE_PROBABILITIES",
    "DEFAULT_ENDING_PROFILE",
    "DEFAULT_SEASONAL_PROFILE",
    "ESTIMATORS",
    "BaselineHazard",
    "CovariateMixture",
    "CovariateShift",
    "DgpConfig",
    "EstimatorSpec",
    "MonteCarloReport",
    "PanelSimulator",
    "SpellTruth",
    "SyntheticCorpus",
    "calibrate_displacement",
    "draw_spell_lengths",
    "hire_hazard",
    "make_rng",
    "monte_carlo",
    "planted_boundary_panel",
    "simulate_corpus",
    "simulate_panel",
]
