# In DynamicEmulation/__init__.py
"""
SVD-based Gaussian process emulators for simulators with time-series output.
"""
from .coefgp import CorrParams, PriorSpec
from .driver import PIPELINES, ExperimentConfig, RunReport, run_experiment
from .exceptions import EmulatorError
from .metrics import mc_cv_splits, nmspe, proper_score, score_predictions
from .neighborhood import SearchScheme, build_neighborhood, knn
from .simulators import (
    ENVIRON_DOMAIN,
    FORRESTER_DOMAIN,
    TimeGrid,
    environ,
    evaluate_design,
    forrester,
    lhd,
    load_dataset,
)
from .svdmodel import fit_svdgp, predict

__all__ = [
    "ENVIRON_DOMAIN",
    "FORRESTER_DOMAIN",
    "CorrParams",
    "EmulatorError",
    "ExperimentConfig",
    "PIPELINES",
    "PriorSpec",
    "RunReport",
    "SearchScheme",
    "TimeGrid",
    "build_neighborhood",
    "environ",
    "evaluate_design",
    "fit_svdgp",
    "forrester",
    "knn",
    "lhd",
    "load_dataset",
    "mc_cv_splits",
    "nmspe",
    "predict",
    "proper_score",
    "run_experiment",
    "score_predictions",
]
