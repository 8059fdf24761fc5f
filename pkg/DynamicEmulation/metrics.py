# In DynamicEmulation/metrics.py
"""
Prediction scores for time-series outputs and the Monte Carlo cross-validation
split protocol.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from .exceptions import DegenerateResponseError, InputError


@dataclass
class ScoreReport:
    per_point_nmspe: np.ndarray
    per_point_score: np.ndarray
    mean_nmspe: float
    log_mean_nmspe: float
    mean_score: float
    n_excluded: int = 0
    excluded: List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(values):
            return [float(v) if np.isfinite(v) else None for v in values]

        return {
            "mean_nmspe": _json_float(self.mean_nmspe),
            "log_mean_nmspe": _json_float(self.log_mean_nmspe),
            "mean_score": _json_float(self.mean_score),
            "n_excluded": self.n_excluded,
            "excluded": list(self.excluded),
            "per_point_nmspe": clean(self.per_point_nmspe),
            "per_point_score": clean(self.per_point_score),
        }


def _json_float(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def _pair(y: np.ndarray, yhat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.ndim != 1 or y.shape != yhat.shape:
        raise InputError(f"Expected two series of equal length, got {y.shape} and {yhat.shape}.")
    return y, yhat


def nmspe(y: np.ndarray, yhat: np.ndarray) -> float:
    """
    Squared prediction error normalized by the temporal variation of the truth:
    sum (y_t - yhat_t)^2 / sum (y_t - mean(y))^2.

    Raises:
        DegenerateResponseError: y is constant in time.
    """
    y, yhat = _pair(y, yhat)
    if y.shape[0] < 2:
        raise InputError("NMSPE needs a series of length at least 2.")
    denominator = float(np.sum((y - y.mean()) ** 2))
    if not denominator > 0:
        raise DegenerateResponseError("True series is constant; NMSPE is undefined.")
    return float(np.sum((y - yhat) ** 2)) / denominator


def proper_score(y: np.ndarray, yhat: np.ndarray, var: np.ndarray) -> float:
    """-mean((y - yhat)^2 / var) - mean(log var); higher is better."""
    y, yhat = _pair(y, yhat)
    var = np.asarray(var, dtype=float)
    if var.shape != y.shape:
        raise InputError(f"Variance has shape {var.shape}, series has {y.shape}.")
    if not np.all(var > 0):
        raise InputError("Predictive variances must be strictly positive.")
    return float(-np.mean((y - yhat) ** 2 / var) - np.mean(np.log(var)))


def score_predictions(truth: np.ndarray, means: np.ndarray, variances: Optional[np.ndarray] = None) -> ScoreReport:
    """
    Scores M predicted series (columns). Columns with a constant truth or
    non-finite predictions are excluded from the means and counted.
    """
    truth = np.asarray(truth, dtype=float)
    means = np.asarray(means, dtype=float)
    if truth.ndim != 2 or truth.shape != means.shape:
        raise InputError(f"Truth {truth.shape} and predictions {means.shape} must be matching L x M matrices.")
    if variances is not None:
        variances = np.asarray(variances, dtype=float)
        if variances.shape != truth.shape:
            raise InputError(f"Variances {variances.shape} do not match predictions {means.shape}.")

    M = truth.shape[1]
    point_nmspe = np.full(M, np.nan)
    point_score = np.full(M, np.nan)
    excluded = []
    for j in range(M):
        if not np.all(np.isfinite(means[:, j])):
            excluded.append(j)
            continue
        try:
            point_nmspe[j] = nmspe(truth[:, j], means[:, j])
        except DegenerateResponseError:
            logger.warning("Test point {} has a constant response; excluded from NMSPE.", j)
            excluded.append(j)
            continue
        if variances is not None and np.all(np.isfinite(variances[:, j])) and np.all(variances[:, j] > 0):
            point_score[j] = proper_score(truth[:, j], means[:, j], variances[:, j])

    kept = np.isfinite(point_nmspe)
    mean_nmspe = float(point_nmspe[kept].mean()) if kept.any() else float("nan")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mean = float(np.log(mean_nmspe)) if np.isfinite(mean_nmspe) else float("nan")
    scored = np.isfinite(point_score)
    mean_score = float(point_score[scored].mean()) if scored.any() else float("nan")

    return ScoreReport(
        per_point_nmspe=point_nmspe,
        per_point_score=point_score,
        mean_nmspe=mean_nmspe,
        log_mean_nmspe=log_mean,
        mean_score=mean_score,
        n_excluded=len(excluded),
        excluded=excluded,
    )


def mc_cv_splits(N: int, ratio: Tuple[int, int] = (4, 1), R: int = 50,
                 seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    R random train/test partitions of range(N) in the given ratio.

    Returns:
        List of (train, test) index arrays, each sorted ascending.
    """
    train_part, test_part = ratio
    if train_part <= 0 or test_part <= 0:
        raise InputError(f"Split ratio must be positive, got {ratio}.")
    if R < 1:
        raise InputError(f"Need at least one repetition, got R={R}.")
    if N < 2:
        raise InputError(f"Cannot split {N} points into train and test sets.")

    n_test = int(round(N * test_part / (train_part + test_part)))
    n_test = min(max(n_test, 1), N - 1)
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(R):
        order = rng.permutation(N)
        splits.append((np.sort(order[n_test:]), np.sort(order[:n_test])))
    return splits
