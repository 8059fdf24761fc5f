# In DynamicEmulation/svdmodel.py
"""
The SVD-based GP model: a truncated singular-vector basis of the centered
responses with an independent GP on every basis coefficient, and its approximate
Gaussian predictive at a new input.
"""
import time
from concurrent import futures
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from . import linalg
from .coefgp import (
    CoefGpFit,
    CoefPrediction,
    CorrParams,
    PriorSpec,
    default_starts,
    map_theta,
    predict_coef,
    resolve_prior,
)
from .exceptions import DegenerateResponseError, EmulatorError, FitError, InputError

DEFAULT_GAMMA = 0.95
DEFAULT_ETA = 1e-6


@dataclass(frozen=True, eq=False)
class SvdBasis:
    U_star: np.ndarray
    d: np.ndarray
    V_star: np.ndarray
    B: np.ndarray
    p: int
    k: int
    gamma: float


@dataclass(frozen=True, eq=False)
class SvdGpModel:
    basis: SvdBasis
    coef_fits: List[CoefGpFit]
    sigma2_hat: float
    design: np.ndarray
    response_mean: np.ndarray
    prior: PriorSpec
    eta: float

    @property
    def p(self) -> int:
        return self.basis.p


@dataclass(frozen=True, eq=False)
class PredictiveSummary:
    mean: np.ndarray
    var: np.ndarray


def build_basis(Y: np.ndarray, gamma: float = DEFAULT_GAMMA) -> SvdBasis:
    """
    SVD of Y truncated to the smallest p whose cumulative share of the singular
    values (not their squares) exceeds gamma.

    Raises:
        DegenerateResponseError: Y is identically zero.
    """
    Y = np.asarray(Y, dtype=float)
    if not 0.0 < gamma < 1.0:
        raise InputError(f"Threshold gamma must lie in (0, 1), got {gamma}.")
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise InputError(f"Need an L x N response matrix with N >= 2, got shape {Y.shape}.")

    U, d, V = linalg.svd(Y)
    cumulative = np.cumsum(d)
    if not cumulative[-1] > 0:
        raise DegenerateResponseError("Response matrix has no nonzero singular value.")
    p = int(np.argmax(cumulative / cumulative[-1] > gamma)) + 1

    return SvdBasis(
        U_star=U[:, :p],
        d=d[:p],
        V_star=V[:, :p],
        B=U[:, :p] * d[:p],
        p=p,
        k=d.shape[0],
        gamma=gamma,
    )


def _check_pair(X: np.ndarray, Y: np.ndarray):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != X.shape[0]:
        raise InputError(f"Response has {Y.shape[-1]} columns but the design has {X.shape[0]} rows.")
    if X.shape[0] < 2:
        raise InputError("Need at least two training points.")
    return X, Y


def fit_svdgp(X: np.ndarray, Y: np.ndarray, gamma: float = DEFAULT_GAMMA, prior: Optional[PriorSpec] = None,
              eta: float = DEFAULT_ETA, starts: Optional[Sequence[Optional[Sequence[CorrParams]]]] = None,
              timings: Optional[Dict[str, float]] = None,
              executor: Optional[futures.Executor] = None) -> SvdGpModel:
    """
    Fits an SVD-based GP model.

    Args:
        X: N x q design.
        Y: L x N responses, column j observed at row j of X.
        gamma: Truncation threshold on the cumulative singular-value share.
        prior: Prior specification (vague defaults when None).
        eta: Nugget for every coefficient correlation matrix.
        starts: Optional per-coefficient extra optimizer starts (e.g. a previous fit's theta).
        timings: Optional accumulator for the "svd" and "theta" phases (seconds).
        executor: Optional executor to fit the p coefficients concurrently.

    Raises:
        FitError: a coefficient fit failed; `index` names the coefficient.
    """
    X, Y = _check_pair(X, Y)
    prior = resolve_prior(prior or PriorSpec(), X)
    N, L = X.shape[0], Y.shape[0]

    tic = time.perf_counter()
    response_mean = Y.mean(axis=1)
    centered = Y - response_mean[:, None]
    basis = build_basis(centered, gamma)
    residual = centered - basis.B @ basis.V_star.T
    sigma2_hat = (float(np.sum(residual ** 2)) + prior.beta) / (N * L + prior.alpha + 2.0)
    if timings is not None:
        timings["svd"] = timings.get("svd", 0.0) + time.perf_counter() - tic

    def fit_one(i: int) -> CoefGpFit:
        extra = list(starts[i]) if starts is not None and i < len(starts) and starts[i] else []
        coef_starts = None
        if extra:
            coef_starts = default_starts(prior, X.shape[1]) + extra
        try:
            return map_theta(basis.V_star[:, i], X, prior, eta, coef_starts)
        except EmulatorError as e:
            raise FitError(f"Coefficient {i} could not be fitted: {e}", index=i) from e

    tic = time.perf_counter()
    if executor is not None:
        coef_fits = list(executor.map(fit_one, range(basis.p)))
    else:
        coef_fits = [fit_one(i) for i in range(basis.p)]
    if timings is not None:
        timings["theta"] = timings.get("theta", 0.0) + time.perf_counter() - tic

    logger.debug("Fitted SVD-GP on N={} with p={} of k={}, sigma2_hat={:.3e}", N, basis.p, basis.k, sigma2_hat)
    return SvdGpModel(
        basis=basis,
        coef_fits=coef_fits,
        sigma2_hat=sigma2_hat,
        design=X,
        response_mean=response_mean,
        prior=prior,
        eta=eta,
    )


def predict_coefficients(model: SvdGpModel, x0: np.ndarray) -> List[CoefPrediction]:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.design.shape[1],):
        raise InputError(f"Expected an input of length {model.design.shape[1]}, got shape {x0.shape}.")
    return [predict_coef(x0, fit, model.design) for fit in model.coef_fits]


def predict(model: SvdGpModel, x0: np.ndarray) -> PredictiveSummary:
    """Mean B c(x0) + response mean and the diagonal of B Lambda B^T + sigma2_hat I."""
    coefs = predict_coefficients(model, x0)
    c = np.array([cp.mean for cp in coefs])
    s2 = np.array([cp.scale2 for cp in coefs])
    B = model.basis.B
    mean = B @ c + model.response_mean
    var = (B ** 2) @ s2 + model.sigma2_hat
    return PredictiveSummary(mean=mean, var=var)
