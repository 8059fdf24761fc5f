# In DynamicEmulation/coefgp.py
"""
Inference for a single basis-coefficient process c_i(x): anisotropic Gaussian
correlation, the marginal posterior of the inverse-squared lengthscales with the
process variance integrated out, its MAP, and the Student-t predictive.
"""
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize
from loguru import logger
from scipy.spatial.distance import cdist, pdist
from scipy.special import gammaln
from scipy.stats import gamma as gamma_dist

from .exceptions import FitError, InputError, SingularMatrixError
from .linalg import SpdFactor, spd_factorize

# The optimizer works on log(theta) within this many e-folds of the prior mode.
_LOG_THETA_SPAN = np.log(1e4)
_PENALTY = 1e30


@dataclass(frozen=True, eq=False)
class CorrParams:
    """Inverse-squared lengthscales (theta_1, ..., theta_q)."""
    theta: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.ndim != 1 or not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise InputError(f"Correlation parameters must be positive and finite, got {theta}.")
        object.__setattr__(self, "theta", theta)

    @property
    def q(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class PriorSpec:
    """
    IG(alpha_i/2, beta_i/2) on sigma_i^2, IG(alpha/2, beta/2) on sigma^2 and
    independent Gamma(shape, scale) priors on 1/theta_ij.

    A theta_prior_scale of None means "derive from the design being fitted".
    """
    alpha_i: float = 0.0
    beta_i: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    theta_prior_shape: float = 1.5
    theta_prior_scale: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha_i", "beta_i", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise InputError(f"Prior parameter {name} must be nonnegative.")
        if self.theta_prior_shape <= 0:
            raise InputError("Gamma prior shape must be positive.")
        if self.theta_prior_scale is not None and not self.theta_prior_scale > 0:
            raise InputError("Gamma prior scale must be positive.")


@dataclass(frozen=True, eq=False)
class CoefGpFit:
    """A fitted coefficient GP; everything prediction and the J-criterion reuse."""
    theta_hat: CorrParams
    factor: SpdFactor
    psi: float
    kinv_v: np.ndarray
    v: np.ndarray
    prior: PriorSpec
    n_points: int
    eta: float
    log_post: float


@dataclass(frozen=True)
class CoefPrediction:
    mean: float
    scale2: float
    dof: float


def gauss_corr(x1: np.ndarray, x2: np.ndarray, params: CorrParams) -> float:
    """exp(-sum_j theta_j (x1_j - x2_j)^2)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.shape != params.theta.shape:
        raise InputError(f"Dimension mismatch: {x1.shape}, {x2.shape}, theta {params.theta.shape}.")
    return float(np.exp(-np.sum(params.theta * (x1 - x2) ** 2)))


def corr_matrix(X1: np.ndarray, X2: np.ndarray, params: CorrParams) -> np.ndarray:
    """Gaussian correlations between the rows of X1 and the rows of X2 (no nugget)."""
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    if X1.shape[1] != params.q or X2.shape[1] != params.q:
        raise InputError(f"Dimension mismatch: {X1.shape[1]}, {X2.shape[1]} vs theta of length {params.q}.")
    root = np.sqrt(params.theta)
    return np.exp(-cdist(X1 * root, X2 * root, "sqeuclidean"))


def theta_prior_scale(X: np.ndarray, shape: float = 1.5) -> float:
    """
    Gamma scale placing the largest squared pairwise distance of X at the 95%
    quantile of the prior on 1/theta.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    dmax = float(pdist(X, "sqeuclidean").max()) if X.shape[0] > 1 else 0.0
    if not dmax > 0:
        logger.warning("Design has no spread; falling back to unit squared distance for the theta prior.")
        dmax = 1.0
    return dmax / float(gamma_dist.ppf(0.95, shape))


def resolve_prior(prior: PriorSpec, X: np.ndarray) -> PriorSpec:
    """Fills in the design-dependent Gamma scale when it is unset."""
    if prior.theta_prior_scale is not None:
        return prior
    return replace(prior, theta_prior_scale=theta_prior_scale(X, prior.theta_prior_shape))


def default_starts(prior: PriorSpec, q: int) -> List[CorrParams]:
    """Prior mode of theta and one decade either side."""
    a, s = prior.theta_prior_shape, prior.theta_prior_scale
    tau_mode = (a - 1.0) * s if a > 1.0 else s
    mode = 1.0 / tau_mode
    return [CorrParams(np.full(q, mode * f)) for f in (1.0, 10.0, 0.1)]


def _log_prior(theta: np.ndarray, prior: PriorSpec) -> Tuple[float, np.ndarray]:
    a, s = prior.theta_prior_shape, prior.theta_prior_scale
    # Gamma(a, s) on tau = 1/theta, pushed forward to theta.
    value = np.sum(-(a + 1.0) * np.log(theta) - 1.0 / (theta * s) - gammaln(a) - a * np.log(s))
    grad = -(a + 1.0) / theta + 1.0 / (theta ** 2 * s)
    return float(value), grad


def _evaluate(theta: np.ndarray, v: np.ndarray, X: np.ndarray, prior: PriorSpec, eta: float,
              want_grad: bool = False):
    """Log posterior (and optionally its gradient in log theta) plus the pieces a fit caches."""
    params = CorrParams(theta)
    K = corr_matrix(X, X, params)
    factor = spd_factorize(K, eta)
    w = factor.solve(v)
    psi = float(v @ w)
    nu = prior.alpha_i + X.shape[0]
    b = prior.beta_i + psi
    lp, lp_grad = _log_prior(theta, prior)
    value = -0.5 * factor.log_det - 0.5 * nu * np.log(b / 2.0) + lp

    grad = None
    if want_grad:
        # d/dtheta_j = 1/2 sum((A^-1 - nu/b w w^T) o K o D_j) + dlogprior, D_j the squared differences.
        W = (factor.inverse() - (nu / b) * np.outer(w, w)) * K
        row = W.sum(axis=1)
        dtheta = (X ** 2).T @ row - np.sum(X * (W @ X), axis=0) + lp_grad
        grad = dtheta * theta
    return value, grad, factor, w, psi


def log_posterior_theta(theta: CorrParams, v: np.ndarray, X: np.ndarray, prior: PriorSpec, eta: float) -> float:
    """
    -1/2 log|K| - (alpha_i + n)/2 log((beta_i + psi)/2) + log pi(theta).

    Raises:
        SingularMatrixError: K + eta*I could not be factorized.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    v = np.asarray(v, dtype=float)
    if X.shape[0] < 2 or v.shape != (X.shape[0],):
        raise InputError(f"Need n >= 2 design rows matching v; got X {X.shape}, v {v.shape}.")
    value, _, _, _, _ = _evaluate(theta.theta, v, X, resolve_prior(prior, X), eta)
    return float(value)


def log_posterior_grad(theta: CorrParams, v: np.ndarray, X: np.ndarray, prior: PriorSpec, eta: float) -> np.ndarray:
    """Gradient of log_posterior_theta with respect to log(theta)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _, grad, _, _, _ = _evaluate(theta.theta, np.asarray(v, dtype=float), X, resolve_prior(prior, X), eta,
                                 want_grad=True)
    return grad


def map_theta(v: np.ndarray, X: np.ndarray, prior: PriorSpec, eta: float,
              starts: Optional[Sequence[CorrParams]] = None) -> CoefGpFit:
    """
    Multistart L-BFGS-B ascent of the log posterior over log(theta).

    Args:
        v: Coefficient vector (a column of V*).
        X: n x q design the coefficients were observed on.
        prior: Prior specification; an unset Gamma scale is derived from X.
        eta: Nugget added to the correlation diagonal.
        starts: Starting points; defaults to the prior mode and one decade either side.

    Returns:
        The best fit found, which is never worse than any of the starts.

    Raises:
        FitError: every start failed to factorize.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    v = np.asarray(v, dtype=float)
    n, q = X.shape
    if n < 2 or v.shape != (n,):
        raise InputError(f"Need n >= 2 design rows matching v; got X {X.shape}, v {v.shape}.")
    prior = resolve_prior(prior, X)
    if starts is None:
        starts = default_starts(prior, q)
    if not starts:
        raise InputError("map_theta needs at least one start.")

    centre = np.log(default_starts(prior, q)[0].theta)
    bounds = list(zip(centre - _LOG_THETA_SPAN, centre + _LOG_THETA_SPAN))

    def objective(log_theta):
        try:
            value, grad, _, _, _ = _evaluate(np.exp(log_theta), v, X, prior, eta, want_grad=True)
        except SingularMatrixError:
            return _PENALTY, np.zeros_like(log_theta)
        return -value, -grad

    best_value, best_theta = -np.inf, None
    for start in starts:
        if start.q != q:
            raise InputError(f"Start has {start.q} components, design has {q} columns.")
        candidates = [start.theta]
        try:
            start_value, _, _, _, _ = _evaluate(start.theta, v, X, prior, eta)
        except SingularMatrixError as e:
            logger.debug("Skipping start {}: {}", start.theta, e)
            continue
        u0 = np.clip(np.log(start.theta), centre - _LOG_THETA_SPAN, centre + _LOG_THETA_SPAN)
        result = scipy.optimize.minimize(objective, u0, jac=True, method="L-BFGS-B", bounds=bounds)
        if np.all(np.isfinite(result.x)) and result.fun < _PENALTY:
            candidates.append(np.exp(result.x))
        for theta in candidates:
            value = start_value if theta is start.theta else -objective(np.log(theta))[0]
            if value > best_value:
                best_value, best_theta = value, theta

    if best_theta is None:
        raise FitError("All optimizer starts failed to factorize the correlation matrix.")

    value, _, factor, w, psi = _evaluate(best_theta, v, X, prior, eta)
    return CoefGpFit(
        theta_hat=CorrParams(best_theta),
        factor=factor,
        psi=psi,
        kinv_v=w,
        v=v,
        prior=prior,
        n_points=n,
        eta=eta,
        log_post=float(value),
    )


def predict_coef(x0: np.ndarray, fit: CoefGpFit, X: np.ndarray) -> CoefPrediction:
    """Location, scale and degrees of freedom of the t-predictive of c_i(x0)."""
    x0 = np.asarray(x0, dtype=float)
    k = corr_matrix(x0[None, :], X, fit.theta_hat)[0]
    mean = float(k @ fit.kinv_v)
    quad = float(k @ fit.factor.solve(k))
    nu = fit.prior.alpha_i + fit.n_points
    scale2 = (fit.prior.beta_i + fit.psi) * (1.0 + fit.eta - quad) / nu
    return CoefPrediction(mean=mean, scale2=max(scale2, 0.0), dof=nu)
