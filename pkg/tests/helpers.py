# In tests/helpers.py
import numpy as np

from DynamicEmulation.coefgp import corr_matrix
from DynamicEmulation.neighborhood import LocalState

def smooth_response(X, L=20, seed=0):
    """A smooth time-series test function of 2-D inputs with random amplitudes."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, L)
    a = rng.uniform(0.5, 1.5, size=3)
    X = np.atleast_2d(X)
    return (a[0] * np.sin(2.0 * np.pi * np.outer(t, X[:, 0]))
            + a[1] * np.outer(np.cos(3.0 * t), X[:, 1])
            + a[2] * np.outer(t ** 2, X[:, 0] * X[:, 1]))

def make_state(seed, k=10, extra=6, L=20, x0=None):
    """A fitted LocalState on k random points in the unit square plus `extra` unselected candidates."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(k + extra, 2))
    Y = smooth_response(X, L, seed)
    x0 = rng.uniform(size=2) if x0 is None else np.asarray(x0, dtype=float)
    state = LocalState(x0=x0, design=X, response=Y, target_size=k + 1, selected=list(range(k)))
    state.refit()
    return state

def direct_j(state, x0, candidate):
    """J at x0 for one candidate, by factorizing the augmented correlation matrices from scratch."""
    model = state.local_model
    k = model.design.shape[0]
    X_aug = np.vstack([model.design, state.design[candidate]])
    total = model.sigma2_hat * model.basis.B.shape[0]
    for i, fit in enumerate(model.coef_fits):
        K_aug = corr_matrix(X_aug, X_aug, fit.theta_hat) + fit.eta * np.eye(k + 1)
        k_aug = corr_matrix(np.asarray(x0)[None, :], X_aug, fit.theta_hat)[0]
        rho = 1.0 + fit.eta - k_aug @ np.linalg.solve(K_aug, k_aug)
        nu = fit.prior.alpha_i + k
        total += model.basis.d[i] ** 2 * rho * (fit.prior.beta_i + nu / (nu - 1.0) * fit.psi) / nu
    return total


def criterion_scale(state):
    """sigma2_hat * L plus every basis term at rho = 1: the size J is measured against."""
    model = state.local_model
    k = model.design.shape[0]
    total = model.sigma2_hat * model.basis.B.shape[0]
    for i, fit in enumerate(model.coef_fits):
        nu = fit.prior.alpha_i + k
        total += model.basis.d[i] ** 2 * (fit.prior.beta_i + nu / (nu - 1.0) * fit.psi) / nu
    return total
