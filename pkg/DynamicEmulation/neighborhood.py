# In DynamicEmulation/neighborhood.py
"""
Neighborhoods for local emulators: Euclidean nearest neighbors, and the greedy
construction that adds, one at a time, the training point minimizing the expected
squared L2 prediction error at the target input.
"""
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.spatial.distance import cdist

from .coefgp import PriorSpec, corr_matrix
from .exceptions import DegenerateUpdateError, EmulatorError, InputError, NeighborhoodError, StateError
from .linalg import PHI_FLOOR, partitioned_inverse_update
from .svdmodel import DEFAULT_ETA, DEFAULT_GAMMA, SvdGpModel, fit_svdgp


@dataclass(frozen=True)
class SearchScheme:
    """
    Candidate set for one greedy step: every unselected point ("exhaustive"), or
    the m_lim unselected points nearest x0 plus r_lim random others ("limit").
    """
    kind: str = "limit"
    m_lim: Optional[int] = None
    r_lim: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("exhaustive", "limit"):
            raise InputError(f"Unknown search scheme '{self.kind}'.")
        for name in ("m_lim", "r_lim"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise InputError(f"{name} must be nonnegative.")
        if self.kind == "limit" and self.m_lim == 0 and self.r_lim == 0:
            raise InputError("A limit search with m_lim = r_lim = 0 has no candidates.")

    def resolve(self, N: int, k: int, n: int) -> Tuple[int, int]:
        """(m_lim, r_lim) for a design of N points with k selected and target size n."""
        remaining = N - k
        if self.kind == "exhaustive":
            return remaining, 0
        m = min(remaining, self.m_lim if self.m_lim is not None else 10 * n)
        r = min(remaining - m, self.r_lim if self.r_lim is not None else n)
        return m, r


EXHAUSTIVE = SearchScheme("exhaustive")


@dataclass
class JEvaluation:
    candidate_index: int
    j_value: float
    per_basis_terms: np.ndarray


@dataclass
class LocalState:
    """The growing neighborhood of one prediction point and its current local fit."""
    x0: np.ndarray
    design: np.ndarray
    response: np.ndarray
    target_size: int
    selected: List[int] = field(default_factory=list)
    local_model: Optional[SvdGpModel] = None
    # Per basis: (k(x0), K^-1 k(x0), k(x0)^T K^-1 k(x0)) on the local design.
    x0_cache: List[Tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.selected)

    def local_indices(self) -> np.ndarray:
        """Rows of the global design the local model is fitted on (ascending)."""
        return np.sort(np.asarray(self.selected, dtype=int))

    def refit(self, gamma: float = DEFAULT_GAMMA, prior: Optional[PriorSpec] = None, eta: float = DEFAULT_ETA,
              timings: Optional[Dict[str, float]] = None):
        """Refits the SVD-GP on the current neighborhood, warm-starting from the previous thetas."""
        idx = self.local_indices()
        starts = None
        if self.local_model is not None:
            starts = [[fit.theta_hat] for fit in self.local_model.coef_fits]
        previous_p = self.local_model.p if self.local_model is not None else None

        self.local_model = fit_svdgp(self.design[idx], self.response[:, idx], gamma, prior, eta,
                                     starts=starts, timings=timings)
        if previous_p is not None and previous_p != self.local_model.p:
            logger.info("Number of bases changed from {} to {} at k={}", previous_p, self.local_model.p, self.k)

        self.x0_cache = []
        for fit in self.local_model.coef_fits:
            kx0 = corr_matrix(self.x0[None, :], self.local_model.design, fit.theta_hat)[0]
            kinv_kx0 = fit.factor.solve(kx0)
            self.x0_cache.append((kx0, kinv_kx0, float(kx0 @ kinv_kx0)))


def knn(X: np.ndarray, x0: np.ndarray, m: int) -> List[int]:
    """Indices of the m rows of X nearest x0 in Euclidean distance, nearest first, ties to the lower index."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x0 = np.asarray(x0, dtype=float)
    if not 1 <= m <= X.shape[0]:
        raise InputError(f"Cannot pick {m} neighbors from {X.shape[0]} design points.")
    if x0.shape != (X.shape[1],):
        raise InputError(f"Expected an input of length {X.shape[1]}, got shape {x0.shape}.")
    distances = cdist(x0[None, :], X, "sqeuclidean")[0]
    return [int(i) for i in np.argsort(distances, kind="stable")[:m]]


def _variance_factor(fit, k: int) -> float:
    nu = fit.prior.alpha_i + k
    return (fit.prior.beta_i + nu / (nu - 1.0) * fit.psi) / nu


def _check_state(state: LocalState):
    if state.local_model is None:
        raise StateError("Local state has no fitted model; call refit() first.")
    k = state.local_model.design.shape[0]
    if k < 2 or state.local_model.prior.alpha_i + k <= 1:
        raise StateError(f"The criterion needs alpha_i + k > 1 and k >= 2 (k={k}).")


def _coincident(Xc: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Rows of Xc that duplicate a row of the local design exactly."""
    return cdist(Xc, design, "sqeuclidean").min(axis=1) <= 0.0


def j_criterion(x0: np.ndarray, candidate: int, state: LocalState) -> JEvaluation:
    """
    Expected squared L2 error at x0 after adding one candidate to the neighborhood:
    sigma2_hat * L + sum_i d_i^2 sigma_i^2(x0 | x), each term via a partitioned inverse
    update of the stored factor.

    A candidate that coincides numerically with the neighborhood gets j_value = inf.
    """
    _check_state(state)
    if candidate in state.selected:
        raise StateError(f"Candidate {candidate} is already in the neighborhood.")
    x0 = np.asarray(x0, dtype=float)
    model = state.local_model
    k = model.design.shape[0]
    xc = state.design[candidate][None, :]
    use_cache = np.array_equal(x0, state.x0) and len(state.x0_cache) == model.p
    if _coincident(xc, model.design)[0]:
        logger.debug("Candidate {} duplicates a neighborhood point; skipping.", candidate)
        return JEvaluation(candidate, np.inf, np.full(model.p, np.inf))

    terms = np.empty(model.p)
    for i, fit in enumerate(model.coef_fits):
        k_vec = corr_matrix(model.design, xc, fit.theta_hat)[:, 0]
        try:
            update = partitioned_inverse_update(fit.factor, k_vec, 1.0 + fit.eta)
        except DegenerateUpdateError:
            logger.debug("Candidate {} is degenerate for basis {}; skipping.", candidate, i)
            return JEvaluation(candidate, np.inf, np.full(model.p, np.inf))
        if use_cache:
            kx0, kinv_kx0, _ = state.x0_cache[i]
        else:
            kx0 = corr_matrix(x0[None, :], model.design, fit.theta_hat)[0]
            kinv_kx0 = fit.factor.solve(kx0)
        b = float(corr_matrix(x0[None, :], xc, fit.theta_hat)[0, 0])
        rho = max(1.0 + fit.eta - update.quad_form(kx0, b, kinv_kx0), 0.0)
        terms[i] = model.basis.d[i] ** 2 * rho * _variance_factor(fit, k)

    L = model.basis.B.shape[0]
    return JEvaluation(candidate, float(model.sigma2_hat * L + terms.sum()), terms)


def j_criterion_batch(state: LocalState, candidates: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    j_criterion for many candidates at x0 = state.x0 at once.

    Returns:
        (j_values of shape (m,), per-basis terms of shape (m, p)).
    """
    _check_state(state)
    model = state.local_model
    k = model.design.shape[0]
    cands = np.asarray(candidates, dtype=int)
    Xc = state.design[cands]
    terms = np.empty((cands.shape[0], model.p))
    degenerate = _coincident(Xc, model.design)

    for i, fit in enumerate(model.coef_fits):
        kx0, _, quad0 = state.x0_cache[i]
        Kc = corr_matrix(model.design, Xc, fit.theta_hat)
        U = fit.factor.solve(Kc)
        diag_new = 1.0 + fit.eta
        phi = diag_new - np.sum(Kc * U, axis=0)
        bad = ~(phi > PHI_FLOOR * diag_new)
        degenerate |= bad
        phi = np.where(bad, 1.0, phi)
        b = corr_matrix(state.x0[None, :], Xc, fit.theta_hat)[0]
        quad = quad0 + (U.T @ kx0 - b) ** 2 / phi
        rho = np.clip(diag_new - quad, 0.0, None)
        terms[:, i] = model.basis.d[i] ** 2 * rho * _variance_factor(fit, k)

    L = model.basis.B.shape[0]
    j_values = model.sigma2_hat * L + terms.sum(axis=1)
    j_values[degenerate] = np.inf
    terms[degenerate] = np.inf
    if degenerate.any():
        logger.debug("Skipped {} degenerate candidates at k={}", int(degenerate.sum()), k)
    return j_values, terms


def candidate_set(state: LocalState, scheme: SearchScheme, rng: np.random.Generator) -> np.ndarray:
    """Unselected global indices the scheme evaluates, ascending."""
    N = state.design.shape[0]
    unselected = np.setdiff1d(np.arange(N), np.asarray(state.selected, dtype=int))
    m, r = scheme.resolve(N, state.k, state.target_size)
    if m + r >= unselected.shape[0]:
        return unselected

    distances = cdist(state.x0[None, :], state.design[unselected], "sqeuclidean")[0]
    order = np.argsort(distances, kind="stable")
    near = unselected[order[:m]]
    rest = unselected[order[m:]]
    extra = rng.choice(rest, size=r, replace=False) if r > 0 else np.empty(0, dtype=int)
    return np.sort(np.concatenate([near, extra]))


def select_next(x0: np.ndarray, state: LocalState, scheme: SearchScheme = EXHAUSTIVE,
                rng: Optional[np.random.Generator] = None) -> int:
    """Global index of the candidate with the smallest J, ties to the lower index."""
    x0 = np.asarray(x0, dtype=float)
    if not np.array_equal(x0, state.x0):
        raise StateError("select_next must be called with the state's own prediction point.")
    rng = rng if rng is not None else np.random.default_rng(0)
    cands = candidate_set(state, scheme, rng)
    if cands.shape[0] == 0:
        raise StateError("No unselected candidates remain.")

    j_values, _ = j_criterion_batch(state, cands)
    best = int(np.argmin(j_values))
    if not np.isfinite(j_values[best]):
        raise StateError("Every candidate is degenerate with respect to the neighborhood.")
    return int(cands[best])


def build_neighborhood(X: np.ndarray, Y: np.ndarray, x0: np.ndarray, n: int, n0: int,
                       gamma: float = DEFAULT_GAMMA, prior: Optional[PriorSpec] = None, eta: float = DEFAULT_ETA,
                       scheme: SearchScheme = EXHAUSTIVE, rng: Optional[np.random.Generator] = None,
                       timings: Optional[Dict[str, float]] = None) -> LocalState:
    """
    Greedy neighborhood of size n around x0: the n0 nearest neighbors, then n - n0
    points added one at a time by minimizing J, refitting the local SVD-GP before
    every step. n0 == n gives the plain nearest-neighbor fit.

    Raises:
        NeighborhoodError: a refit or selection failed; `iteration` is the current k.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    N = X.shape[0]
    if not 2 <= n0 <= n <= N:
        raise InputError(f"Need 2 <= n0 <= n <= N, got n0={n0}, n={n}, N={N}.")
    if Y.ndim != 2 or Y.shape[1] != N:
        raise InputError(f"Response has {Y.shape[-1]} columns but the design has {N} rows.")
    rng = rng if rng is not None else np.random.default_rng(0)
    timings = timings if timings is not None else {}

    tic = time.perf_counter()
    state = LocalState(x0=x0, design=X, response=Y, target_size=n, selected=knn(X, x0, n0))
    timings["search"] = timings.get("search", 0.0) + time.perf_counter() - tic

    for k in range(n0, n):
        try:
            state.refit(gamma, prior, eta, timings)
            tic = time.perf_counter()
            state.selected.append(select_next(x0, state, scheme, rng))
            timings["search"] = timings.get("search", 0.0) + time.perf_counter() - tic
        except EmulatorError as e:
            raise NeighborhoodError(f"Neighborhood construction failed at k={k}: {e}", iteration=k) from e

    try:
        state.refit(gamma, prior, eta, timings)
    except EmulatorError as e:
        raise NeighborhoodError(f"Final local fit failed at k={n}: {e}", iteration=n) from e
    return state
