# In DynamicEmulation/driver.py
"""
Runs the three emulators (full-data svdGP, nearest-neighbor knnsvdGP and the
greedy local lasvdGP) over a test set, one task per test point, and collects
scores, timings and diagnostics into RunReports.
"""
import math
import time
from concurrent import futures
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from loguru import logger

from .coefgp import PriorSpec
from .exceptions import ConfigError, EmulatorError, SizeGuardError
from .metrics import ScoreReport, mc_cv_splits, score_predictions
from .neighborhood import SearchScheme, build_neighborhood, knn
from .simulators import SIMULATORS, TimeGrid, evaluate_design, get_simulator, load_dataset, lhd
from .svdmodel import DEFAULT_ETA, DEFAULT_GAMMA, SvdGpModel, fit_svdgp, predict

# Full-data fits above this many training points need force=True.
SVDGP_SIZE_GUARD = 3000

METHODS = ("svdgp", "knnsvdgp", "lasvdgp")


@dataclass
class ExperimentConfig:
    method: str = "lasvdgp"
    simulator: Optional[str] = "forrester"
    n_train: int = 200
    n_test: int = 20
    length: Optional[int] = None
    design_path: Optional[str] = None
    response_path: Optional[str] = None
    n: int = 40
    n0: Optional[int] = None
    n0_rule: str = "half"
    gamma: float = DEFAULT_GAMMA
    eta: float = DEFAULT_ETA
    scheme: str = "limit"
    m_lim: Optional[int] = None
    r_lim: Optional[int] = None
    workers: Optional[int] = None
    repetitions: int = 1
    seed: int = 0
    test_ratio: Tuple[int, int] = (4, 1)
    alpha_i: float = 0.0
    beta_i: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    force: bool = False
    output: Optional[str] = None
    dump_predictions: bool = False
    theta_summary: bool = True

    @property
    def resolved_n0(self) -> int:
        if self.n0 is not None:
            return self.n0
        divisor = 4 if self.n0_rule == "quarter" else 2
        return max(2, math.ceil(self.n / divisor))

    @property
    def uses_files(self) -> bool:
        return self.design_path is not None or self.response_path is not None

    def prior(self) -> PriorSpec:
        return PriorSpec(alpha_i=self.alpha_i, beta_i=self.beta_i, alpha=self.alpha, beta=self.beta)

    def search_scheme(self) -> SearchScheme:
        return SearchScheme(self.scheme, self.m_lim, self.r_lim)

    def validate(self, N: Optional[int] = None):
        """Raises ConfigError on any inconsistent field; N is checked against n when known."""
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ConfigError(f"Unknown method '{self.method}'. Available: {', '.join(METHODS)}.")
        if self.uses_files:
            if self.design_path is None or self.response_path is None:
                raise ConfigError("File datasets need both DESIGN_PATH and RESPONSE_PATH.")
        elif self.simulator is None or self.simulator.lower() not in SIMULATORS:
            raise ConfigError(f"Unknown simulator '{self.simulator}'. Available: {', '.join(SIMULATORS)}.")
        elif self.n_train < 2 or self.n_test < 0:
            raise ConfigError(f"Need N_TRAIN >= 2 and N_TEST >= 0, got {self.n_train} and {self.n_test}.")
        if self.n0_rule not in ("half", "quarter"):
            raise ConfigError(f"N0_RULE must be 'half' or 'quarter', got '{self.n0_rule}'.")
        if self.scheme not in ("exhaustive", "limit"):
            raise ConfigError(f"SCHEME must be 'exhaustive' or 'limit', got '{self.scheme}'.")
        for name in ("m_lim", "r_lim"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"{name.upper()} must be nonnegative, got {value}.")
        if self.scheme == "limit" and self.m_lim == 0 and self.r_lim == 0:
            raise ConfigError("M_LIM and R_LIM are both 0, so the limit search has no candidates.")
        if not 0.0 < self.gamma < 1.0 or self.eta < 0:
            raise ConfigError(f"Need 0 < GAMMA < 1 and ETA >= 0, got {self.gamma} and {self.eta}.")
        if self.repetitions < 1:
            raise ConfigError("REPETITIONS must be at least 1.")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("WORKERS must be at least 1.")
        if self.length is not None and self.length < 2:
            raise ConfigError("LENGTH must be at least 2.")
        if min(self.test_ratio) <= 0:
            raise ConfigError(f"TEST_RATIO must be positive, got {self.test_ratio}.")
        if self.method != "svdgp":
            n0 = self.resolved_n0
            if not 2 <= n0 <= self.n:
                raise ConfigError(f"Need 2 <= n0 <= n, got n0={n0}, n={self.n}.")
            if N is not None and self.n > N:
                raise ConfigError(f"Neighborhood size n={self.n} exceeds the {N} training points.")


class Dataset(NamedTuple):
    X: np.ndarray
    Y: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray


@dataclass
class PointResult:
    mean: np.ndarray
    var: np.ndarray
    p: int
    thetas: List[np.ndarray]
    timings: Dict[str, float]


@dataclass
class RunReport:
    method: str
    replication: int
    config: dict
    means: np.ndarray
    variances: np.ndarray
    score: ScoreReport
    timings: Dict[str, float]
    p_histogram: Dict[str, int]
    theta_summary: Dict[str, dict] = field(default_factory=dict)
    failed: List[dict] = field(default_factory=list)

    @property
    def n_points(self) -> int:
        return self.means.shape[1]

    def to_dict(self, include_timings: bool = True, include_predictions: bool = False) -> dict:
        out = {
            "method": self.method,
            "replication": self.replication,
            "config": self.config,
            "n_points": self.n_points,
            "score": self.score.to_dict(),
            "p_histogram": dict(self.p_histogram),
            "theta_summary": self.theta_summary,
            "failed": list(self.failed),
        }
        if include_timings:
            out["timings"] = dict(self.timings)
        if include_predictions:
            # Failed points are NaN columns; JSON gets null.
            out["means"] = np.where(np.isfinite(self.means), self.means, None).tolist()
            out["variances"] = np.where(np.isfinite(self.variances), self.variances, None).tolist()
        return out


def _seed_int(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def prepare_data(config: ExperimentConfig, replication: int = 0) -> Dataset:
    """
    Training and test data for one replication: fresh train/test LHDs for a
    built-in simulator, or a Monte Carlo cross-validation split of a file dataset.
    """
    if config.uses_files:
        X_all, Y_all = load_dataset(config.design_path, config.response_path)
        train, test = mc_cv_splits(X_all.shape[0], config.test_ratio, config.repetitions, config.seed)[replication]
        return Dataset(X_all[train], Y_all[:, train], X_all[test], Y_all[:, test])

    _, domain, default_grid = get_simulator(config.simulator)
    grid = default_grid if config.length is None else TimeGrid(default_grid.start, default_grid.end, config.length)
    X = lhd(config.n_train, domain, _seed_int(config.seed, replication, 0))
    X_test = lhd(config.n_test, domain, _seed_int(config.seed, replication, 1)) if config.n_test else np.empty(
        (0, domain.q))
    name = config.simulator.lower()
    return Dataset(X, evaluate_design(name, X, grid), X_test, evaluate_design(name, X_test, grid))


def _add_timing(timings: Dict[str, float], phase: str, tic: float):
    timings[phase] = timings.get(phase, 0.0) + time.perf_counter() - tic


def _point_result(model: SvdGpModel, x0: np.ndarray, timings: Dict[str, float]) -> PointResult:
    tic = time.perf_counter()
    summary = predict(model, x0)
    _add_timing(timings, "predict", tic)
    return PointResult(summary.mean, summary.var, model.p, [f.theta_hat.theta for f in model.coef_fits], timings)


def _map_points(task: Callable[[int], PointResult], M: int, workers: int) -> List[object]:
    """
    Runs task over test points 0..M-1 and returns the results in index order. A
    point that fails yields its exception instead of a PointResult.
    """
    def guarded(j: int):
        try:
            return task(j)
        except (EmulatorError, np.linalg.LinAlgError) as e:
            logger.warning("Test point {} failed: {}", j, e)
            return e

    if workers <= 1 or M <= 1:
        return [guarded(j) for j in range(M)]
    with futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(guarded, range(M)))


def _theta_summary(results: List[PointResult], n_coefficients: int = 3) -> Dict[str, dict]:
    """
    Quartiles of log theta (theta being the inverse squared lengthscale) per input
    dimension, over the points whose model has that coefficient.
    """
    summary = {}
    for i in range(n_coefficients):
        logs = [np.log(r.thetas[i]) for r in results if len(r.thetas) > i]
        if not logs:
            continue
        quartiles = np.percentile(np.vstack(logs), [25, 50, 75], axis=0)
        summary[f"coefficient_{i + 1}"] = {
            "count": len(logs),
            "log_theta_q25": quartiles[0].tolist(),
            "log_theta_median": quartiles[1].tolist(),
            "log_theta_q75": quartiles[2].tolist(),
        }
    return summary


def _assemble(config: ExperimentConfig, replication: int, data: Dataset, outcomes: List[object],
              timings: Dict[str, float]) -> RunReport:
    L, M = data.Y_test.shape[0], data.X_test.shape[0]
    means = np.full((L, M), np.nan)
    variances = np.full((L, M), np.nan)
    histogram: Dict[str, int] = {}
    failed, succeeded = [], []

    for j, outcome in enumerate(outcomes):
        if isinstance(outcome, PointResult):
            means[:, j] = outcome.mean
            variances[:, j] = outcome.var
            histogram[str(outcome.p)] = histogram.get(str(outcome.p), 0) + 1
            for phase, seconds in outcome.timings.items():
                timings[phase] = timings.get(phase, 0.0) + seconds
            succeeded.append(outcome)
        else:
            failed.append({"index": j, "error": f"{type(outcome).__name__}: {outcome}"})
    if failed:
        histogram["failed"] = len(failed)

    score = score_predictions(data.Y_test, means, variances)
    report = RunReport(
        method=config.method,
        replication=replication,
        config={key: value for key, value in asdict(config).items() if key != "workers"},
        means=means,
        variances=variances,
        score=score,
        timings=timings,
        p_histogram=dict(sorted(histogram.items())),
        theta_summary=_theta_summary(succeeded) if config.theta_summary else {},
        failed=failed,
    )
    logger.info("{} replication {}: M={}, mean NMSPE={:.4g}, failed={}", config.method, replication, M,
                score.mean_nmspe, len(failed))
    return report


def run_svdgp(config: ExperimentConfig, data: Optional[Dataset] = None, replication: int = 0) -> RunReport:
    """One global SVD-GP fit on all training data, then prediction at every test point."""
    config.validate()
    data = data if data is not None else prepare_data(config, replication)
    N = data.X.shape[0]
    if N > SVDGP_SIZE_GUARD:
        if not config.force:
            raise SizeGuardError(
                f"svdGP factorizes N x N matrices; N={N} exceeds {SVDGP_SIZE_GUARD}. "
                "Use a local method or set FORCE=true."
            )
        logger.warning("Fitting svdGP on N={} points above the size guard.", N)

    timings: Dict[str, float] = {}
    model = fit_svdgp(data.X, data.Y, config.gamma, config.prior(), config.eta, timings=timings)
    outcomes = _map_points(lambda j: _point_result(model, data.X_test[j], {}), data.X_test.shape[0],
                           config.workers or 1)
    return _assemble(config, replication, data, outcomes, timings)


def run_knnsvdgp(config: ExperimentConfig, data: Optional[Dataset] = None, replication: int = 0) -> RunReport:
    """A local SVD-GP on the n nearest training points of every test point."""
    config.validate()
    data = data if data is not None else prepare_data(config, replication)
    config.validate(data.X.shape[0])

    def task(j: int) -> PointResult:
        timings: Dict[str, float] = {}
        x0 = data.X_test[j]
        tic = time.perf_counter()
        idx = np.sort(knn(data.X, x0, config.n))
        _add_timing(timings, "search", tic)
        model = fit_svdgp(data.X[idx], data.Y[:, idx], config.gamma, config.prior(), config.eta, timings=timings)
        return _point_result(model, x0, timings)

    outcomes = _map_points(task, data.X_test.shape[0], config.workers or 1)
    return _assemble(config, replication, data, outcomes, {})


def run_lasvdgp(config: ExperimentConfig, data: Optional[Dataset] = None, replication: int = 0) -> RunReport:
    """A local SVD-GP on a neighborhood grown greedily by the expected-error criterion."""
    config.validate()
    data = data if data is not None else prepare_data(config, replication)
    config.validate(data.X.shape[0])
    scheme = config.search_scheme()

    def task(j: int) -> PointResult:
        timings: Dict[str, float] = {}
        x0 = data.X_test[j]
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, replication, j]))
        state = build_neighborhood(data.X, data.Y, x0, config.n, config.resolved_n0, config.gamma,
                                   config.prior(), config.eta, scheme, rng, timings)
        return _point_result(state.local_model, x0, timings)

    outcomes = _map_points(task, data.X_test.shape[0], config.workers or 1)
    return _assemble(config, replication, data, outcomes, {})


PIPELINES: Dict[str, Callable[..., RunReport]] = {
    "svdgp": run_svdgp,
    "knnsvdgp": run_knnsvdgp,
    "lasvdgp": run_lasvdgp,
}


def run_experiment(config: ExperimentConfig) -> List[RunReport]:
    """Validates the config and runs its method once per replication."""
    config.validate()
    pipeline = PIPELINES.get(config.method)
    if pipeline is None:
        raise ConfigError(f"Method '{config.method}' not found.")

    reports = []
    for replication in range(config.repetitions):
        logger.info("Starting {} replication {}/{}", config.method, replication + 1, config.repetitions)
        tic = time.perf_counter()
        report = pipeline(config, prepare_data(config, replication), replication)
        report.timings["total"] = time.perf_counter() - tic
        reports.append(report)
    return reports
