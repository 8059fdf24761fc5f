# In DynamicEmulation/simulators.py
"""
Built-in dynamic test simulators, random Latin hypercube designs, and CSV
ingestion of externally computed design/response datasets.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from .exceptions import ConfigError, DatasetError, InputError


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant time grid of `length` points from `start` to `end`."""
    start: float
    end: float
    length: int

    def __post_init__(self):
        if not self.start < self.end:
            raise InputError(f"Time grid needs start < end, got [{self.start}, {self.end}].")
        if self.length < 2:
            raise InputError(f"Time grid needs at least two points, got {self.length}.")

    def points(self) -> np.ndarray:
        return np.linspace(self.start, self.end, self.length)


@dataclass(frozen=True)
class InputDomain:
    """Closed box [lo_j, hi_j] per input dimension."""
    bounds: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds or any(not lo < hi for lo, hi in bounds):
            raise InputError(f"Every input interval needs lo < hi, got {bounds}.")
        object.__setattr__(self, "bounds", bounds)

    @property
    def q(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


FORRESTER_DOMAIN = InputDomain(((4.0, 10.0), (4.0, 20.0), (1.0, 7.0)))
FORRESTER_GRID = TimeGrid(1.0, 2.0, 200)
ENVIRON_DOMAIN = InputDomain(((7.0, 13.0), (0.02, 0.12), (0.01, 3.0), (30.01, 30.295), (0.0, 3.0)))
ENVIRON_GRID = TimeGrid(0.3, 60.0, 200)


def _check_input(name: str, x: np.ndarray, domain: InputDomain) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.q,):
        raise InputError(f"{name} takes an input of length {domain.q}, got shape {x.shape}.")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} input contains non-finite entries: {x}.")
    if not domain.contains(x):
        logger.warning("{} input {} lies outside its usual domain; evaluating anyway.", name, x)
    return x


def forrester(x: np.ndarray, grid: TimeGrid = FORRESTER_GRID) -> np.ndarray:
    """(x1 t - 2)^2 sin(x2 t - x3) on the grid."""
    x = _check_input("forrester", x, FORRESTER_DOMAIN)
    t = grid.points()
    return (x[0] * t - 2.0) ** 2 * np.sin(x[1] * t - x[2])


def environ(x: np.ndarray, grid: TimeGrid = ENVIRON_GRID) -> np.ndarray:
    """
    Concentration of a pollutant at distance s from two spills of mass M, the
    second at location L and time tau, in a channel with diffusion rate D.

    Args:
        x: (M, D, L, tau, s).
        grid: Time grid; every point must be positive.
    """
    x = _check_input("environ", x, ENVIRON_DOMAIN)
    M, D, L, tau, s = x
    t = grid.points()
    if np.any(t <= 0):
        raise InputError("environ is undefined for t <= 0.")

    out = M / np.sqrt(D * t) * np.exp(-s ** 2 / (4.0 * D * t))
    late = t > tau + 1e-12
    dt = t[late] - tau
    out[late] += M / np.sqrt(D * dt) * np.exp(-(s - L) ** 2 / (4.0 * D * dt))
    return out


SIMULATORS: Dict[str, Tuple[Callable[[np.ndarray, TimeGrid], np.ndarray], InputDomain, TimeGrid]] = {
    "forrester": (forrester, FORRESTER_DOMAIN, FORRESTER_GRID),
    "environ": (environ, ENVIRON_DOMAIN, ENVIRON_GRID),
}


def get_simulator(name: str):
    try:
        return SIMULATORS[name.lower()]
    except KeyError:
        raise ConfigError(f"Unknown simulator '{name}'. Available: {', '.join(SIMULATORS)}.") from None


def lhd(N: int, domain: InputDomain, seed: int) -> np.ndarray:
    """
    Random Latin hypercube design: every column visits each of the N strata once
    (random permutation) at a uniform position inside the stratum.

    Returns:
        N x q design in the domain; bitwise reproducible for a given seed.
    """
    if N < 1:
        raise InputError(f"A design needs at least one point, got N={N}.")
    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(N) for _ in range(domain.q)])
    unit = (strata + rng.random((N, domain.q))) / N
    return domain.lower + unit * (domain.upper - domain.lower)


def evaluate_design(name: str, X: np.ndarray, grid: TimeGrid = None) -> np.ndarray:
    """L x N responses of a built-in simulator, column j at design row j."""
    func, _, default_grid = get_simulator(name)
    grid = grid or default_grid
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.empty((grid.length, 0))
    return np.column_stack([func(x, grid) for x in X])


def read_numeric_csv(path: Path, label: str, allow_nan: bool = False) -> np.ndarray:
    """
    Reads a headed numeric CSV. With allow_nan, cells spelled "nan" are kept as NaN;
    empty cells and infinities are rejected either way.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"{label} file {path} is empty.", path=str(path)) from e
    except pd.errors.ParserError as e:
        raise DatasetError(f"Could not parse {label} file {path}: {e}", path=str(path)) from e

    if frame.shape[0] == 0:
        raise DatasetError(f"{label} file {path} has a header but no data rows.", path=str(path))

    values = np.empty(frame.shape)
    for j, column in enumerate(frame.columns):
        raw = frame[column]
        numeric = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(numeric)
        if allow_nan:
            bad &= raw.str.strip().str.lower().to_numpy() != "nan"
        if bad.any():
            row = int(np.argmax(bad))
            cell = raw.iloc[row]
            line = row + 2  # header is line 1
            if pd.isna(cell) or cell == "":
                message = f"{label} file {path} line {line} is ragged: missing value in column '{column}'."
            else:
                message = f"{label} file {path} line {line}, column '{column}': '{cell}' is not a finite number."
            raise DatasetError(message, path=str(path), line=line, column=str(column))
        values[:, j] = numeric
    return values


def load_dataset(design_path, response_path) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reads an N x q design CSV and an L x N response CSV, both with a header row.

    Raises:
        DatasetError: a cell is missing, non-numeric or non-finite, or the design
            row count does not match the response column count.
    """
    design_path, response_path = Path(design_path), Path(response_path)
    X = read_numeric_csv(design_path, "Design")
    Y = read_numeric_csv(response_path, "Response")
    if X.shape[0] != Y.shape[1]:
        raise DatasetError(
            f"Design has {X.shape[0]} rows but the response has {Y.shape[1]} columns.", path=str(response_path)
        )
    logger.info("Loaded dataset: N={}, q={}, L={}", X.shape[0], X.shape[1], Y.shape[0])
    return X, Y


def save_dataset(X: np.ndarray, Y: np.ndarray, design_path, response_path):
    """Writes the layout load_dataset reads back."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != X.shape[0]:
        raise InputError(f"Response has {Y.shape[-1]} columns but the design has {X.shape[0]} rows.")
    design_path, response_path = Path(design_path), Path(response_path)
    design_path.parent.mkdir(parents=True, exist_ok=True)
    response_path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(X, columns=[f"x{j + 1}" for j in range(X.shape[1])]).to_csv(
        design_path, index=False, float_format="%.17g")
    pd.DataFrame(Y, columns=[f"run{j + 1}" for j in range(Y.shape[1])]).to_csv(
        response_path, index=False, float_format="%.17g")
