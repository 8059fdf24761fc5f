# In DynamicEmulation/report.py
"""
Serialization of run reports (JSON) and of prediction matrices (CSV).
"""
import json
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from .driver import RunReport
from .exceptions import InputError
from .simulators import read_numeric_csv


def _spread(values: List[float]) -> Dict[str, float]:
    finite = np.array([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if finite.size == 0:
        return {"mean": None, "std": None, "min": None, "max": None}
    return {
        "mean": float(finite.mean()),
        "std": float(finite.std(ddof=1)) if finite.size > 1 else 0.0,
        "min": float(finite.min()),
        "max": float(finite.max()),
    }


def summarize(reports: Sequence[RunReport]) -> dict:
    """Mean and spread of the replication-level scores."""
    p_counts: Dict[str, int] = {}
    for report in reports:
        for key, count in report.p_histogram.items():
            p_counts[key] = p_counts.get(key, 0) + count
    return {
        "replications": len(reports),
        "mean_nmspe": _spread([r.score.mean_nmspe for r in reports]),
        "log_mean_nmspe": _spread([r.score.log_mean_nmspe for r in reports]),
        "mean_score": _spread([r.score.mean_score for r in reports]),
        "p_histogram": dict(sorted(p_counts.items())),
        "failed_points": sum(len(r.failed) for r in reports),
    }


def write_reports(reports: Sequence[RunReport], path: Union[str, Path], include_timings: bool = True,
                  include_predictions: bool = False) -> Path:
    """Writes {"runs": [...], "summary": {...}} as JSON and returns the path written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "runs": [r.to_dict(include_timings, include_predictions) for r in reports],
        "summary": summarize(reports),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
    return path


def dump_matrix(matrix: np.ndarray, path: Union[str, Path], prefix: str = "point") -> Path:
    """Writes an L x M matrix as CSV with one header column per test point."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise InputError(f"Expected a 2-D matrix, got shape {matrix.shape}.")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"{prefix}{j + 1}" for j in range(matrix.shape[1])]
    pd.DataFrame(matrix, columns=columns).to_csv(path, index=False, float_format="%.17g", na_rep="nan")
    return path


def read_matrix(path: Union[str, Path], allow_nan: bool = False) -> np.ndarray:
    """
    Reads a matrix written by dump_matrix (or a response CSV). Prediction dumps
    carry NaN columns for failed points, so pass allow_nan=True for those.
    """
    return read_numeric_csv(Path(path), "Matrix", allow_nan=allow_nan)
