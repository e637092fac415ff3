"""
Accuracy and calibration metrics over held-out predictions.
"""
from typing import Dict, List

import numpy as np
import pandas as pd

from ..core.models import z_score
from ..exceptions import ShapeError, ValidationError
from ..nn.objectives import HALF_LOG_2PI, VARIANCE_FLOOR


COVERAGE_LEVELS = (0.6827, 0.95)
REPORT_COLUMNS = ["case_id", "response", "method", "mean", "std", "ci68_lo", "ci68_hi",
                  "ci95_lo", "ci95_hi", "reference"]


def _arrays(*values):
    arrays = [np.asarray(v, dtype=float).reshape(-1) for v in values]
    if len({a.shape for a in arrays}) != 1:
        raise ShapeError("Metric inputs must have the same length")
    if arrays[0].size == 0:
        raise ValidationError("Metrics need at least one prediction", field="predictions")
    return arrays


def rmse(means, refs) -> float:
    """Root mean squared error of the predictive means."""
    means, refs = _arrays(means, refs)
    return float(np.sqrt(np.mean(np.square(means - refs))))


def mean_std(stds) -> float:
    """Average predictive standard deviation."""
    (stds,) = _arrays(stds)
    return float(np.mean(stds))


def coverage(means, stds, refs, level: float) -> float:
    """Fraction of references inside mean +/- z(level) * std (bounds included)."""
    means, stds, refs = _arrays(means, stds, refs)
    z = z_score(level)
    return float(np.mean(np.abs(refs - means) <= z * stds))


def mean_gaussian_nll(means, variances, refs) -> float:
    """Average Gaussian NLL of the references; variances are floored at the head floor."""
    means, variances, refs = _arrays(means, variances, refs)
    variances = np.maximum(variances, VARIANCE_FLOOR)
    residual = refs - means
    return float(np.mean(0.5 * np.log(variances) + residual * residual / (2.0 * variances) + HALF_LOG_2PI))


def summarize(rows: pd.DataFrame) -> List[Dict]:
    """
    Summary per (method, response) of a report table.

    Args:
        rows: Table with REPORT_COLUMNS

    Returns:
        One dict per (method, response), in sorted order, holding the case count,
        rmse, mean_std, mean_nll and the 68.27% / 95% coverage
    """
    summary = []
    for (method, response), group in rows.groupby(["method", "response"], sort=True):
        means, stds, refs = group["mean"], group["std"], group["reference"]
        summary.append({
            "method": method,
            "response": response,
            "cases": int(group.shape[0]),
            "rmse": rmse(means, refs),
            "mean_std": mean_std(stds),
            "mean_nll": mean_gaussian_nll(means, np.square(stds), refs),
            "coverage68": coverage(means, stds, refs, 0.6827),
            "coverage95": coverage(means, stds, refs, 0.95),
        })
    return summary
