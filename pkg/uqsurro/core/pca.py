"""
Principal component analysis of curve-valued responses.

Data matrices follow the column-per-sample convention: A is p x N with one
curve per column. Scores of a curve a are P* (a - u); curves are rebuilt as
P*^T b + u.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from ..exceptions import (
    DegenerateDataError,
    DomainError,
    InvalidHyperparameterError,
    ShapeError,
)
from ..logger import log_audit
from .models import CurveBand


SCHEMA_VERSION = 1
PROPAGATION_MODES = ("mc", "closed")


@dataclass(frozen=True)
class PcaModel:
    """
    Fitted PCA: row means, retained components (p* x p, orthonormal rows)
    and the variance of every principal component.
    """
    row_mean: np.ndarray
    components: np.ndarray
    pc_variances: np.ndarray
    threshold: float
    explained_fraction: float

    @property
    def p(self) -> int:
        return int(self.row_mean.shape[0])

    @property
    def p_star(self) -> int:
        return int(self.components.shape[0])

    @property
    def fractions(self) -> np.ndarray:
        """Explained-variance fraction of every PC."""
        return self.pc_variances / self.pc_variances.sum()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "u": self.row_mean,
            "components": self.components,
            "pc_variances": self.pc_variances,
            "explained_fraction": float(self.explained_fraction),
            "threshold": float(self.threshold),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'PcaModel':
        u = np.asarray(data["u"], dtype=float)
        components = np.asarray(data["components"], dtype=float).reshape(-1, u.shape[0])
        return cls(
            row_mean=u,
            components=components,
            pc_variances=np.asarray(data["pc_variances"], dtype=float),
            threshold=float(data["threshold"]),
            explained_fraction=float(data["explained_fraction"]),
        )


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude entry is positive."""
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(components.shape[0]), pivots])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def retained_components(cumulative: np.ndarray, threshold: float, rank: int) -> int:
    """
    Fewest leading components whose cumulative explained fraction reaches threshold.

    Rounding can leave the last cumulative fraction just below a threshold close
    to 1; every one of the rank components is kept then.
    """
    rank = int(rank)
    if threshold >= 1.0:
        return rank
    return int(min(np.searchsorted(cumulative[:rank], threshold) + 1, rank))


def fit_pca(A: np.ndarray, threshold: float = 0.99) -> PcaModel:
    """
    Fit PCA by singular value decomposition of the row-centred data.

    Args:
        A: p x N matrix, one sample per column
        threshold: Explained-variance fraction to reach, in (0, 1]; 1.0 keeps
            all min(p, N) components

    Returns:
        PcaModel with the fewest components reaching the threshold

    Raises:
        DegenerateDataError: If every row is constant or N < 2
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ShapeError(f"PCA expects a p x N matrix, got shape {A.shape}")
    if not 0.0 < threshold <= 1.0:
        raise InvalidHyperparameterError(f"threshold must lie in (0, 1], got {threshold}", name="threshold")
    p, n = A.shape
    if n < 2:
        raise DegenerateDataError(f"PCA needs at least 2 samples, got {n}")
    if not np.all(np.isfinite(A)):
        raise DomainError("PCA input must be finite")
    if np.all(np.ptp(A, axis=1) == 0.0):
        raise DegenerateDataError("Every response is constant; there is no variance to decompose")

    u = A.mean(axis=1)
    U, s, _ = np.linalg.svd(A - u[:, None], full_matrices=False)
    variances = np.zeros(p)
    variances[:s.shape[0]] = s * s / (n - 1)
    total = variances.sum()
    if not total > 0.0:
        raise DegenerateDataError("Centred data has zero variance")

    cumulative = np.cumsum(variances) / total
    p_star = retained_components(cumulative, threshold, s.shape[0])
    components = _fix_signs(U[:, :p_star].T.copy())
    model = PcaModel(
        row_mean=u,
        components=components,
        pc_variances=variances,
        threshold=float(threshold),
        explained_fraction=float(min(cumulative[p_star - 1], 1.0)),
    )
    log_audit("FIT_PCA", {"p": p, "samples": n, "p_star": p_star,
                          "explained_fraction": model.explained_fraction})
    return model


def _check_length(values: np.ndarray, expected: int, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != expected:
        raise ShapeError(f"{what} must have length {expected}, got {values.shape[-1]}")
    return values


def project(model: PcaModel, a: np.ndarray) -> np.ndarray:
    """PC scores P* (a - u) of one p-vector."""
    a = _check_length(a, model.p, "Curve")
    return model.components @ (a - model.row_mean)


def project_many(model: PcaModel, curves: np.ndarray) -> np.ndarray:
    """Scores of an (n, p) matrix of curves, one row each; returns (n, p*)."""
    curves = _check_length(np.atleast_2d(curves), model.p, "Curve")
    return (curves - model.row_mean) @ model.components.T


def reconstruct(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    """Curve P*^T b + u from a p*-vector of scores."""
    scores = _check_length(scores, model.p_star, "Score vector")
    return model.components.T @ scores + model.row_mean


def reconstruct_many(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    """Curves from an (n, p*) score matrix; returns (n, p)."""
    scores = _check_length(np.atleast_2d(scores), model.p_star, "Score vector")
    return scores @ model.components + model.row_mean


def propagate_uncertainty(model: PcaModel, means: np.ndarray, variances: np.ndarray,
                          n_samples: int = 500, rng: Optional[np.random.Generator] = None,
                          mode: str = "mc") -> CurveBand:
    """
    Push independent Gaussian score distributions back to curve space.

    Args:
        model: Fitted PCA
        means: p* score means
        variances: p* score variances
        n_samples: Monte-Carlo score draws ("mc" mode)
        rng: Random stream ("mc" mode)
        mode: "mc" samples and reconstructs curves; "closed" uses the linear map

    Returns:
        CurveBand with per-time mean and std (and sample curves in "mc" mode)

    Raises:
        DomainError: On a negative variance
    """
    means = _check_length(means, model.p_star, "Score means")
    variances = _check_length(variances, model.p_star, "Score variances")
    if np.any(variances < 0):
        raise DomainError("Score variances must be non-negative")
    if mode not in PROPAGATION_MODES:
        raise InvalidHyperparameterError(f"Unknown propagation mode '{mode}'", name="mode")

    if mode == "closed" or np.all(variances == 0.0):
        std = np.sqrt(np.square(model.components).T @ variances)
        return CurveBand(mean=reconstruct(model, means), std=std)

    if int(n_samples) < 2:
        raise InvalidHyperparameterError("n_samples must be at least 2", name="n_samples")
    if rng is None:
        raise InvalidHyperparameterError("Monte-Carlo propagation needs a random stream", name="rng")
    draws = means + np.sqrt(variances) * rng.standard_normal((int(n_samples), model.p_star))
    curves = reconstruct_many(model, draws)
    return CurveBand(mean=curves.mean(axis=0), std=curves.std(axis=0, ddof=1), samples=curves)


def variance_table(model: PcaModel) -> pd.DataFrame:
    """Variance decay over all PCs: pc_index, variance, fraction, cumulative_fraction."""
    fractions = model.fractions
    return pd.DataFrame({
        "pc_index": np.arange(1, model.pc_variances.shape[0] + 1),
        "variance": model.pc_variances,
        "fraction": fractions,
        "cumulative_fraction": np.cumsum(fractions),
    })
