"""
Monte Carlo dropout: predictive moments from repeated masked forward passes.
"""
from typing import Callable, Optional

import numpy as np

from ..core.models import PredictiveDistribution
from ..exceptions import InvalidHyperparameterError, StateError
from ..logger import get_logger
from ..nn.net import Mlp, check_p_drop, forward, sample_dropout_mask


DEFAULT_PASSES = 200
MAX_STORED_SAMPLES = 10_000
CHUNK_ROWS = 100


class RunningMoments:
    """
    Streaming mean and variance over row batches (Chan's pairwise update).
    """

    def __init__(self):
        self.count = 0
        self.mean = None
        self._m2 = None

    def update(self, batch: np.ndarray) -> None:
        """Fold an (n, q) batch of samples into the running moments."""
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        n = batch.shape[0]
        if n == 0:
            return
        batch_mean = batch.mean(axis=0)
        batch_m2 = np.square(batch - batch_mean).sum(axis=0)
        if self.count == 0:
            self.count, self.mean, self._m2 = n, batch_mean, batch_m2
            return
        total = self.count + n
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        self._m2 = self._m2 + batch_m2 + np.square(delta) * (self.count * n / total)
        self.count = total

    def variance(self, ddof: int = 1) -> np.ndarray:
        if self.count <= ddof:
            raise StateError(f"Variance needs more than {ddof} samples, have {self.count}")
        return self._m2 / (self.count - ddof)


def _resolve_dropout(mlp: Mlp, p_drop: Optional[float], scaling: Optional[str]):
    trained = mlp.metadata.get("dropout")
    flags = []
    if p_drop is None:
        if trained is None:
            raise StateError("Network was not trained with dropout; pass p_drop explicitly")
        p_drop = trained["p_drop"]
    elif trained is not None and abs(float(p_drop) - float(trained["p_drop"])) > 0.0:
        get_logger().warning("Prediction dropout ratio %s differs from the training ratio %s",
                             p_drop, trained["p_drop"])
        flags.append("p_drop_override")
    if scaling is None:
        scaling = trained["scaling"] if trained is not None else "inverted"
    return check_p_drop(p_drop), scaling, flags


def mcd_predict(mlp: Mlp, x: np.ndarray, T: int = DEFAULT_PASSES, p_drop: Optional[float] = None,
                rng: Optional[np.random.Generator] = None, scaling: Optional[str] = None,
                forward_fn: Callable = forward) -> PredictiveDistribution:
    """
    Predictive distribution from T dropout-masked forward passes.

    Args:
        mlp: Network trained with dropout
        x: Input vector (d,)
        T: Number of passes (at least 2)
        p_drop: Dropout ratio; defaults to the training ratio
        rng: Random stream for the masks
        scaling: Dropout scaling mode; defaults to the training mode
        forward_fn: Masked forward pass (mlp, rows, mask) -> outputs

    Returns:
        PredictiveDistribution with the sample mean and unbiased sample variance

    Raises:
        InvalidHyperparameterError: If T < 2
    """
    if int(T) < 2:
        raise InvalidHyperparameterError(f"T must be at least 2 for a sample variance, got {T}", name="T")
    if rng is None:
        raise InvalidHyperparameterError("A random stream is required", name="rng")
    p_drop, scaling, flags = _resolve_dropout(mlp, p_drop, scaling)
    x = np.asarray(x, dtype=float).reshape(-1)

    moments = RunningMoments()
    kept = []
    stored = 0
    remaining = int(T)
    while remaining > 0:
        rows = min(CHUNK_ROWS, remaining)
        mask = sample_dropout_mask(mlp, p_drop, rng, rows=rows, scaling=scaling)
        outputs = np.atleast_2d(forward_fn(mlp, np.tile(x, (rows, 1)), mask))
        moments.update(outputs)
        if stored < MAX_STORED_SAMPLES:
            kept.append(outputs[:MAX_STORED_SAMPLES - stored])
            stored += kept[-1].shape[0]
        remaining -= rows

    return PredictiveDistribution(
        mean=moments.mean,
        variance=moments.variance(ddof=1),
        samples_used=int(T),
        source="mcd",
        samples=np.vstack(kept),
        flags=flags,
    )
