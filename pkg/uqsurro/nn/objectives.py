"""
Loss functions: mean squared error, the dropout-regularized loss, and the
Gaussian negative log-likelihood used by distribution-head networks.

A Gaussian head emits two columns per response, ``[mean, raw_variance]``;
the variance is ``softplus(raw_variance) + VARIANCE_FLOOR``.
"""
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.special import expit

from ..exceptions import DomainError, InvalidHyperparameterError, ShapeError, ValidationError
from .net import Gradients


VARIANCE_FLOOR = 1e-6
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
OBJECTIVES = ("mse", "nll")


def softplus(x: np.ndarray) -> np.ndarray:
    """Numerically stable log(1 + exp(x))."""
    return np.logaddexp(0.0, x)


def inverse_softplus(y: np.ndarray) -> np.ndarray:
    """Inverse of softplus for y > 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("inverse_softplus is defined for positive values only")
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class GaussianHeadOutput:
    """
    One response of a distribution head: mean and raw (pre-activation) variance.
    """
    mean: float
    raw_variance: float

    @property
    def variance(self) -> float:
        return float(softplus(self.raw_variance) + VARIANCE_FLOOR)

    @classmethod
    def from_variance(cls, mean: float, variance: float) -> 'GaussianHeadOutput':
        """Head whose derived variance equals the given value (must exceed the floor)."""
        if variance <= VARIANCE_FLOOR:
            raise DomainError(f"Variance must exceed the floor {VARIANCE_FLOOR}")
        return cls(mean=float(mean), raw_variance=float(inverse_softplus(variance - VARIANCE_FLOOR)))


def split_head(outputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split head outputs (n, 2r) into means, raw variances and variances, each (n, r).
    """
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim == 1:
        outputs = outputs[np.newaxis, :]
    if outputs.shape[1] % 2:
        raise ShapeError("Gaussian head outputs must have an even number of columns")
    means = outputs[:, 0::2]
    raw = outputs[:, 1::2]
    return means, raw, softplus(raw) + VARIANCE_FLOOR


def _check_pair(preds: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ShapeError(f"Prediction shape {preds.shape} does not match target shape {targets.shape}")
    if preds.size == 0:
        raise ValidationError("Cannot compute a loss over zero values", field="preds")
    return preds, targets


def mse(preds: np.ndarray, targets: np.ndarray) -> float:
    """
    Mean of squared residuals.

    Raises:
        ShapeError: On length mismatch
    """
    preds, targets = _check_pair(preds, targets)
    return float(np.mean(np.square(preds - targets)))


def weight_penalty(mlp, l2_lambda: float, p_drop: Optional[float]) -> float:
    """lambda * sum_l (p_D ||W_l||^2 + ||b_l||^2); p_D is 1 when no dropout ratio is given."""
    factor = 1.0 if p_drop is None else p_drop
    return float(l2_lambda * sum(factor * np.sum(W * W) + np.sum(b * b)
                                 for W, b in zip(mlp.weights, mlp.biases)))


def mcd_loss(preds: np.ndarray, targets: np.ndarray, mlp, l2_lambda: float, p_drop: float) -> float:
    """
    Squared-error loss with the dropout weight regularizer.

    Args:
        preds: Predictions
        targets: Targets
        mlp: Network whose parameters are regularized
        l2_lambda: Regularization parameter (>= 0)
        p_drop: Dropout ratio in (0, 1)

    Returns:
        mse + lambda * sum_l (p_D ||W_l||^2 + ||b_l||^2)
    """
    if l2_lambda < 0:
        raise InvalidHyperparameterError("l2_lambda must be non-negative", name="l2_lambda")
    if not 0.0 < p_drop < 1.0:
        raise InvalidHyperparameterError("Dropout ratio must lie in (0, 1)", name="p_drop")
    return mse(preds, targets) + weight_penalty(mlp, l2_lambda, p_drop)


def gaussian_nll(y: float, head) -> float:
    """
    Negative log-likelihood of y under a Gaussian, constant included.

    Args:
        y: Observed value
        head: GaussianHeadOutput, or a (mean, variance) pair

    Returns:
        0.5 log var + (y - mean)^2 / (2 var) + 0.5 log(2 pi)

    Raises:
        DomainError: If the variance is not positive
    """
    if isinstance(head, GaussianHeadOutput):
        mean, variance = head.mean, head.variance
    else:
        mean, variance = head
    if not variance > 0:
        raise DomainError(f"Variance must be positive, got {variance}")
    residual = y - mean
    return float(0.5 * np.log(variance) + residual * residual / (2.0 * variance) + HALF_LOG_2PI)


def mnll(batch: Iterable) -> float:
    """
    Mean Gaussian NLL over (y, head) pairs.

    Raises:
        DomainError: On an empty batch
    """
    values = [gaussian_nll(y, head) for y, head in batch]
    if not values:
        raise DomainError("Mean NLL of an empty batch is undefined")
    return float(np.mean(values))


def nll_matrix(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row NLL summed over responses, for head outputs (n, 2r) and targets (n, r)."""
    means, _, variances = split_head(outputs)
    targets = np.asarray(targets, dtype=float).reshape(means.shape)
    residual = targets - means
    terms = 0.5 * np.log(variances) + residual * residual / (2.0 * variances) + HALF_LOG_2PI
    return terms.sum(axis=1)


def nll_output_grad(outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of the summed (not averaged) NLL w.r.t. head outputs."""
    means, raw, variances = split_head(outputs)
    targets = np.asarray(targets, dtype=float).reshape(means.shape)
    residual = targets - means
    grad = np.empty((means.shape[0], 2 * means.shape[1]))
    grad[:, 0::2] = -residual / variances
    d_variance = 0.5 / variances - residual * residual / (2.0 * variances * variances)
    grad[:, 1::2] = d_variance * expit(raw)
    return grad


class MseObjective:
    """
    Mean squared error, optionally with the dropout weight regularizer.
    """

    name = "mse"

    def __init__(self, l2_lambda: float = 0.0, p_drop: Optional[float] = None):
        if l2_lambda < 0:
            raise InvalidHyperparameterError("l2_lambda must be non-negative", name="l2_lambda")
        self.l2_lambda = float(l2_lambda)
        self.p_drop = p_drop

    def data_loss(self, outputs: np.ndarray, targets: np.ndarray) -> float:
        return mse(outputs, np.asarray(targets, dtype=float).reshape(np.shape(outputs)))

    def loss_and_grad(self, outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
        targets = np.asarray(targets, dtype=float).reshape(outputs.shape)
        residual = outputs - targets
        return self.data_loss(outputs, targets), 2.0 * residual / residual.size

    def penalty(self, mlp):
        if self.l2_lambda == 0.0:
            return 0.0, None
        factor = 1.0 if self.p_drop is None else self.p_drop
        grads = Gradients(
            weights=[2.0 * self.l2_lambda * factor * W for W in mlp.weights],
            biases=[2.0 * self.l2_lambda * b for b in mlp.biases],
        )
        return weight_penalty(mlp, self.l2_lambda, self.p_drop), grads


class GaussianNllObjective:
    """
    Mean negative log-likelihood of a Gaussian head, summed over responses.
    """

    name = "nll"

    def data_loss(self, outputs: np.ndarray, targets: np.ndarray) -> float:
        return float(np.mean(nll_matrix(outputs, targets)))

    def loss_and_grad(self, outputs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
        n_rows = outputs.shape[0]
        return self.data_loss(outputs, targets), nll_output_grad(outputs, targets) / n_rows

    def penalty(self, mlp):
        return 0.0, None


def make_objective(name: str, l2_lambda: float = 0.0, p_drop: Optional[float] = None):
    """
    Build an objective by its configuration name.

    Args:
        name: "mse" or "nll"
        l2_lambda: Regularization parameter (mse only)
        p_drop: Dropout ratio scaling the weight penalty (mse only)

    Returns:
        Objective instance
    """
    if name == "mse":
        return MseObjective(l2_lambda=l2_lambda, p_drop=p_drop)
    if name == "nll":
        return GaussianNllObjective()
    raise InvalidHyperparameterError(
        f"Unknown objective '{name}'; expected one of {', '.join(OBJECTIVES)}", name="objective")
