"""
Data models shared across the toolkit.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..exceptions import InvalidHyperparameterError, DomainError


ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")
OPTIMIZERS = ("sgd", "adam")
SOURCES = ("mcd", "de", "bnn")

# Conventional interval multipliers: 68.27% is one standard deviation,
# 95% is the usual 1.96.
Z_SCORES = {0.6827: 1.0, 0.95: 1.96}


@dataclass(frozen=True)
class LayerSpec:
    """
    One dense layer: its number of neurons and activation.
    """
    width: int
    activation: str = "relu"

    def to_dict(self) -> dict:
        return {"width": int(self.width), "activation": self.activation}

    @classmethod
    def from_dict(cls, data: dict) -> 'LayerSpec':
        return cls(width=int(data["width"]), activation=data.get("activation", "relu"))


def layers_from_widths(widths: Tuple[int, ...], activation: str = "relu",
                       output_activation: str = "linear") -> List[LayerSpec]:
    """
    Build a layer list from widths; the last layer gets the output activation.

    Args:
        widths: Neurons per layer, output layer last
        activation: Activation of the hidden layers
        output_activation: Activation of the output layer

    Returns:
        List of LayerSpec
    """
    specs = [LayerSpec(int(w), activation) for w in widths[:-1]]
    specs.append(LayerSpec(int(widths[-1]), output_activation))
    return specs


@dataclass
class TrainConfig:
    """
    Minibatch training hyperparameters.
    """
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 20
    optimizer: str = "adam"
    l2_lambda: float = 0.0
    seed: int = 0
    split: Tuple[float, float, float] = (0.85, 0.05, 0.1)

    def validate(self) -> 'TrainConfig':
        """
        Check hyperparameter ranges.

        Returns:
            self, for chaining

        Raises:
            InvalidHyperparameterError: If a value is out of range
        """
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise InvalidHyperparameterError("learning_rate must be a finite non-negative number",
                                             name="learning_rate")
        if int(self.epochs) < 1:
            raise InvalidHyperparameterError("epochs must be at least 1", name="epochs")
        if int(self.batch_size) < 1:
            raise InvalidHyperparameterError("batch_size must be at least 1", name="batch_size")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidHyperparameterError(
                f"optimizer must be one of {', '.join(OPTIMIZERS)}", name="optimizer")
        if self.l2_lambda < 0:
            raise InvalidHyperparameterError("l2_lambda must be non-negative", name="l2_lambda")
        if len(self.split) != 3 or any(not 0 < f < 1 for f in self.split):
            raise InvalidHyperparameterError("split fractions must each lie in (0, 1)", name="split")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise InvalidHyperparameterError("split fractions must sum to 1", name="split")
        return self

    def to_dict(self) -> dict:
        return {
            "learning_rate": float(self.learning_rate),
            "epochs": int(self.epochs),
            "batch_size": int(self.batch_size),
            "optimizer": self.optimizer,
            "l2_lambda": float(self.l2_lambda),
            "seed": int(self.seed),
            "split": [float(f) for f in self.split],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'TrainConfig':
        return cls(
            learning_rate=float(data.get("learning_rate", 1e-3)),
            epochs=int(data.get("epochs", 100)),
            batch_size=int(data.get("batch_size", 20)),
            optimizer=data.get("optimizer", "adam"),
            l2_lambda=float(data.get("l2_lambda", 0.0)),
            seed=int(data.get("seed", 0)),
            split=tuple(float(f) for f in data.get("split", (0.85, 0.05, 0.1))),
        )


@dataclass
class TrainLog:
    """
    Per-epoch training and validation loss history.
    """
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)

    def record(self, train_loss: float, val_loss: float) -> None:
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))

    def __len__(self) -> int:
        return len(self.train_loss)

    def to_frame(self) -> pd.DataFrame:
        """Tidy table with one row per epoch."""
        return pd.DataFrame({
            "epoch": np.arange(1, len(self.train_loss) + 1),
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
        })

    def to_dict(self) -> dict:
        return {"train_loss": list(self.train_loss), "val_loss": list(self.val_loss)}

    @classmethod
    def from_dict(cls, data: dict) -> 'TrainLog':
        return cls(train_loss=[float(v) for v in data.get("train_loss", [])],
                   val_loss=[float(v) for v in data.get("val_loss", [])])


def z_score(level: float) -> float:
    """
    Two-sided Gaussian multiplier for a confidence level.

    Args:
        level: Confidence level in (0, 1)

    Returns:
        Multiplier z such that mean +/- z*std covers the level
    """
    if not 0 < level < 1:
        raise DomainError(f"Confidence level must lie in (0, 1), got {level}")
    for known, z in Z_SCORES.items():
        if abs(level - known) < 1e-9:
            return z
    return float(stats.norm.ppf(0.5 + level / 2.0))


@dataclass
class PredictiveDistribution:
    """
    Per-response predictive mean and variance at one input.
    """
    mean: np.ndarray
    variance: np.ndarray
    samples_used: int
    source: str
    samples: Optional[np.ndarray] = None
    flags: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.variance = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if self.mean.shape != self.variance.shape:
            raise DomainError("mean and variance must have the same shape")
        if np.any(self.variance < 0):
            raise DomainError("Predictive variance must be non-negative")
        if self.source not in SOURCES:
            raise DomainError(f"Unknown predictive source '{self.source}'")

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def ci(self, level: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Gaussian confidence interval.

        Args:
            level: Confidence level, e.g. 0.6827 or 0.95

        Returns:
            (lower, upper) arrays
        """
        z = z_score(level)
        return self.mean - z * self.std, self.mean + z * self.std

    def rescaled(self, shift: np.ndarray, scale: np.ndarray) -> 'PredictiveDistribution':
        """Map a prediction made in standardized units back to response units."""
        samples = None if self.samples is None else self.samples * scale + shift
        return PredictiveDistribution(
            mean=self.mean * scale + shift,
            variance=self.variance * np.square(scale),
            samples_used=self.samples_used,
            source=self.source,
            samples=samples,
            flags=list(self.flags),
        )


@dataclass
class CurveBand:
    """
    Mean and standard-deviation curves in the original response space.
    """
    mean: np.ndarray
    std: np.ndarray
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.shape != self.std.shape:
            raise DomainError("mean and std curves must have the same length")
        if np.any(self.std < 0):
            raise DomainError("std curve must be non-negative")

    def __len__(self) -> int:
        return int(self.mean.shape[0])
