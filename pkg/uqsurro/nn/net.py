"""
Dense feed-forward networks: initialization, forward pass with optional
dropout masks, reverse-mode gradients and a minibatch training loop.

Weights are stored fan_in x fan_out and inputs are row vectors, so a layer
computes ``a @ W + b``.
"""
import copy
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from ..core.models import ACTIVATIONS, LayerSpec, TrainConfig, TrainLog
from ..exceptions import (
    DomainError,
    InvalidArchitectureError,
    InvalidHyperparameterError,
    ShapeError,
    TrainingDivergenceError,
    ValidationError,
)
from ..logger import get_logger
from .optim import make_optimizer


SCHEMA_VERSION = 1
SCALING_MODES = ("inverted", "sqrt_width")


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z, a):
    return (z > 0.0).astype(z.dtype)


def _tanh_grad(z, a):
    return 1.0 - a * a


def _sigmoid_grad(z, a):
    return a * (1.0 - a)


def _identity(z):
    return z


def _ones_grad(z, a):
    return np.ones_like(z)


# name -> (activation, derivative given pre-activation z and activation a)
_ACTIVATION_TABLE: Dict[str, Tuple[Callable, Callable]] = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "sigmoid": (expit, _sigmoid_grad),
    "linear": (_identity, _ones_grad),
}


def activate(name: str, z: np.ndarray) -> np.ndarray:
    """Apply a named activation."""
    return _ACTIVATION_TABLE[name][0](z)


@dataclass
class Mlp:
    """
    Layered dense network. ``weights[l]`` has shape (fan_in, fan_out).
    """
    input_dim: int
    layers: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    metadata: Dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        """Number of weight layers L (hidden + output)."""
        return len(self.weights)

    @property
    def output_dim(self) -> int:
        return int(self.layers[-1].width)

    @property
    def hidden_widths(self) -> List[int]:
        return [spec.width for spec in self.layers[:-1]]

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in (W_1, b_1, ..., W_L, b_L) order."""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend([W, b])
        return params

    def copy(self) -> 'Mlp':
        """Deep copy with writeable arrays."""
        return Mlp(
            input_dim=self.input_dim,
            layers=list(self.layers),
            weights=[np.array(W, dtype=float, copy=True) for W in self.weights],
            biases=[np.array(b, dtype=float, copy=True) for b in self.biases],
            metadata=copy.deepcopy(self.metadata),
        )

    def freeze(self) -> 'Mlp':
        """Mark the parameter arrays read-only; trained models are shared, not mutated."""
        for array in self.parameters():
            array.flags.writeable = False
        return self

    def to_dict(self) -> dict:
        """
        Convert the network to its JSON artifact layout.

        Returns:
            Dictionary with schema_version, input_dim, layers, weights, biases,
            training_config and objective
        """
        data = {
            "schema_version": SCHEMA_VERSION,
            "input_dim": int(self.input_dim),
            "layers": [spec.to_dict() for spec in self.layers],
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "training_config": self.metadata.get("training_config"),
            "objective": self.metadata.get("objective"),
        }
        if "dropout" in self.metadata:
            data["dropout"] = self.metadata["dropout"]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'Mlp':
        """
        Create a network from its JSON artifact layout.

        Raises:
            InvalidArchitectureError: If the stored shapes do not chain
        """
        if data.get("schema_version") != SCHEMA_VERSION:
            raise InvalidArchitectureError(
                f"Unsupported model schema version {data.get('schema_version')}")
        metadata = {
            "training_config": data.get("training_config"),
            "objective": data.get("objective"),
        }
        if data.get("dropout") is not None:
            metadata["dropout"] = data["dropout"]
        mlp = cls(
            input_dim=int(data["input_dim"]),
            layers=[LayerSpec.from_dict(spec) for spec in data["layers"]],
            weights=[np.asarray(W, dtype=float).reshape(-1, spec["width"])
                     for W, spec in zip(data["weights"], data["layers"])],
            biases=[np.asarray(b, dtype=float).reshape(-1) for b in data["biases"]],
            metadata=metadata,
        )
        check_architecture(mlp)
        return mlp


def validate_layers(input_dim: int, layers: Sequence[LayerSpec]) -> None:
    """
    Validate an input dimension and layer list.

    Raises:
        InvalidArchitectureError: On an empty list, zero width or unknown activation
    """
    if int(input_dim) < 1:
        raise InvalidArchitectureError(f"input_dim must be at least 1, got {input_dim}")
    if not layers:
        raise InvalidArchitectureError("Layer list cannot be empty")
    for index, spec in enumerate(layers):
        if int(spec.width) < 1:
            raise InvalidArchitectureError(f"Layer {index} has width {spec.width}; must be at least 1")
        if spec.activation not in ACTIVATIONS:
            raise InvalidArchitectureError(
                f"Layer {index} has unknown activation '{spec.activation}'")


def check_architecture(mlp: Mlp) -> None:
    """Check that parameter shapes chain from input_dim to the output width."""
    validate_layers(mlp.input_dim, mlp.layers)
    if len(mlp.weights) != len(mlp.layers) or len(mlp.biases) != len(mlp.layers):
        raise InvalidArchitectureError("One weight matrix and bias vector required per layer")
    fan_in = mlp.input_dim
    for index, (W, b, spec) in enumerate(zip(mlp.weights, mlp.biases, mlp.layers)):
        if W.shape != (fan_in, spec.width) or b.shape != (spec.width,):
            raise InvalidArchitectureError(
                f"Layer {index}: expected W {(fan_in, spec.width)} and b {(spec.width,)}, "
                f"got {W.shape} and {b.shape}")
        fan_in = spec.width


def init_scale(fan_in: int, fan_out: int, activation: str) -> float:
    """
    Standard deviation of the initial weights of a layer.

    He scaling for relu, Glorot scaling for the saturating/linear activations.
    """
    if activation == "relu":
        return float(np.sqrt(2.0 / fan_in))
    return float(np.sqrt(2.0 / (fan_in + fan_out)))


def init_mlp(input_dim: int, layers: Sequence[LayerSpec], seed: int) -> Mlp:
    """
    Create a randomly initialized network.

    Args:
        input_dim: Number of input features d
        layers: Hidden layers followed by the output layer
        seed: Seed of the initializer

    Returns:
        Mlp with He-normal (relu) or Glorot-uniform weights and zero biases

    Raises:
        InvalidArchitectureError: On a degenerate layer list
    """
    layers = list(layers)
    validate_layers(input_dim, layers)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = int(input_dim)
    for spec in layers:
        fan_out = int(spec.width)
        if spec.activation == "relu":
            W = rng.normal(0.0, init_scale(fan_in, fan_out, "relu"), size=(fan_in, fan_out))
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        weights.append(W)
        biases.append(np.zeros(fan_out))
        fan_in = fan_out
    return Mlp(input_dim=int(input_dim), layers=layers, weights=weights, biases=biases)


@dataclass
class DropoutMask:
    """
    Binary keep vectors for the hidden layers.

    ``keep[l]`` has shape (width,) to share one mask across a batch, or
    (rows, width) to give every input row its own mask.
    """
    keep: List[np.ndarray]
    p_drop: float
    scaling: str = "inverted"

    @classmethod
    def disabled(cls, mlp: Mlp) -> 'DropoutMask':
        """All-ones mask with unit scaling: the forward pass is the plain network."""
        return cls(keep=[np.ones(w) for w in mlp.hidden_widths], p_drop=0.0)

    def layer_factor(self, width: int) -> float:
        """Multiplier applied to kept activations of a hidden layer."""
        if self.p_drop == 0.0:
            return 1.0
        if self.scaling == "sqrt_width":
            return float(np.sqrt(1.0 / width))
        return 1.0 / (1.0 - self.p_drop)


def check_p_drop(p_drop: float) -> float:
    """
    Validate a dropout ratio.

    Raises:
        InvalidHyperparameterError: Unless 0 < p_drop < 1
    """
    if p_drop is None or not np.isfinite(p_drop) or not 0.0 < p_drop < 1.0:
        raise InvalidHyperparameterError(
            f"Dropout ratio must lie strictly inside (0, 1), got {p_drop}", name="p_drop")
    return float(p_drop)


def sample_dropout_mask(mlp: Mlp, p_drop: float, rng: np.random.Generator,
                        rows: Optional[int] = None, scaling: str = "inverted") -> DropoutMask:
    """
    Draw a fresh dropout mask for every hidden layer.

    Args:
        mlp: Network whose hidden widths define the mask
        p_drop: Probability of dropping a hidden unit
        rng: Random stream
        rows: When given, draw an independent mask per input row
        scaling: "inverted" (1/(1-p_drop)) or "sqrt_width" (sqrt(1/K_l))

    Returns:
        DropoutMask with entries in {0, 1}
    """
    p_drop = check_p_drop(p_drop)
    if scaling not in SCALING_MODES:
        raise InvalidHyperparameterError(f"Unknown dropout scaling '{scaling}'", name="scaling")
    keep = []
    for width in mlp.hidden_widths:
        shape = (width,) if rows is None else (int(rows), width)
        keep.append((rng.random(shape) >= p_drop).astype(float))
    return DropoutMask(keep=keep, p_drop=p_drop, scaling=scaling)


def _as_rows(mlp: Mlp, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Coerce an input vector or batch to a 2-D row matrix."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[np.newaxis, :]
    if X.ndim != 2 or X.shape[1] != mlp.input_dim:
        raise ShapeError(f"Expected inputs with {mlp.input_dim} features, got shape {np.shape(x)}")
    if not np.all(np.isfinite(X)):
        raise DomainError("Inputs must be finite")
    return X, single


def _check_mask(mlp: Mlp, mask: DropoutMask, n_rows: int) -> None:
    if len(mask.keep) != len(mlp.hidden_widths):
        raise ShapeError(f"Mask has {len(mask.keep)} layers, network has {len(mlp.hidden_widths)} hidden")
    for keep, width in zip(mask.keep, mlp.hidden_widths):
        if keep.shape not in ((width,), (n_rows, width)):
            raise ShapeError(f"Mask of shape {keep.shape} does not fit a hidden layer of width {width}")


def forward_with_cache(mlp: Mlp, X: np.ndarray, mask: Optional[DropoutMask] = None
                       ) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray]]]]:
    """
    Forward pass over a row batch, remembering what the backward pass needs.

    Returns:
        (outputs, cache) where cache holds (layer input, pre-activation,
        activation, mask multiplier) per layer
    """
    if mask is not None:
        _check_mask(mlp, mask, X.shape[0])
    cache = []
    a = X
    last = mlp.depth - 1
    for index, (W, b, spec) in enumerate(zip(mlp.weights, mlp.biases, mlp.layers)):
        z = a @ W + b
        h = activate(spec.activation, z)
        multiplier = None
        if mask is not None and index < last:
            multiplier = mask.keep[index] * mask.layer_factor(spec.width)
        cache.append((a, z, h, multiplier))
        a = h if multiplier is None else h * multiplier
    return a, cache


def forward(mlp: Mlp, x: np.ndarray, mask: Optional[DropoutMask] = None) -> np.ndarray:
    """
    Evaluate the network.

    Args:
        mlp: Network
        x: Input vector (d,) or row batch (n, d)
        mask: Optional dropout mask; the output layer is never masked

    Returns:
        Output vector (q,) or matrix (n, q)

    Raises:
        ShapeError: On dimension mismatch
        DomainError: On non-finite input
    """
    X, single = _as_rows(mlp, x)
    out, _ = forward_with_cache(mlp, X, mask)
    return out[0] if single else out


def predict(mlp: Mlp, X: np.ndarray) -> np.ndarray:
    """Deterministic (unmasked) forward pass over a row batch."""
    rows, _ = _as_rows(mlp, X)
    return forward_with_cache(mlp, rows)[0]


@dataclass
class Gradients:
    """Per-layer gradients matching Mlp.weights and Mlp.biases."""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def as_list(self) -> List[np.ndarray]:
        grads = []
        for dW, db in zip(self.weights, self.biases):
            grads.extend([dW, db])
        return grads

    def add(self, other: 'Gradients') -> 'Gradients':
        return Gradients(
            weights=[a + b for a, b in zip(self.weights, other.weights)],
            biases=[a + b for a, b in zip(self.biases, other.biases)],
        )


def backpropagate(mlp: Mlp, cache, d_out: np.ndarray) -> Gradients:
    """
    Reverse-mode sweep given the gradient of the loss w.r.t. the network outputs.

    Args:
        mlp: Network used in the forward pass
        cache: Cache returned by forward_with_cache
        d_out: dLoss/dOutputs, same shape as the outputs

    Returns:
        Gradients w.r.t. every weight matrix and bias vector
    """
    dW = [None] * mlp.depth
    db = [None] * mlp.depth
    delta = d_out
    for index in range(mlp.depth - 1, -1, -1):
        a_in, z, h, multiplier = cache[index]
        if multiplier is not None:
            delta = delta * multiplier
        spec = mlp.layers[index]
        dz = delta * _ACTIVATION_TABLE[spec.activation][1](z, h)
        dW[index] = a_in.T @ dz
        db[index] = dz.sum(axis=0)
        if index > 0:
            delta = dz @ mlp.weights[index].T
    return Gradients(weights=dW, biases=db)


def backward(mlp: Mlp, batch: Tuple[np.ndarray, np.ndarray], objective,
             mask: Optional[DropoutMask] = None) -> Tuple[float, Gradients]:
    """
    Loss and exact gradients of an objective on a batch.

    Args:
        mlp: Network
        batch: (inputs (n, d), targets (n, r))
        objective: Object with loss_and_grad(outputs, targets) and penalty(mlp)
        mask: Optional dropout mask held fixed for this evaluation

    Returns:
        (loss, gradients) including regularization terms

    Raises:
        TrainingDivergenceError: If the loss is not finite
    """
    X, _ = _as_rows(mlp, batch[0])
    Y = np.asarray(batch[1], dtype=float)
    if Y.ndim == 1:
        Y = Y[:, np.newaxis]
    if X.shape[0] == 0:
        raise ValidationError("Batch cannot be empty", field="batch")
    if Y.shape[0] != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} input rows but {Y.shape[0]} target rows")
    out, cache = forward_with_cache(mlp, X, mask)
    data_loss, d_out = objective.loss_and_grad(out, Y)
    grads = backpropagate(mlp, cache, d_out)
    penalty, penalty_grads = objective.penalty(mlp)
    loss = float(data_loss + penalty)
    if not np.isfinite(loss):
        raise TrainingDivergenceError("non-finite loss")
    if penalty_grads is not None:
        grads = grads.add(penalty_grads)
    return loss, grads


def iterate_minibatches(n_rows: int, batch_size: int, rng: np.random.Generator):
    """Yield index arrays of a shuffled pass over the rows."""
    order = rng.permutation(n_rows)
    for start in range(0, n_rows, batch_size):
        yield order[start:start + batch_size]


def fit_minibatches(parameters: List[np.ndarray],
                    step: Callable[[np.ndarray], Tuple[float, List[np.ndarray]]],
                    n_rows: int,
                    cfg: TrainConfig,
                    rng: np.random.Generator,
                    validate: Callable[[], float],
                    reduce: str = "mean") -> TrainLog:
    """
    Shuffled minibatch optimization shared by every training routine.

    Args:
        parameters: Arrays updated in place
        step: Maps batch row indices to (loss, gradients aligned with parameters)
        n_rows: Number of training rows
        cfg: Training configuration
        rng: Stream for shuffling (and whatever step draws from it)
        validate: Returns the validation loss after an epoch
        reduce: "mean" or "sum" of batch losses for the epoch's training loss

    Returns:
        TrainLog with one entry per epoch

    Raises:
        TrainingDivergenceError: On a NaN/Inf loss or gradient
    """
    if cfg.batch_size > n_rows:
        raise InvalidHyperparameterError(
            f"batch_size {cfg.batch_size} exceeds the {n_rows} training rows", name="batch_size")
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    log = TrainLog()
    for epoch in range(1, cfg.epochs + 1):
        batch_losses = []
        for rows in iterate_minibatches(n_rows, cfg.batch_size, rng):
            try:
                loss, grads = step(rows)
            except TrainingDivergenceError as e:
                raise TrainingDivergenceError(e.reason, epoch - 1, e.context)
            if not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergenceError("non-finite gradient", epoch - 1)
            optimizer.step(parameters, grads)
            batch_losses.append(loss)
        train_loss = float(np.sum(batch_losses) if reduce == "sum" else np.mean(batch_losses))
        val_loss = float(validate())
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDivergenceError("non-finite epoch loss", epoch - 1)
        log.record(train_loss, val_loss)
    return log


def train(mlp: Mlp, data, cfg: TrainConfig, objective, rng: np.random.Generator,
          p_drop: Optional[float] = None, scaling: str = "inverted") -> Tuple[Mlp, TrainLog]:
    """
    Train a network by shuffled minibatch gradient descent.

    Args:
        mlp: Initial network (left untouched; a trained copy is returned)
        data: Dataset whose training partition is used (all rows when unpartitioned)
        cfg: Training configuration
        objective: Loss objective
        rng: Stream for shuffling and dropout masks
        p_drop: Dropout ratio; when given a fresh mask is drawn per minibatch
        scaling: Dropout scaling mode

    Returns:
        (trained frozen network, loss history)

    Raises:
        TrainingDivergenceError: If the loss becomes NaN/Inf
    """
    cfg.validate()
    if p_drop is not None:
        check_p_drop(p_drop)
    X_train, Y_train = data.partition_arrays("train")
    X_val, Y_val = data.partition_arrays("val")
    if X_val.shape[0] == 0:
        X_val, Y_val = X_train, Y_train
    model = mlp.copy()

    def step(rows):
        mask = None
        if p_drop is not None:
            mask = sample_dropout_mask(model, p_drop, rng, scaling=scaling)
        return backward(model, (X_train[rows], Y_train[rows]), objective, mask)

    def step_list(rows):
        loss, grads = step(rows)
        return loss, grads.as_list()

    def validate():
        return objective.data_loss(predict(model, X_val), Y_val)

    log = fit_minibatches(model.parameters(), step_list, X_train.shape[0], cfg, rng, validate)
    model.metadata["training_config"] = cfg.to_dict()
    model.metadata["objective"] = objective.name
    if p_drop is not None:
        model.metadata["dropout"] = {"p_drop": float(p_drop), "scaling": scaling}
    get_logger().debug("Trained %s network for %d epochs, final loss %.6g",
                       objective.name, cfg.epochs, log.train_loss[-1])
    return model.freeze(), log


def save_model(storage, relative: str, mlp: Mlp) -> str:
    """
    Write a network artifact.

    Args:
        storage: ArtifactStorage of the run
        relative: Artifact path relative to the storage root
        mlp: Network to save

    Returns:
        Path of the written file
    """
    return storage.write_json(relative, mlp.to_dict())


def load_model(storage, relative: str) -> Mlp:
    """Read a network artifact written by save_model."""
    return Mlp.from_dict(storage.read_json(relative)).freeze()
