"""
Mean-field variational Bayesian networks trained by Bayes by Backprop.

Weights carry a factorized Gaussian posterior w = mu + softplus(rho) * eps;
biases stay deterministic. The loss of a minibatch is

    KL(q || prior) / n_batches + mean over samples of the summed Gaussian NLL

so the losses of one epoch's minibatches add up to the full free energy.
"""
import copy
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import expit, logsumexp

from ..core.models import LayerSpec, PredictiveDistribution, TrainConfig, TrainLog
from ..exceptions import (
    DomainError,
    InvalidArchitectureError,
    InvalidHyperparameterError,
    ShapeError,
    TrainingDivergenceError,
)
from ..logger import get_logger
from ..nn.net import (
    Mlp,
    backpropagate,
    check_architecture,
    fit_minibatches,
    forward_with_cache,
    init_mlp,
    init_scale,
    predict,
)
from ..nn.objectives import (
    GaussianNllObjective,
    inverse_softplus,
    nll_matrix,
    nll_output_grad,
    softplus,
    split_head,
)
from .ensemble import mixture_moments


SCHEMA_VERSION = 1
PRIOR_KINDS = ("gaussian", "scale_mixture")
INITIAL_SIGMA_FRACTION = 0.05
DEFAULT_SAMPLES = 200


@dataclass(frozen=True)
class PriorSpec:
    """
    Weight prior: N(0, sigma^2), or the mixture
    pi N(0, sigma1^2) + (1 - pi) N(0, sigma2^2).
    """
    kind: str = "gaussian"
    sigma: float = 1.0
    pi: float = 0.5
    sigma1: float = 1.0
    sigma2: float = math.exp(-6)

    def validate(self) -> 'PriorSpec':
        if self.kind not in PRIOR_KINDS:
            raise InvalidHyperparameterError(
                f"Unknown prior kind '{self.kind}'; expected one of {', '.join(PRIOR_KINDS)}", name="prior")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise InvalidHyperparameterError("Prior sigma must be positive", name="prior")
        if self.kind == "scale_mixture":
            if not (self.sigma1 > 0 and self.sigma2 > 0):
                raise InvalidHyperparameterError("Mixture prior scales must be positive", name="prior")
            if not 0.0 < self.pi < 1.0:
                raise InvalidHyperparameterError("Mixture weight pi must lie in (0, 1)", name="prior")
        return self

    def log_density(self, w: np.ndarray) -> np.ndarray:
        """Elementwise log prior density."""
        if self.kind == "gaussian":
            return stats.norm.logpdf(w, scale=self.sigma)
        components = np.stack([
            math.log(self.pi) + stats.norm.logpdf(w, scale=self.sigma1),
            math.log(1.0 - self.pi) + stats.norm.logpdf(w, scale=self.sigma2),
        ])
        return logsumexp(components, axis=0)

    def grad_log_density(self, w: np.ndarray) -> np.ndarray:
        """Elementwise d log p(w) / dw."""
        if self.kind == "gaussian":
            return -w / self.sigma ** 2
        log_first = math.log(self.pi) + stats.norm.logpdf(w, scale=self.sigma1)
        log_second = math.log(1.0 - self.pi) + stats.norm.logpdf(w, scale=self.sigma2)
        responsibility = expit(log_first - log_second)
        return -w * (responsibility / self.sigma1 ** 2 + (1.0 - responsibility) / self.sigma2 ** 2)

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": self.kind, "sigma": float(self.sigma)}
        return {"kind": self.kind, "pi": float(self.pi),
                "sigma1": float(self.sigma1), "sigma2": float(self.sigma2)}

    @classmethod
    def from_dict(cls, data: dict) -> 'PriorSpec':
        return cls(
            kind=data.get("kind", "gaussian"),
            sigma=float(data.get("sigma", 1.0)),
            pi=float(data.get("pi", 0.5)),
            sigma1=float(data.get("sigma1", 1.0)),
            sigma2=float(data.get("sigma2", math.exp(-6))),
        ).validate()


@dataclass
class VariationalPosterior:
    """
    Factorized Gaussian over the weight matrices: means mu and raw scales rho.
    """
    mu: List[np.ndarray]
    rho: List[np.ndarray]

    def __post_init__(self):
        self.mu = [np.asarray(m, dtype=float) for m in self.mu]
        self.rho = [np.asarray(r, dtype=float) for r in self.rho]
        if len(self.mu) != len(self.rho) or any(m.shape != r.shape for m, r in zip(self.mu, self.rho)):
            raise ShapeError("mu and rho must have matching shapes per layer")

    @property
    def sigma(self) -> List[np.ndarray]:
        return [softplus(r) for r in self.rho]

    def copy(self) -> 'VariationalPosterior':
        return VariationalPosterior(mu=[m.copy() for m in self.mu], rho=[r.copy() for r in self.rho])


@dataclass
class Bnn:
    """
    Architecture, weight posterior, deterministic biases and prior.
    """
    input_dim: int
    layers: List[LayerSpec]
    posterior: VariationalPosterior
    biases: List[np.ndarray]
    prior: PriorSpec
    metadata: Dict = field(default_factory=dict)

    def network(self, weights: Sequence[np.ndarray]) -> Mlp:
        """Deterministic network with the given weights and this model's biases."""
        return Mlp(input_dim=self.input_dim, layers=list(self.layers),
                   weights=list(weights), biases=list(self.biases))

    def mean_network(self) -> Mlp:
        return self.network(self.posterior.mu)

    def parameters(self) -> List[np.ndarray]:
        """Trainable arrays in (mu..., rho..., biases...) order."""
        return list(self.posterior.mu) + list(self.posterior.rho) + list(self.biases)

    def copy(self) -> 'Bnn':
        return Bnn(input_dim=self.input_dim, layers=list(self.layers), posterior=self.posterior.copy(),
                   biases=[b.copy() for b in self.biases], prior=self.prior,
                   metadata=copy.deepcopy(self.metadata))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "input_dim": int(self.input_dim),
            "arch": [spec.to_dict() for spec in self.layers],
            "prior": self.prior.to_dict(),
            "mu": self.posterior.mu,
            "rho": self.posterior.rho,
            "biases": self.biases,
            "training_config": self.metadata.get("training_config"),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Bnn':
        if data.get("schema_version") != SCHEMA_VERSION:
            raise InvalidArchitectureError(f"Unsupported BNN schema version {data.get('schema_version')}")
        layers = [LayerSpec.from_dict(spec) for spec in data["arch"]]
        widths = [spec.width for spec in layers]
        bnn = cls(
            input_dim=int(data["input_dim"]),
            layers=layers,
            posterior=VariationalPosterior(
                mu=[np.asarray(m, dtype=float).reshape(-1, w) for m, w in zip(data["mu"], widths)],
                rho=[np.asarray(r, dtype=float).reshape(-1, w) for r, w in zip(data["rho"], widths)],
            ),
            biases=[np.asarray(b, dtype=float).reshape(-1) for b in data["biases"]],
            prior=PriorSpec.from_dict(data["prior"]),
            metadata={"training_config": data.get("training_config")},
        )
        check_architecture(bnn.mean_network())
        return bnn


def init_bnn(input_dim: int, layers: Sequence[LayerSpec], prior: PriorSpec, seed: int) -> Bnn:
    """
    Posterior means from the usual initializer; sigma starts at 5% of the
    layer's initialization scale; biases start at zero.
    """
    prior.validate()
    base = init_mlp(input_dim, layers, seed)
    rho = []
    fan_in = int(input_dim)
    for W, spec in zip(base.weights, base.layers):
        sigma0 = INITIAL_SIGMA_FRACTION * init_scale(fan_in, spec.width, spec.activation)
        rho.append(np.full(W.shape, float(inverse_softplus(sigma0))))
        fan_in = spec.width
    return Bnn(input_dim=int(input_dim), layers=list(base.layers),
               posterior=VariationalPosterior(mu=base.weights, rho=rho),
               biases=base.biases, prior=prior)


def sample_weights(bnn: Bnn, rng: Optional[np.random.Generator] = None,
                   eps: Optional[Sequence[np.ndarray]] = None) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Reparameterized weight draw w = mu + sigma * eps.

    Args:
        bnn: Model
        rng: Stream for eps (unused when eps is given)
        eps: Fixed standard-normal noise per layer

    Returns:
        (weights, eps)
    """
    if eps is None:
        if rng is None:
            raise InvalidHyperparameterError("A random stream or fixed noise is required", name="rng")
        eps = [rng.standard_normal(m.shape) for m in bnn.posterior.mu]
    eps = [np.asarray(e, dtype=float) for e in eps]
    if any(e.shape != m.shape for e, m in zip(eps, bnn.posterior.mu)):
        raise ShapeError("Noise shapes must match the weight matrices")
    weights = [m + s * e for m, s, e in zip(bnn.posterior.mu, bnn.posterior.sigma, eps)]
    return weights, eps


def kl_gaussians(posterior: VariationalPosterior, prior: PriorSpec) -> float:
    """
    Closed-form KL(q || N(0, sigma_p^2)) summed over all weights.

    Raises:
        DomainError: For a scale-mixture prior (no closed form)
    """
    if prior.kind != "gaussian":
        raise DomainError("Closed-form KL needs a Gaussian prior; use the Monte-Carlo estimate")
    total = 0.0
    for mu, sigma in zip(posterior.mu, posterior.sigma):
        terms = (np.log(prior.sigma / sigma)
                 + (sigma * sigma + mu * mu) / (2.0 * prior.sigma ** 2) - 0.5)
        total += float(terms.sum())
    return total


def kl_monte_carlo(posterior: VariationalPosterior, prior: PriorSpec,
                   weights: Sequence[np.ndarray]) -> float:
    """Single-draw KL estimate log q(w) - log p(w) at sampled weights."""
    total = 0.0
    for w, mu, sigma in zip(weights, posterior.mu, posterior.sigma):
        total += float(np.sum(stats.norm.logpdf(w, loc=mu, scale=sigma) - prior.log_density(w)))
    return total


@dataclass(frozen=True)
class ElboTerms:
    """KL to the prior (full, not divided) and the sample-averaged summed NLL."""
    kl: float
    nll: float

    def loss(self, n_batches: int) -> float:
        return self.kl / n_batches + self.nll


def _draw_noise(bnn: Bnn, n_mc: int, rng, eps):
    if eps is not None:
        return [list(e) for e in eps]
    if int(n_mc) < 1:
        raise InvalidHyperparameterError("n_mc must be at least 1", name="n_mc")
    if rng is None:
        raise InvalidHyperparameterError("A random stream or fixed noise is required", name="rng")
    return [[rng.standard_normal(m.shape) for m in bnn.posterior.mu] for _ in range(int(n_mc))]


def _batch_arrays(batch) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(batch[0], dtype=float))
    Y = np.asarray(batch[1], dtype=float)
    if Y.ndim == 1:
        Y = Y[:, np.newaxis]
    if X.shape[0] == 0 or X.shape[0] != Y.shape[0]:
        raise ShapeError("Batch must be non-empty with matching input and target rows")
    return X, Y


def elbo_loss_and_grad(bnn: Bnn, batch, n_batches: int, n_mc: int = 1,
                       rng: Optional[np.random.Generator] = None,
                       eps: Optional[Sequence[Sequence[np.ndarray]]] = None
                       ) -> Tuple[float, List[np.ndarray], ElboTerms]:
    """
    Minibatch free energy and its gradients.

    Args:
        bnn: Model
        batch: (inputs (n, d), targets (n, r))
        n_batches: Minibatches per epoch; the KL is divided by it
        n_mc: Weight samples averaged in the likelihood term
        rng: Stream for the weight noise
        eps: Frozen noise, one per-layer list per sample (overrides n_mc)

    Returns:
        (loss, gradients aligned with bnn.parameters(), terms)

    Raises:
        TrainingDivergenceError: If the loss is not finite
    """
    if int(n_batches) < 1:
        raise InvalidHyperparameterError("n_batches must be at least 1", name="n_batches")
    X, Y = _batch_arrays(batch)
    noise = _draw_noise(bnn, n_mc, rng, eps)
    samples = len(noise)
    sigma = bnn.posterior.sigma
    dsigma_drho = [expit(r) for r in bnn.posterior.rho]
    d_mu = [np.zeros_like(m) for m in bnn.posterior.mu]
    d_sigma = [np.zeros_like(m) for m in bnn.posterior.mu]
    d_b = [np.zeros_like(b) for b in bnn.biases]

    nll_total = 0.0
    kl_total = 0.0
    kl_scale = 1.0 / (n_batches * samples)
    for sample_eps in noise:
        weights, sample_eps = sample_weights(bnn, eps=sample_eps)
        net = bnn.network(weights)
        out, cache = forward_with_cache(net, X)
        nll_total += float(nll_matrix(out, Y).sum())
        grads = backpropagate(net, cache, nll_output_grad(out, Y))
        for layer, (dW, db) in enumerate(zip(grads.weights, grads.biases)):
            d_mu[layer] += dW / samples
            d_sigma[layer] += dW * sample_eps[layer] / samples
            d_b[layer] += db / samples
        if bnn.prior.kind == "scale_mixture":
            kl_total += kl_monte_carlo(bnn.posterior, bnn.prior, weights)
            for layer, w in enumerate(weights):
                g = bnn.prior.grad_log_density(w)
                d_mu[layer] -= g * kl_scale
                d_sigma[layer] += (-1.0 / sigma[layer] - g * sample_eps[layer]) * kl_scale

    if bnn.prior.kind == "gaussian":
        kl = kl_gaussians(bnn.posterior, bnn.prior)
        variance_p = bnn.prior.sigma ** 2
        for layer, (mu, s) in enumerate(zip(bnn.posterior.mu, sigma)):
            d_mu[layer] += mu / variance_p / n_batches
            d_sigma[layer] += (-1.0 / s + s / variance_p) / n_batches
    else:
        kl = kl_total / samples

    terms = ElboTerms(kl=kl, nll=nll_total / samples)
    loss = terms.loss(n_batches)
    if not np.isfinite(loss):
        raise TrainingDivergenceError("non-finite free energy")
    d_rho = [ds * dr for ds, dr in zip(d_sigma, dsigma_drho)]
    return loss, d_mu + d_rho + d_b, terms


def elbo_terms(bnn: Bnn, batch, n_mc: int = 1, rng: Optional[np.random.Generator] = None,
               eps: Optional[Sequence[Sequence[np.ndarray]]] = None) -> ElboTerms:
    """KL and likelihood parts of the free energy, for auditing."""
    return elbo_loss_and_grad(bnn, batch, 1, n_mc, rng, eps)[2]


def elbo_loss(bnn: Bnn, batch, n_batches: int, n_mc: int = 1,
              rng: Optional[np.random.Generator] = None,
              eps: Optional[Sequence[Sequence[np.ndarray]]] = None) -> float:
    """
    KL / n_batches minus the sample-averaged log-likelihood of the batch.

    Raises:
        TrainingDivergenceError: If the value is not finite
    """
    return elbo_loss_and_grad(bnn, batch, n_batches, n_mc, rng, eps)[0]


def train_bnn(data, layers: Sequence[LayerSpec], cfg: TrainConfig, prior: PriorSpec,
              rng: np.random.Generator, n_mc: int = 1) -> Tuple[Bnn, TrainLog]:
    """
    Fit the weight posterior by minibatch descent on the free energy.

    Args:
        data: Partitioned Dataset
        layers: Architecture; the output width is 2 per response
        cfg: Training configuration
        prior: Weight prior
        rng: Stream for initialization, shuffling and weight noise
        n_mc: Weight samples per step

    Returns:
        (trained Bnn, per-epoch history of the summed free energy and validation NLL)

    Raises:
        TrainingDivergenceError: If the loss becomes NaN/Inf
    """
    cfg.validate()
    prior.validate()
    if not layers or layers[-1].width % 2:
        raise InvalidArchitectureError("A Gaussian-head network needs an even output width (mean, raw variance)")
    X_train, Y_train = data.partition_arrays("train")
    X_val, Y_val = data.partition_arrays("val")
    if X_val.shape[0] == 0:
        X_val, Y_val = X_train, Y_train
    bnn = init_bnn(X_train.shape[1], layers, prior, int(rng.integers(0, 2**31 - 1)))
    n_batches = int(math.ceil(X_train.shape[0] / cfg.batch_size))
    objective = GaussianNllObjective()

    def step(rows):
        loss, grads, _ = elbo_loss_and_grad(bnn, (X_train[rows], Y_train[rows]), n_batches, n_mc, rng)
        return loss, grads

    def validate():
        return objective.data_loss(predict(bnn.mean_network(), X_val), Y_val)

    log = fit_minibatches(bnn.parameters(), step, X_train.shape[0], cfg, rng, validate, reduce="sum")
    bnn.metadata["training_config"] = cfg.to_dict()
    get_logger().debug("Trained BNN for %d epochs, final free energy %.6g", cfg.epochs, log.train_loss[-1])
    return bnn, log


def bnn_predict(bnn: Bnn, x: np.ndarray, T: int = DEFAULT_SAMPLES,
                rng: Optional[np.random.Generator] = None) -> PredictiveDistribution:
    """
    Posterior predictive moments from T weight draws.

    Each draw gives a Gaussian head (mean, variance); the draws are combined
    as an equal-weight mixture.

    Raises:
        InvalidHyperparameterError: If T < 2
    """
    if int(T) < 2:
        raise InvalidHyperparameterError(f"T must be at least 2, got {T}", name="T")
    if rng is None:
        raise InvalidHyperparameterError("A random stream is required", name="rng")
    rows = np.asarray(x, dtype=float).reshape(1, -1)
    means, variances = [], []
    for _ in range(int(T)):
        weights, _ = sample_weights(bnn, rng)
        mean, _, variance = split_head(predict(bnn.network(weights), rows))
        means.append(mean[0])
        variances.append(variance[0])
    means = np.vstack(means)
    mean, variance = mixture_moments(means, np.vstack(variances))
    return PredictiveDistribution(mean=mean, variance=variance, samples_used=int(T),
                                  source="bnn", samples=means)


def save_bnn(storage, relative: str, bnn: Bnn) -> str:
    """Write a BNN artifact."""
    return storage.write_json(relative, bnn.to_dict())


def load_bnn(storage, relative: str) -> Bnn:
    """Read a BNN artifact written by save_bnn."""
    return Bnn.from_dict(storage.read_json(relative))
