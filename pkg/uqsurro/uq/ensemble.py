"""
Deep ensembles of Gaussian-head networks combined as an equal-weight mixture.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..core.models import LayerSpec, PredictiveDistribution, TrainConfig, TrainLog
from ..exceptions import (
    InvalidArchitectureError,
    InvalidHyperparameterError,
    ShapeError,
    StateError,
    TrainingDivergenceError,
)
from ..logger import log_audit
from ..nn.net import Mlp, init_mlp, load_model, predict, save_model, train
from ..nn.objectives import GaussianNllObjective, split_head


MANIFEST = "manifest.json"


def mixture_moments(means: np.ndarray, variances: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and variance of an equal-weight Gaussian mixture.

    Args:
        means: (M, r) component means
        variances: (M, r) component variances

    Returns:
        (mean, variance), each (r,); the variance is mean(var) + mean((mu - mean)^2),
        which equals mean(var + mu^2) - mean^2

    Both terms are sums of non-negative values, so the variance cannot round
    below zero and needs no clamp or negative-variance warning.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    variances = np.atleast_2d(np.asarray(variances, dtype=float))
    if means.shape != variances.shape:
        raise ShapeError(f"means {means.shape} and variances {variances.shape} differ in shape")
    if means.shape[0] == 0:
        raise StateError("Mixture has no components")
    mean = means.mean(axis=0)
    variance = variances.mean(axis=0) + np.square(means - mean).mean(axis=0)
    return mean, variance


@dataclass
class Ensemble:
    """
    Independently initialized and trained Gaussian-head networks.
    """
    members: List[Mlp]
    seeds: List[int]
    logs: List[TrainLog] = field(default_factory=list)

    @property
    def M(self) -> int:
        return len(self.members)

    @property
    def layers(self) -> List[LayerSpec]:
        return list(self.members[0].layers)

    def manifest(self) -> dict:
        return {
            "M": self.M,
            "seeds": [int(s) for s in self.seeds],
            "input_dim": int(self.members[0].input_dim),
            "arch": [spec.to_dict() for spec in self.layers],
            "objective": self.members[0].metadata.get("objective", "nll"),
        }


def _check_head(layers: Sequence[LayerSpec]) -> None:
    if not layers or layers[-1].width % 2:
        raise InvalidArchitectureError("A Gaussian-head network needs an even output width (mean, raw variance)")


def train_ensemble(data, layers: Sequence[LayerSpec], cfg: TrainConfig, M: int,
                   rng: np.random.Generator, workers: int = 1) -> Ensemble:
    """
    Train M Gaussian-head networks that differ only in initialization and shuffling.

    Args:
        data: Partitioned Dataset
        layers: Architecture; the output width is 2 per response
        cfg: Training configuration
        M: Number of members (at least 2)
        rng: Stream the member seeds are drawn from
        workers: Members trained concurrently

    Returns:
        Ensemble with per-member loss histories

    Raises:
        TrainingDivergenceError: Naming the member that diverged
    """
    if int(M) < 2:
        raise InvalidHyperparameterError(f"An ensemble needs at least 2 members, got {M}", name="M")
    _check_head(layers)
    cfg.validate()
    seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=int(M))]
    input_dim = data.inputs.shape[1]

    def fit_member(index: int) -> Tuple[Mlp, TrainLog]:
        seed = seeds[index]
        initial = init_mlp(input_dim, layers, seed)
        try:
            member, log = train(initial, data, cfg, GaussianNllObjective(),
                                np.random.default_rng([seed, 1]))
        except TrainingDivergenceError as e:
            raise e.with_context(f"member {index}")
        log_audit("TRAIN_MEMBER", {"member": index, "seed": seed, "final_loss": log.train_loss[-1]})
        return member, log

    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(fit_member, range(int(M))))
    else:
        results = [fit_member(i) for i in range(int(M))]
    return Ensemble(members=[m for m, _ in results], seeds=seeds, logs=[log for _, log in results])


def ensemble_predict(ensemble: Ensemble, x: np.ndarray) -> PredictiveDistribution:
    """
    Mixture mean and variance over the members' Gaussian heads.

    Args:
        ensemble: Trained ensemble
        x: Input vector (d,)

    Returns:
        PredictiveDistribution (source "de"); samples hold the member means

    Raises:
        StateError: If the ensemble has no members
    """
    if not ensemble.members:
        raise StateError("Ensemble has no trained members")
    rows = np.asarray(x, dtype=float).reshape(1, -1)
    heads = [split_head(predict(member, rows)) for member in ensemble.members]
    means = np.vstack([h[0] for h in heads])
    variances = np.vstack([h[2] for h in heads])
    mean, variance = mixture_moments(means, variances)
    return PredictiveDistribution(mean=mean, variance=variance, samples_used=ensemble.M,
                                  source="de", samples=means)


def member_path(directory: str, index: int) -> str:
    return os.path.join(directory, f"member_{index}.json")


def save_ensemble(storage, directory: str, ensemble: Ensemble) -> List[str]:
    """
    Write member artifacts and the ensemble manifest under a directory.

    Returns:
        Written paths, manifest last
    """
    written = [save_model(storage, member_path(directory, i), member)
               for i, member in enumerate(ensemble.members)]
    written.append(storage.write_json(os.path.join(directory, MANIFEST), ensemble.manifest()))
    return written


def load_ensemble(storage, directory: str) -> Ensemble:
    """Read an ensemble written by save_ensemble."""
    manifest = storage.read_json(os.path.join(directory, MANIFEST))
    members = [load_model(storage, member_path(directory, i)) for i in range(int(manifest["M"]))]
    return Ensemble(members=members, seeds=[int(s) for s in manifest["seeds"]])
