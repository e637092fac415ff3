"""
Maximin Latin hypercube experiment designs.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from ..exceptions import InvalidHyperparameterError
from ..logger import log_audit
from .dataset import InputSchema


def min_distance(design: np.ndarray) -> float:
    """Smallest pairwise Euclidean distance between design rows (0 for a single row)."""
    if design.shape[0] < 2:
        return 0.0
    return float(pdist(design).min())


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """
    One random Latin hypercube on [0, 1)^d.

    Each column holds exactly one point in every stratum [k/n, (k+1)/n).
    """
    strata = np.argsort(rng.random((n, d)), axis=0)
    return (strata + rng.random((n, d))) / n


@dataclass(frozen=True)
class LhsResult:
    """Selected unit design with the distances used to pick it."""
    unit_design: np.ndarray
    min_distance: float
    first_min_distance: float


class MaximinLatinHypercube:
    """
    Draws candidate Latin hypercubes and keeps the one whose closest pair
    of points is farthest apart.
    """

    def __init__(self, iterations: int = 1000):
        if int(iterations) < 1:
            raise InvalidHyperparameterError("iterations must be at least 1", name="iterations")
        self.iterations = int(iterations)

    def sample_unit(self, n: int, d: int, rng: np.random.Generator) -> LhsResult:
        """
        Args:
            n: Number of design points
            d: Number of input columns
            rng: Random stream

        Returns:
            LhsResult holding the best unit-hypercube design
        """
        if int(n) < 1 or int(d) < 1:
            raise InvalidHyperparameterError("Design size and dimension must be at least 1", name="samples")
        best, best_distance, first_distance = None, -np.inf, None
        for _ in range(self.iterations):
            candidate = latin_hypercube(int(n), int(d), rng)
            distance = min_distance(candidate)
            if first_distance is None:
                first_distance = distance
            if distance > best_distance:
                best, best_distance = candidate, distance
        return LhsResult(unit_design=best, min_distance=best_distance, first_min_distance=first_distance)

    def sample(self, n: int, schema: InputSchema, rng: np.random.Generator) -> np.ndarray:
        """Maximin design mapped through the schema's bounds and distributions."""
        result = self.sample_unit(n, schema.dimension, rng)
        log_audit("DESIGN", {
            "samples": int(n),
            "inputs": schema.names,
            "iterations": self.iterations,
            "min_distance": result.min_distance,
        })
        return schema.from_unit(result.unit_design)


def maximin_lhs(n: int, schema: InputSchema, iterations: int, rng: np.random.Generator) -> np.ndarray:
    """
    Maximin Latin hypercube design.

    Args:
        n: Number of samples
        schema: Input schema (bounds and distributions)
        iterations: Number of candidate hypercubes
        rng: Random stream

    Returns:
        (n, d) design in input units

    Raises:
        SchemaError: If the schema is invalid
    """
    schema.validate()
    return MaximinLatinHypercube(iterations).sample(n, schema, rng)


def crossed_design(outer: np.ndarray, inner_samples: int, inner_schema: InputSchema,
                   iterations: int, rng: np.random.Generator) -> np.ndarray:
    """
    Pair every outer row with its own maximin design of the inner inputs.

    Args:
        outer: (m, d_outer) design, e.g. boundary-condition cases
        inner_samples: Inner design size per outer row
        inner_schema: Schema of the inner inputs
        iterations: Maximin candidates per inner design
        rng: Random stream

    Returns:
        (m * inner_samples, d_outer + d_inner) design, grouped by outer row
    """
    sampler = MaximinLatinHypercube(iterations)
    blocks = []
    for row in np.atleast_2d(outer):
        unit = sampler.sample_unit(inner_samples, inner_schema.dimension, rng).unit_design
        inner = inner_schema.from_unit(unit)
        blocks.append(np.hstack([np.tile(row, (inner.shape[0], 1)), inner]))
    return np.vstack(blocks)
