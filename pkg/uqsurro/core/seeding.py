"""
Deterministic random streams derived from a master seed and stable labels.
"""
from typing import List

import numpy as np
from cryptography.hazmat.primitives import hashes

from ..exceptions import InvalidHyperparameterError


def sha256_digest(data: bytes) -> bytes:
    """
    Compute a SHA-256 digest.

    Args:
        data: Bytes to hash

    Returns:
        32-byte digest
    """
    digest = hashes.Hash(hashes.SHA256())
    digest.update(data)
    return digest.finalize()


def label_entropy(label: str) -> List[int]:
    """Turn a stage label into 32-bit words usable as SeedSequence entropy."""
    raw = sha256_digest(label.encode("utf-8"))
    return [int.from_bytes(raw[i:i + 4], "little") for i in range(0, 16, 4)]


class SeedStream:
    """
    Fans a master seed out to independent generators keyed by labels such as
    "design", "split", "init:<response>" or "uq:<case>".
    """

    def __init__(self, master_seed: int):
        """
        Initialize the seed stream.

        Args:
            master_seed: Non-negative master seed of the run

        Raises:
            InvalidHyperparameterError: If the seed is negative
        """
        if master_seed < 0:
            raise InvalidHyperparameterError(f"Master seed must be non-negative, got {master_seed}", name="seed")
        self.master_seed = int(master_seed)

    def sequence(self, label: str) -> np.random.SeedSequence:
        """Return the SeedSequence for a label."""
        return np.random.SeedSequence([self.master_seed, *label_entropy(label)])

    def generator(self, label: str) -> np.random.Generator:
        """Return a fresh generator for a label; same label, same stream."""
        return np.random.Generator(np.random.PCG64(self.sequence(label)))

    def seed(self, label: str) -> int:
        """Return a 32-bit integer seed for a label (for seeded initializers)."""
        return int(self.sequence(label).generate_state(1)[0])

    def spawn(self, label: str, n: int) -> List[np.random.Generator]:
        """
        Split a labelled stream into ordered substreams.

        Args:
            label: Parent label
            n: Number of substreams

        Returns:
            List of n independent generators, in a fixed order
        """
        children = self.sequence(label).spawn(n)
        return [np.random.Generator(np.random.PCG64(child)) for child in children]
