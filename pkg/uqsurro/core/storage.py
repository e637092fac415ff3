"""
Storage module for run artifacts.
Handles atomic writing and reading of JSON and CSV artifacts.
"""
import os
import json
import math
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from .seeding import sha256_digest
from ..exceptions import StorageError


FLOAT_FORMAT = "%.17g"


def _encode(value: Any) -> str:
    """Encode a value as JSON text with 17 significant digits for floats."""
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, np.generic):
        value = value.item()
    if value is None or isinstance(value, (bool, str)):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise StorageError(f"Cannot serialize non-finite value {value}", operation="encode")
        return format(value, ".17g")
    if isinstance(value, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in value.items())
        return "{" + items + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in value) + "]"
    raise StorageError(f"Cannot serialize object of type {type(value).__name__}", operation="encode")


def dumps(data: Any) -> str:
    """Serialize data to JSON text (floats with 17 significant digits)."""
    return _encode(data) + "\n"


class ArtifactStorage:
    """
    Handles storage and retrieval of run artifacts under a root directory.
    """

    def __init__(self, root: str):
        """
        Initialize the artifact storage.

        Args:
            root: Root directory of the run
        """
        self.root = root

    def path(self, relative: str) -> str:
        """Resolve a path relative to the storage root."""
        return os.path.join(self.root, relative)

    def exists(self, relative: str) -> bool:
        """
        Check if an artifact exists.

        Returns:
            True if the file or directory exists, False otherwise
        """
        return os.path.exists(self.path(relative))

    def require(self, relatives: Iterable[str]) -> None:
        """
        Ensure a set of artifacts is present.

        Raises:
            StorageError: Listing every missing artifact
        """
        missing = [rel for rel in relatives if not self.exists(rel)]
        if missing:
            raise StorageError(f"Missing artifacts: {', '.join(missing)}", operation="require")

    def _write_text(self, relative: str, text: str) -> str:
        """Write text atomically: temp file first, then rename."""
        file_path = self.path(relative)
        os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
        temp_file = file_path + '.tmp'
        try:
            with open(temp_file, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
            os.replace(temp_file, file_path)
        except OSError as e:
            raise StorageError(f"Failed to write {file_path}: {e}", operation="write")
        finally:
            if os.path.exists(temp_file):
                try:
                    os.remove(temp_file)
                except OSError:
                    pass
        return file_path

    def write_json(self, relative: str, data: Any) -> str:
        """
        Save a JSON artifact.

        Args:
            relative: Path relative to the root
            data: JSON-compatible data (numpy arrays allowed)

        Returns:
            Absolute path of the written file
        """
        return self._write_text(relative, dumps(data))

    def read_json(self, relative: str) -> Any:
        """
        Load a JSON artifact.

        Raises:
            StorageError: If the file is missing or malformed
        """
        file_path = self.path(relative)
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                return json.load(f)
        except FileNotFoundError:
            raise StorageError(f"Artifact not found: {file_path}", operation="read")
        except json.JSONDecodeError as e:
            raise StorageError(f"Invalid JSON in {file_path}: {e}", operation="read")

    def write_frame(self, relative: str, frame: pd.DataFrame) -> str:
        """
        Save a tidy table as CSV.

        Args:
            relative: Path relative to the root
            frame: Table to write (index is dropped)

        Returns:
            Absolute path of the written file
        """
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return self._write_text(relative, text)

    def write_rows(self, relative: str, columns: List[str], rows: List[List[Any]]) -> str:
        """Save rows under a header as CSV."""
        return self.write_frame(relative, pd.DataFrame(rows, columns=columns))

    def read_frame(self, relative: str) -> pd.DataFrame:
        """
        Load a CSV artifact.

        Raises:
            StorageError: If the file is missing
        """
        file_path = self.path(relative)
        if not os.path.exists(file_path):
            raise StorageError(f"Artifact not found: {file_path}", operation="read")
        return pd.read_csv(file_path)

    def digest(self, relative: str) -> str:
        """
        Fingerprint an artifact.

        Returns:
            Hex SHA-256 digest of the file content
        """
        with open(self.path(relative), 'rb') as f:
            return sha256_digest(f.read()).hex()

    def digests(self, relatives: Iterable[str]) -> Dict[str, str]:
        """Fingerprint several artifacts, skipping missing ones."""
        return {rel: self.digest(rel) for rel in sorted(relatives) if self.exists(rel)}

    def list_files(self, relative: str = "", suffix: Optional[str] = None) -> List[str]:
        """List files below a directory, relative to the root, in sorted order."""
        base = self.path(relative)
        found = []
        for dirpath, _, filenames in os.walk(base):
            for filename in filenames:
                if suffix and not filename.endswith(suffix):
                    continue
                found.append(os.path.relpath(os.path.join(dirpath, filename), self.root))
        return sorted(found)
