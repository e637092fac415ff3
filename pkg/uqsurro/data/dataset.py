"""
Datasets, input schemas, splitting and standardization.
"""
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..core.storage import ArtifactStorage
from ..exceptions import (
    DataError,
    DataParseError,
    DomainError,
    SchemaError,
    ShapeError,
    SplitError,
)
from ..logger import get_logger, log_audit


PARTITIONS = ("train", "val", "test")
DISTRIBUTIONS = ("uniform", "normal", "loguniform")


@dataclass(frozen=True)
class InputParameter:
    """
    One uncertain input: bounds, sampling distribution and nominal value.

    Normal inputs use ``nominal`` (midpoint by default) as mean and ``sigma``
    (a quarter of the range by default), truncated to the bounds.
    """
    name: str
    lower: float
    upper: float
    distribution: str = "uniform"
    nominal: Optional[float] = None
    sigma: Optional[float] = None

    def validate(self) -> None:
        if not self.name:
            raise SchemaError("Input parameter name cannot be empty")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or not self.lower < self.upper:
            raise SchemaError(f"Input '{self.name}': lower bound must be below upper bound")
        if self.distribution not in DISTRIBUTIONS:
            raise SchemaError(f"Input '{self.name}': unknown distribution '{self.distribution}'")
        if self.distribution == "loguniform" and self.lower <= 0:
            raise SchemaError(f"Input '{self.name}': log-uniform bounds must be positive")
        if self.distribution == "normal" and self.sigma is not None and self.sigma <= 0:
            raise SchemaError(f"Input '{self.name}': sigma must be positive")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lower + self.upper) if self.nominal is None else float(self.nominal)

    @property
    def scale(self) -> float:
        return (self.upper - self.lower) / 4.0 if self.sigma is None else float(self.sigma)

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        """Map unit-interval values through the parameter's distribution."""
        u = np.asarray(u, dtype=float)
        if self.distribution == "uniform":
            return self.lower + u * (self.upper - self.lower)
        if self.distribution == "loguniform":
            lo, hi = np.log10(self.lower), np.log10(self.upper)
            return np.power(10.0, lo + u * (hi - lo))
        a = (self.lower - self.mean) / self.scale
        b = (self.upper - self.mean) / self.scale
        return stats.truncnorm.ppf(u, a, b, loc=self.mean, scale=self.scale)

    def to_dict(self) -> dict:
        return {"name": self.name, "lower": self.lower, "upper": self.upper,
                "distribution": self.distribution, "nominal": self.nominal, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, data: dict) -> 'InputParameter':
        return cls(name=data["name"], lower=float(data["lower"]), upper=float(data["upper"]),
                   distribution=data.get("distribution", "uniform"),
                   nominal=data.get("nominal"), sigma=data.get("sigma"))


@dataclass(frozen=True)
class InputSchema:
    """
    Ordered list of uncertain inputs.
    """
    parameters: Tuple[InputParameter, ...]

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            SchemaError: On an empty schema, duplicate names or invalid parameters
        """
        if not self.parameters:
            raise SchemaError("Input schema cannot be empty")
        for parameter in self.parameters:
            parameter.validate()
        if len(set(self.names)) != len(self.names):
            raise SchemaError("Input names must be unique")

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.parameters]

    @property
    def dimension(self) -> int:
        return len(self.parameters)

    @property
    def bounds(self) -> Dict[str, Tuple[float, float]]:
        return {p.name: (p.lower, p.upper) for p in self.parameters}

    def nominal(self) -> np.ndarray:
        return np.array([p.mean for p in self.parameters])

    def from_unit(self, unit_design: np.ndarray) -> np.ndarray:
        """Map an (n, d) unit-hypercube design column by column."""
        unit_design = np.asarray(unit_design, dtype=float)
        if unit_design.ndim != 2 or unit_design.shape[1] != self.dimension:
            raise ShapeError(f"Design must have {self.dimension} columns")
        return np.column_stack([p.from_unit(unit_design[:, j]) for j, p in enumerate(self.parameters)])

    def check_bounds(self, design: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """
        Check a design against the schema bounds.

        Raises:
            DomainError: Naming the first out-of-bounds column
        """
        design = np.atleast_2d(np.asarray(design, dtype=float))
        if design.shape[1] != self.dimension:
            raise ShapeError(f"Design must have {self.dimension} columns, got {design.shape[1]}")
        if not np.all(np.isfinite(design)):
            raise DomainError("Design contains non-finite values")
        for j, p in enumerate(self.parameters):
            span = tol * max(1.0, abs(p.upper - p.lower))
            if np.any(design[:, j] < p.lower - span) or np.any(design[:, j] > p.upper + span):
                raise DomainError(f"Input '{p.name}' outside its bounds [{p.lower}, {p.upper}]")
        return design

    def to_dict(self) -> dict:
        return {"parameters": [p.to_dict() for p in self.parameters]}

    @classmethod
    def from_dict(cls, data: dict) -> 'InputSchema':
        return cls(tuple(InputParameter.from_dict(p) for p in data["parameters"]))


@dataclass
class Dataset:
    """
    Input matrix, output matrix, column names and an optional row partition.
    """
    inputs: np.ndarray
    outputs: np.ndarray
    input_names: List[str]
    output_names: List[str]
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    partition: Optional[np.ndarray] = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        outputs = np.asarray(self.outputs, dtype=float)
        self.outputs = outputs[:, np.newaxis] if outputs.ndim == 1 else outputs
        self.input_names = list(self.input_names)
        self.output_names = list(self.output_names)
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ShapeError("Inputs and outputs must have the same number of rows")
        if self.inputs.shape[1] != len(self.input_names) or self.outputs.shape[1] != len(self.output_names):
            raise ShapeError("Column names do not match the data")
        names = self.input_names + self.output_names
        if len(set(names)) != len(names):
            raise SchemaError("Column names must be unique")
        if np.isnan(self.inputs).any() or np.isnan(self.outputs).any():
            raise DataError("Dataset contains NaN values")
        if self.partition is not None:
            self.partition = np.asarray(self.partition, dtype=object)
            if self.partition.shape != (self.n_rows,):
                raise ShapeError("Partition must tag every row")
            if not set(self.partition.tolist()) <= set(PARTITIONS):
                raise SplitError(f"Partition tags must be among {PARTITIONS}")

    @property
    def n_rows(self) -> int:
        return int(self.inputs.shape[0])

    def partition_indices(self, tag: str) -> np.ndarray:
        """Row indices carrying a partition tag; every row counts as training when unpartitioned."""
        if tag not in PARTITIONS:
            raise SplitError(f"Unknown partition '{tag}'")
        if self.partition is None:
            return np.arange(self.n_rows) if tag == "train" else np.arange(0)
        return np.flatnonzero(self.partition == tag)

    def partition_arrays(self, tag: str) -> Tuple[np.ndarray, np.ndarray]:
        rows = self.partition_indices(tag)
        return self.inputs[rows], self.outputs[rows]

    def partition_sizes(self) -> Dict[str, int]:
        return {tag: int(self.partition_indices(tag).size) for tag in PARTITIONS}

    def with_outputs(self, outputs: np.ndarray, names: Sequence[str]) -> 'Dataset':
        """Same inputs and partition, new responses."""
        return replace(self, outputs=outputs, output_names=list(names))

    def with_partition(self, partition: np.ndarray) -> 'Dataset':
        return replace(self, partition=partition)

    def select_output(self, name: str) -> 'Dataset':
        """Dataset restricted to a single response."""
        if name not in self.output_names:
            raise SchemaError(f"Unknown response '{name}'")
        column = self.output_names.index(name)
        return self.with_outputs(self.outputs[:, [column]], [name])

    def describe(self) -> Dict[str, Dict[str, float]]:
        """Per-column min and max."""
        summary = {}
        for j, name in enumerate(self.input_names):
            summary[name] = {"min": float(self.inputs[:, j].min()), "max": float(self.inputs[:, j].max())}
        for j, name in enumerate(self.output_names):
            summary[name] = {"min": float(self.outputs[:, j].min()), "max": float(self.outputs[:, j].max())}
        return summary

    def to_frame(self, include_partition: bool = False) -> pd.DataFrame:
        """Inputs then outputs, one row per sample."""
        frame = pd.DataFrame(np.hstack([self.inputs, self.outputs]),
                             columns=self.input_names + self.output_names)
        if include_partition and self.partition is not None:
            frame["partition"] = self.partition
        return frame


def load_dataset(path: str, input_names: Sequence[str], output_names: Sequence[str]) -> Dataset:
    """
    Load a dataset from a CSV file with a header row.

    Args:
        path: CSV file path
        input_names: Columns to read as inputs
        output_names: Columns to read as outputs

    Returns:
        Dataset with the named columns

    Raises:
        DataParseError: On a missing file or column, a non-numeric cell or an empty file
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise DataParseError(f"File not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataParseError(f"File is empty: {path}")
    except pd.errors.ParserError as e:
        raise DataParseError(f"Malformed CSV file {path}: {e}")

    for name in list(input_names) + list(output_names):
        if name not in frame.columns:
            raise DataParseError(f"Missing column in {path}", column=name)
    if frame.shape[0] == 0:
        raise DataParseError(f"File has a header but no data rows: {path}")

    columns = {}
    for name in list(input_names) + list(output_names):
        raw = frame[name].str.strip()
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            first = int(np.flatnonzero(bad)[0])
            # line numbers count the header as line 1
            raise DataParseError(f"Non-numeric cell '{raw.iloc[first]}'", row=first + 2, column=name)
        columns[name] = values

    dataset = Dataset(
        inputs=np.column_stack([columns[n] for n in input_names]),
        outputs=np.column_stack([columns[n] for n in output_names]),
        input_names=list(input_names),
        output_names=list(output_names),
    )
    log_audit("LOAD_DATASET", {"path": path, "rows": dataset.n_rows, "columns": dataset.describe()})
    return dataset


def write_dataset(path: str, dataset: Dataset, include_partition: bool = False) -> str:
    """
    Write a dataset as CSV (inputs then outputs).

    Returns:
        Path of the written file
    """
    directory, filename = os.path.split(os.path.abspath(path))
    return ArtifactStorage(directory).write_frame(filename, dataset.to_frame(include_partition))


def partition_sizes(n_rows: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    """
    Floor-based partition sizes; the remainder goes to training.

    Raises:
        SplitError: On invalid fractions or an empty partition
    """
    if len(fractions) != 3 or any(not f > 0 for f in fractions):
        raise SplitError("Split fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"Split fractions must sum to 1, got {sum(fractions)}")
    n_val = int(np.floor(n_rows * fractions[1] + 1e-9))
    n_test = int(np.floor(n_rows * fractions[2] + 1e-9))
    n_train = n_rows - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(
            f"Split of {n_rows} rows at {tuple(fractions)} leaves an empty partition "
            f"({n_train}/{n_val}/{n_test})")
    return n_train, n_val, n_test


def split(data: Dataset, fractions: Sequence[float], rng: np.random.Generator) -> Dataset:
    """
    Randomly assign rows to train/val/test partitions.

    Args:
        data: Dataset to partition
        fractions: (train, val, test) fractions summing to 1
        rng: Random stream for the shuffle

    Returns:
        Dataset with the partition set

    Raises:
        SplitError: If any partition would be empty
    """
    n_train, n_val, _ = partition_sizes(data.n_rows, fractions)
    order = rng.permutation(data.n_rows)
    partition = np.empty(data.n_rows, dtype=object)
    partition[order[:n_train]] = "train"
    partition[order[n_train:n_train + n_val]] = "val"
    partition[order[n_train + n_val:]] = "test"
    return data.with_partition(partition)


@dataclass
class Scaler:
    """
    Affine standardization fitted on the training partition.
    """
    input_shift: np.ndarray
    input_scale: np.ndarray
    output_shift: Optional[np.ndarray] = None
    output_scale: Optional[np.ndarray] = None
    flagged: List[str] = field(default_factory=list)

    def transform_inputs(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.input_shift) / self.input_scale

    def inverse_inputs(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.input_scale + self.input_shift

    def transform_outputs(self, Y: np.ndarray) -> np.ndarray:
        if self.output_shift is None:
            return np.asarray(Y, dtype=float)
        return (np.asarray(Y, dtype=float) - self.output_shift) / self.output_scale

    def inverse_outputs(self, Z: np.ndarray) -> np.ndarray:
        if self.output_shift is None:
            return np.asarray(Z, dtype=float)
        return np.asarray(Z, dtype=float) * self.output_scale + self.output_shift

    def output_affine(self, column: int) -> Tuple[float, float]:
        """(shift, scale) mapping standardized response `column` back to response units."""
        if self.output_shift is None:
            return 0.0, 1.0
        return float(self.output_shift[column]), float(self.output_scale[column])

    def to_dict(self) -> dict:
        return {
            "input_shift": self.input_shift, "input_scale": self.input_scale,
            "output_shift": self.output_shift, "output_scale": self.output_scale,
            "flagged": list(self.flagged),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Scaler':
        def arr(key):
            return None if data.get(key) is None else np.asarray(data[key], dtype=float)
        return cls(arr("input_shift"), arr("input_scale"), arr("output_shift"), arr("output_scale"),
                   list(data.get("flagged", [])))


def _fit_affine(values: np.ndarray, names: Sequence[str], flagged: List[str]) -> Tuple[np.ndarray, np.ndarray]:
    shift = values.mean(axis=0)
    scale = values.std(axis=0)
    for j, name in enumerate(names):
        if not scale[j] > 0:
            get_logger().warning("Column '%s' is constant on the training partition; using unit scale", name)
            flagged.append(name)
            scale[j] = 1.0
    return shift, scale


def standardize(data: Dataset, outputs: bool = False, inputs: bool = True) -> Tuple[Dataset, Scaler]:
    """
    Standardize inputs (and optionally outputs) with training-partition statistics.

    Args:
        data: Dataset, partitioned or not
        outputs: Also standardize the responses
        inputs: Standardize the inputs; when False they pass through unchanged

    Returns:
        (standardized dataset, fitted scaler)

    Raises:
        SplitError: If the training partition is empty
    """
    X_train, Y_train = data.partition_arrays("train")
    if X_train.shape[0] == 0:
        raise SplitError("Cannot standardize without training rows")
    flagged: List[str] = []
    if inputs:
        input_shift, input_scale = _fit_affine(X_train, data.input_names, flagged)
    else:
        input_shift, input_scale = np.zeros(X_train.shape[1]), np.ones(X_train.shape[1])
    scaler = Scaler(input_shift, input_scale, flagged=flagged)
    if outputs:
        scaler.output_shift, scaler.output_scale = _fit_affine(Y_train, data.output_names, flagged)
    scaled = replace(data, inputs=scaler.transform_inputs(data.inputs),
                     outputs=scaler.transform_outputs(data.outputs))
    return scaled, scaler
