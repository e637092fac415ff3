"""Experiment design, datasets and synthetic oracle problems."""
from .dataset import (
    Dataset,
    InputParameter,
    InputSchema,
    Scaler,
    load_dataset,
    partition_sizes,
    split,
    standardize,
    write_dataset,
)
from .design import LhsResult, MaximinLatinHypercube, crossed_design, maximin_lhs, min_distance
from .oracles import (
    FGR_SCHEMA,
    ORACLE_VERSION,
    VOID_BC_SCHEMA,
    VOID_MULTIPLIER_SCHEMA,
    VOID_OUTPUTS,
    VOID_SCHEMA,
    fgr_output_names,
    fgr_time_grid,
    gap_grid,
    synth_fgr,
    synth_gap,
    synth_linear,
    synth_voidfraction,
)

__all__ = [
    "Dataset", "InputParameter", "InputSchema", "Scaler", "load_dataset", "partition_sizes",
    "split", "standardize", "write_dataset", "LhsResult", "MaximinLatinHypercube",
    "crossed_design", "maximin_lhs", "min_distance", "FGR_SCHEMA", "ORACLE_VERSION",
    "VOID_BC_SCHEMA", "VOID_MULTIPLIER_SCHEMA", "VOID_OUTPUTS", "VOID_SCHEMA",
    "fgr_output_names", "fgr_time_grid", "gap_grid", "synth_fgr", "synth_gap",
    "synth_linear", "synth_voidfraction",
]
