"""Quantify and learn linear symmetry-based disentanglement for products of SO(2) grids."""

__version__ = "0.1.0"

from .errors import (
    DegenerateProjectionError,
    DegenerateSubgroupError,
    IncompleteGridError,
    InvalidInputError,
    ParseError,
    TrainingError,
    UnsupportedSpecError,
)
from .groups import CyclicGrid, GroupGrid, RepParams, compose, direct_sum_apply, inverse, rep_apply, rotation_matrix
from .learner import ConstraintBatch, TrainConfig, l_lsbd, l_lsbd_grad, make_pairs, make_paths, project_torus, train
from .metric import MetricReport, d_lsbd, omega_recovery, pairwise_metric, simple_metric
from .synth import EmbeddingSet, OracleSpec, generate, read_csv, write_csv

__all__ = [
    "ConstraintBatch",
    "CyclicGrid",
    "DegenerateProjectionError",
    "DegenerateSubgroupError",
    "EmbeddingSet",
    "GroupGrid",
    "IncompleteGridError",
    "InvalidInputError",
    "MetricReport",
    "OracleSpec",
    "ParseError",
    "RepParams",
    "TrainConfig",
    "TrainingError",
    "UnsupportedSpecError",
    "compose",
    "d_lsbd",
    "direct_sum_apply",
    "generate",
    "inverse",
    "l_lsbd",
    "l_lsbd_grad",
    "make_pairs",
    "make_paths",
    "omega_recovery",
    "pairwise_metric",
    "project_torus",
    "read_csv",
    "rep_apply",
    "rotation_matrix",
    "simple_metric",
    "train",
    "write_csv",
]
