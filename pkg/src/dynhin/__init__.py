"""Temporal multi-view embeddings for dynamic heterogeneous information networks."""

from .__about__ import __version__
from .config import RunConfig
from .errors import DataError, DynhinError, TrainingDivergedError
from .estimator import TemporalViewEmbedder
from .evaluation import LogisticHead, classify_eval, rank_eval
from .graph import (
    NodeUniverse,
    Schema,
    SnapshotSeries,
    SparseMatrix,
    load_schema,
    load_snapshots,
    spmm,
)
from .objectives import (
    ClassificationLabels,
    InteractionSplit,
    leave_one_out_split,
    load_labels,
    sample_negatives,
)
from .synth import SyntheticSpec, generate, write_files
from .training import EmbeddingModel, Hyperparams, compute_embeddings, train
from .views import MetaPath, ViewSeries, build_views, commuting_matrix, parse_metapath, pathsim, pathsim_series

__all__ = [
    "__version__",
    "ClassificationLabels",
    "DataError",
    "DynhinError",
    "EmbeddingModel",
    "Hyperparams",
    "InteractionSplit",
    "LogisticHead",
    "MetaPath",
    "NodeUniverse",
    "RunConfig",
    "Schema",
    "SnapshotSeries",
    "SparseMatrix",
    "SyntheticSpec",
    "TemporalViewEmbedder",
    "TrainingDivergedError",
    "ViewSeries",
    "build_views",
    "classify_eval",
    "commuting_matrix",
    "compute_embeddings",
    "generate",
    "leave_one_out_split",
    "load_labels",
    "load_schema",
    "load_snapshots",
    "parse_metapath",
    "pathsim",
    "pathsim_series",
    "rank_eval",
    "sample_negatives",
    "spmm",
    "train",
    "write_files",
]
