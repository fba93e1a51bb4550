"""Zero-shot classification by visual-semantic regression.

Single- and multi-task embedding regressors, importance weighting of
auxiliary data for covariate shift, nearest-neighbour zero-shot
matching, a synthetic benchmark generator and an experiment CLI.
"""

from .backends import gaussian_kernel, get_backend, have_compiled, set_backend
from .data import (
    ClassSplit,
    Dataset,
    HyperParams,
    concat_datasets,
    load_manifest,
    make_splits,
    one_hot,
    save_manifest,
)
from .embedding import (
    ClassEmbeddingTable,
    WordVectorTable,
    build_class_table,
    embed_class_name,
    instance_embeddings,
    load_word_vectors,
    tokenize,
)
from .errors import ConfigError, ConvergenceError, DataError, ZslError
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    cross_validate,
    emit_table,
    parse_config,
    run_experiment,
)
from .kliep import (
    ImportanceWeights,
    KliepModel,
    apply_weights,
    gaussian_kernel_matrix,
    kliep_fit,
    load_weights,
    save_weights,
)
from .matching import (
    Prediction,
    accuracy,
    match_distributed,
    match_latent,
    mean_average_precision,
)
from .matrix_io import load_matrix, save_matrix
from .regressors import (
    FitReport,
    MtlModel,
    StlModel,
    gomtl_fit,
    latent_project,
    load_model,
    mte_fit,
    predict,
    ridge_fit,
    rmtl_fit,
    save_model,
)
from .synth import SyntheticSpec, generate, generate_augmentation

__version__ = "0.1.0"

__all__ = [
    "ClassEmbeddingTable",
    "ClassSplit",
    "ConfigError",
    "ConvergenceError",
    "Dataset",
    "DataError",
    "ExperimentConfig",
    "ExperimentReport",
    "FitReport",
    "HyperParams",
    "ImportanceWeights",
    "KliepModel",
    "MtlModel",
    "Prediction",
    "StlModel",
    "SyntheticSpec",
    "WordVectorTable",
    "ZslError",
    "accuracy",
    "apply_weights",
    "build_class_table",
    "concat_datasets",
    "cross_validate",
    "embed_class_name",
    "emit_table",
    "gaussian_kernel",
    "gaussian_kernel_matrix",
    "generate",
    "generate_augmentation",
    "get_backend",
    "gomtl_fit",
    "have_compiled",
    "instance_embeddings",
    "kliep_fit",
    "latent_project",
    "load_manifest",
    "load_matrix",
    "load_model",
    "load_weights",
    "load_word_vectors",
    "make_splits",
    "match_distributed",
    "match_latent",
    "mean_average_precision",
    "mte_fit",
    "one_hot",
    "parse_config",
    "predict",
    "ridge_fit",
    "rmtl_fit",
    "run_experiment",
    "save_manifest",
    "save_matrix",
    "save_model",
    "save_weights",
    "set_backend",
    "tokenize",
]
