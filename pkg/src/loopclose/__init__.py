"""Whole-image descriptors and an evaluation harness for visual
loop-closure detection.

Pipelines: global band-pass-filter descriptors (``gist``), quantized
local-feature histograms (``bovw``), aggregate residual and gradient
encodings over a Gaussian mixture (``vlad``, ``fv``), imported network
activations, exact nearest-neighbor matching under Euclidean distance,
and threshold-swept precision-recall evaluation.
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .codebook import GmmModel, Vocabulary, gmm_fit, kmeans_fit, posteriors
from .encoders import Descriptor, encode_bovw, encode_fv, encode_vlad, l2_normalize
from .evaluation import (
    GroundTruth,
    PrCurve,
    average_precision,
    load_ground_truth_csv,
    pr_curve,
)
from .feature_io import (
    LAYER_DIMS,
    expected_layer_dim,
    read_feature_file,
    write_feature_file,
)
from .gist import GaborBank, GistParams, build_gabor_bank, compute_gist
from .imaging import GrayImage, load_grayscale, resize_bilinear
from .local_features import (
    LocalFeatureSet,
    PcaModel,
    apply_pca,
    dense_descriptors,
    fit_pca,
)
from .matching import DescriptorDatabase, Match, detect_loops, nearest_neighbor
from .model_io import load_model, save_model
from .protocol import (
    BenchmarkReport,
    ExperimentConfig,
    ProtocolReport,
    benchmark_extraction,
    load_experiment_config,
    run_protocol,
)

__all__ = [
    "__version__",
    "backend_name",
    "GmmModel",
    "Vocabulary",
    "gmm_fit",
    "kmeans_fit",
    "posteriors",
    "Descriptor",
    "encode_bovw",
    "encode_fv",
    "encode_vlad",
    "l2_normalize",
    "GroundTruth",
    "PrCurve",
    "average_precision",
    "load_ground_truth_csv",
    "pr_curve",
    "LAYER_DIMS",
    "expected_layer_dim",
    "read_feature_file",
    "write_feature_file",
    "GaborBank",
    "GistParams",
    "build_gabor_bank",
    "compute_gist",
    "GrayImage",
    "load_grayscale",
    "resize_bilinear",
    "LocalFeatureSet",
    "PcaModel",
    "apply_pca",
    "dense_descriptors",
    "fit_pca",
    "DescriptorDatabase",
    "Match",
    "detect_loops",
    "nearest_neighbor",
    "load_model",
    "save_model",
    "BenchmarkReport",
    "ExperimentConfig",
    "ProtocolReport",
    "benchmark_extraction",
    "load_experiment_config",
    "run_protocol",
]
