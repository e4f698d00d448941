"""Model-agnostic per-fragment impact explanations for time series.

A specimen series is split into fragments in one of four domains (time
slices, frequency bands by patching or filtering, or summary statistics);
fragment impacts on each class probability are estimated from model
queries on perturbed series and satisfy the additivity identity
sum(phi) = f(x) - f(h_x(0)).
"""

from .core import (
    ClassExplanation,
    ImpactVector,
    LabeledDataset,
    SimplifiedInput,
    TimeSeries,
    validate_dataset,
)
from .errors import DataError, ModelError, TsimpactError
from .explain import (
    ExplainConfig,
    ImpactExplainer,
    SingleExplanation,
    explain_classifier,
    explain_single,
)
from .io import (
    ExplanationDocument,
    emit_plot_data,
    parse_explanation,
    read_explanation,
    read_ucr,
    serialize_explanation,
    write_explanation,
    write_ucr,
)
from .mappings import (
    BandAssignment,
    MappingFunction,
    ReplacementStrategy,
    SliceAssignment,
    apply_mapping,
    make_band_assignment,
    make_mapping,
    make_slice_assignment,
)
from .models import (
    ExternalModelClient,
    KnnTimeSeriesClassifier,
    SpectrumCentroidClassifier,
    external_model,
    knn_model,
    spectrum_centroid_model,
)
from .shap import exact_shapley, sample_coalitions, shapley_kernel_weight, solve_explanation
from .similarity import (
    SimilarityMatrix,
    build_matrix,
    matrix_to_csv,
    median_similarity,
    pearson_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "BandAssignment",
    "ClassExplanation",
    "DataError",
    "ExplainConfig",
    "ExplanationDocument",
    "ExternalModelClient",
    "ImpactExplainer",
    "ImpactVector",
    "KnnTimeSeriesClassifier",
    "LabeledDataset",
    "MappingFunction",
    "ModelError",
    "ReplacementStrategy",
    "SimilarityMatrix",
    "SimplifiedInput",
    "SingleExplanation",
    "SliceAssignment",
    "SpectrumCentroidClassifier",
    "TimeSeries",
    "TsimpactError",
    "apply_mapping",
    "build_matrix",
    "emit_plot_data",
    "exact_shapley",
    "explain_classifier",
    "explain_single",
    "external_model",
    "knn_model",
    "make_band_assignment",
    "make_mapping",
    "make_slice_assignment",
    "matrix_to_csv",
    "median_similarity",
    "parse_explanation",
    "pearson_similarity",
    "read_explanation",
    "read_ucr",
    "sample_coalitions",
    "serialize_explanation",
    "shapley_kernel_weight",
    "solve_explanation",
    "spectrum_centroid_model",
    "validate_dataset",
    "write_explanation",
    "write_ucr",
    "__version__",
]
