"""tabnoise: fit/apply tabular preprocessing with seeded stochastic perturbations."""

from .errors import (
    BasisFormatError,
    ConfigError,
    SchemaError,
    SeedExhaustedError,
    TableError,
    TabnoiseError,
)
from .pipeline import (
    AugmentSpec,
    FitConfig,
    FitResult,
    TransformBasis,
    apply,
    apply_with_stats,
    augment,
    fit,
    load_basis,
    orig_headers_mode,
    save_basis,
)
from .sampling import GeneratorSpec, SamplingPlan, SeedReport, rescale_budget
from .table import DataTable, FeatureKind, infer_feature_kind, load_csv, suffixed_name, write_csv

__version__ = "0.1.0"

__all__ = [
    "AugmentSpec",
    "BasisFormatError",
    "ConfigError",
    "DataTable",
    "FeatureKind",
    "FitConfig",
    "FitResult",
    "GeneratorSpec",
    "SamplingPlan",
    "SchemaError",
    "SeedExhaustedError",
    "SeedReport",
    "TableError",
    "TabnoiseError",
    "TransformBasis",
    "apply",
    "apply_with_stats",
    "augment",
    "fit",
    "infer_feature_kind",
    "load_csv",
    "load_basis",
    "orig_headers_mode",
    "rescale_budget",
    "save_basis",
    "suffixed_name",
    "write_csv",
    "__version__",
]
