"""Ride-duration prediction from route topology and training load."""

from .checkpoint import progressive_predictions, truncate_route, whatif
from .dataset import Dataset, FeatureConfig, assemble, feature_names, read_store, write_store
from .explain import Attribution, global_importance, shap_linear
from .ingest import RouteProfile, TrackPoint, parse_gpx, profile_from_gpx, resample_profile
from .regression import TrainedLinearModel, fit_elasticnet, fit_lasso, fit_ols, fit_ridge
from .topology import detect_climbs, extract_topology
from .validation import nested_cv, run_cv, stratified_folds

__version__ = "0.1.0"

__all__ = [
    "Attribution",
    "Dataset",
    "FeatureConfig",
    "RouteProfile",
    "TrackPoint",
    "TrainedLinearModel",
    "assemble",
    "detect_climbs",
    "extract_topology",
    "feature_names",
    "fit_elasticnet",
    "fit_lasso",
    "fit_ols",
    "fit_ridge",
    "global_importance",
    "nested_cv",
    "parse_gpx",
    "profile_from_gpx",
    "progressive_predictions",
    "read_store",
    "resample_profile",
    "run_cv",
    "shap_linear",
    "stratified_folds",
    "truncate_route",
    "whatif",
    "write_store",
]
