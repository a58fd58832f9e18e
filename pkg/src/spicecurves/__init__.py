"""ICE curves for black-box regressors and their spatially constrained clustering (SpICE)."""

from .clustgeo import (
    AlphaReport,
    Dendrogram,
    Partition,
    choose_alpha,
    cut,
    mixed_pseudo_inertia,
    partition_inertia,
    pseudo_inertia,
    q_beta,
    spice_curves,
    ward_cluster,
)
from .data import Dataset, Feature, FeatureGrid, Schema, build_grid, load_dataset, stratified_sample, train_test_split
from .fdmetrics import (
    DissimilarityMatrix,
    curve_dissimilarity_matrix,
    normalize,
    sobolev_distance,
    sobolev_norm,
    spatial_dissimilarity_matrix,
)
from .ice import IceBundle, IceCurve, ice_curves, pd_curve
from .predictor import Metrics, Predictor, evaluate, external_predictor, knn_fit, linear_fit
from .smoothing import SmoothBundle, SmoothCurve, default_bandwidth, gaussian_convolve, smooth_bundle

__version__ = "0.1.0"
