"""Bernoulli-Voronoi percolation on products of regular trees and the ideal
Poisson-Voronoi tessellation sampled through horofunctions."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

from .errors import (
    CertificationError,
    ConfigError,
    EmptyTessellationError,
    HypothesisError,
    ParameterError,
    SamplingError,
    TreeVoronoiError,
)
from .tree_graph import (
    TreeParams,
    ball_enumerate,
    ball_size,
    product_ball,
    sphere_size,
    threshold_radius,
    vertex_distance,
)
from .horofunction import (
    DistanceLikeFunction,
    End,
    Finite,
    apply_balanced_shift,
    horo_eval,
    level_set_measure,
    sample_harmonic_end,
)
from .voronoi import (
    Tessellation,
    Window,
    bond_encoding,
    build_tessellation,
    certified_window_tessellation,
    delaunay_adjacency,
    sample_bernoulli_nuclei,
)
from .ipvt import IpvtSample, WallSet, ideal_tessellation, sample_ipvt, wall
from .percolation import (
    ColoredTessellation,
    cluster_frequency_srw,
    color_and_cluster,
    local_uniqueness_event,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    diagram_tv_distance,
    estimate_event,
    theta_ratio_diagnostic,
)
