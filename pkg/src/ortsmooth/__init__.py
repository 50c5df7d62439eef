"""Jump-preserving smoothing of lattice data with oblique regression trees."""

__version__ = "0.1.0"

from .lattice import LatticeError, LatticeField, PointSet, coord_to_nearest_index, index_to_coord
from .tree import (
    InvalidSplitError,
    LeafPartition,
    NodeStats,
    SplitRule,
    TreeConfig,
    audit_leaves,
    best_split,
    grow_tree,
    impurity_gain,
    locate_leaf,
    simplified_gain,
)
from .smoother import (
    SmootherConfig,
    denoise,
    estimate_sigma,
    leaf_mean_estimate,
    local_weighted_estimate,
    neighborhood,
    patch_distance2,
    similarity_score,
)
from .synth import NoiseModel, PiecewiseSpec, add_noise, render, tetrahedron_spec, triangle_spec, two_region_spec
from .metrics import EdgeSet, UndefinedMetricError, d_kq, detect_edges, psnr, remse, rmse
from .io import FormatError, read_field, read_image, read_tensor, write_field, write_image, write_tensor
