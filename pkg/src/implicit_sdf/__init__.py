"""Signed distance functions learned from point clouds with an Eikonal-regularized MLP."""

from .geometry import (
    Aabb, MetricReport, PointCloud, PointCloudParseError, bounding_box, kth_nn_distance,
    nearest_distances, read_point_cloud, set_distances, write_point_cloud,
)
from .kernels import BACKEND
from .levelset import (
    GridField, GridSpec, Mesh, Polyline2D, evaluate_grid, marching_cubes, marching_squares,
    sdf_relative_error,
)
from .network import (
    Network, NetworkSpec, ParamGradient, backward, evaluate, forward_dual, forward_dual_batch,
    geometric_init, load_network, save_network,
)
from .training import (
    AutoDecoderSchedule, LossParams, LossReport, NumericalError, SamplerD, Schedule,
    infer_latent, loss_eval, train_auto_decoder, train_single_shape,
)

__version__ = "0.1.0"
