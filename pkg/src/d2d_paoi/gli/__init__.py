"""Geographic-location convolutional scheduler."""

from .grid import DensityGrid, GridSpec, build_density_grids, cell_indices
from .net import (
    NetConfig,
    NetParams,
    OpCounter,
    conv_forward,
    fc_forward,
    gather_link_features,
    infer,
    inference_op_count,
    init_params,
    loss_and_gradients,
    prepare_batch,
)
from .training import TrainingCurve, train
from .weights import WeightsFormatError, load_params, save_params
