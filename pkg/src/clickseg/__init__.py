"""Click-guided interactive segmentation.

Simulated or human clicks become binary-disk guidance channels for an
interactive U-Net; a distance-weighted dice loss emphasizes region
boundaries and clicked areas. The package covers click simulation, weight
maps, the loss and its analytic gradient, the network, datasets, a training
and ablation harness, and an HTTP inference service.
"""

from .errors import ClickSegError
from .guidance import (Click, ClickSet, ClickSizePolicy, GuidanceMaps,
                       Polarity, SizeMode, compute_click_size,
                       estimate_test_time_size, render_guidance,
                       simulate_interaction)
from .kernels import BACKEND as KERNEL_BACKEND
from .losses import (DiceVariant, LossConfig, WeightingMode, binarize, dsc,
                     dice_loss, loss_gradient, weighted_dice_loss)
from .weighting import (ClickWeightMode, WeightConfig, WeightMap,
                        click_weight_map, fuse_weight_maps,
                        gaussian_boundary_map)

__version__ = "0.1.0"

__all__ = [
    "Click",
    "ClickSet",
    "ClickSegError",
    "ClickSizePolicy",
    "ClickWeightMode",
    "DiceVariant",
    "GuidanceMaps",
    "KERNEL_BACKEND",
    "LossConfig",
    "Polarity",
    "SizeMode",
    "WeightConfig",
    "WeightMap",
    "WeightingMode",
    "binarize",
    "click_weight_map",
    "compute_click_size",
    "dice_loss",
    "dsc",
    "estimate_test_time_size",
    "fuse_weight_maps",
    "gaussian_boundary_map",
    "loss_gradient",
    "render_guidance",
    "simulate_interaction",
    "weighted_dice_loss",
    "__version__",
]
