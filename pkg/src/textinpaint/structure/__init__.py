"""Structure prediction: foreground-map U-Net, its losses, and training."""

from .features import FeatureExtractor, IdentityFeatures
from .losses import (combined_loss_and_grad, gram, loss_cha, loss_combined,
                     loss_pix, loss_seg, loss_sty)
from .net import SegUNet
from .training import (StructureTrainConfig, TrainReport,
                       records_to_structure_arrays, train_structure)

__all__ = [
    "FeatureExtractor", "IdentityFeatures", "SegUNet",
    "loss_pix", "loss_seg", "loss_cha", "loss_sty", "loss_combined",
    "gram", "combined_loss_and_grad",
    "StructureTrainConfig", "TrainReport", "train_structure",
    "records_to_structure_arrays",
]
