"""Desk-scale laboratory for corroded text image synthesis and restoration.

Pipeline: synthesize text images with exact segmentation ground truth,
corrode them with procedural masks, train a structure predictor and a
conditional diffusion reconstructor on the resulting records, and score
restorations with image-quality and recognition metrics.
"""

from .imgcore import (ImageTensor, MaskBitmap, SegMap, read_png,
                      resize_to_canonical, to_model_range, to_unit_range,
                      write_png)

__version__ = "0.1.0"

__all__ = [
    "ImageTensor", "MaskBitmap", "SegMap",
    "to_model_range", "to_unit_range", "resize_to_canonical",
    "read_png", "write_png",
]
