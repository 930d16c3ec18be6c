"""Augmentation-aware self-supervised GAN training on a numpy autodiff core."""

from .tensor import NumericError, ShapeError, Tensor

__version__ = "0.1.0"

__all__ = ["Tensor", "ShapeError", "NumericError", "__version__"]
