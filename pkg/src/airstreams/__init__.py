"""airstreams: a desk-scale lab for multi-stream video recognition.

Three recognition streams (RGB, differentiable optical flow, learned
semantic segmentation) are fused mid-network and trained with five
independently weighted losses whose weights can be optimized by tournament
evolution. Everything runs on tiny synthetic videos with exact ground-truth
flow and masks.
"""

__version__ = "0.1.0"

from .tensor import Tensor, GradientTape, backward, no_grad, tape_scope

__all__ = ["Tensor", "GradientTape", "backward", "no_grad", "tape_scope", "__version__"]
