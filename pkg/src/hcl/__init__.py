"""Contrastive self-supervised learning with a feature-space hallucinator.

Small, CPU-only toolkit: a numpy-backed reverse-mode autodiff core, MoCo-,
SimCLR- and SimSiam-style Siamese frameworks, a plug-in hallucinator that
synthesizes extra hard positive pairs by asymmetric feature extrapolation
plus a learnable non-linear transform, and the diagnostics used to study it
(positive-pair cosine similarity, Gaussian-potential uniformity, linear probe).
"""

__version__ = "0.1.0"

from .tensor import Tensor, Parameter, ShapeMismatchError, NonFiniteError

__all__ = ["Tensor", "Parameter", "ShapeMismatchError", "NonFiniteError", "__version__"]
