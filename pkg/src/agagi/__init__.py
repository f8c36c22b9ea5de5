"""Gated-fusion text classifier built on a small reverse-mode tensor engine.

Corpus-level label-count statistics are projected into the semantic feature
space, admitted through a confidence-band gate, pooled by per-feature
attention over positions, and regularized with leaky dropout.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
