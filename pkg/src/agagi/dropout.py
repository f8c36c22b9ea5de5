"""Vanilla dropout and its leaky variant behind one mask interface.

Both sample a keep indicator per element with probability 1 - beta and scale
kept values by 1/(1 - beta).  Vanilla zeroes the dropped elements; the leaky
kind multiplies them by gamma = (1 - beta) / c**2 instead, suppressing rather
than deactivating.  Masks enter the graph as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag

KINDS = ("vanilla", "leaky", "none")


@dataclass(frozen=True)
class DropoutSpec:
    kind: str = "leaky"
    beta: float = 0.5
    c_sup: float = 500.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("unknown dropout kind %r" % (self.kind,))
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("drop rate must lie in [0, 1), got %r" % (self.beta,))
        if self.c_sup < 1.0:
            raise ValueError("suppression constant must be >= 1, got %r" % (self.c_sup,))

    @property
    def gamma(self):
        return (1.0 - self.beta) / (self.c_sup * self.c_sup)


class DropoutSampler:
    """Owns the mask random stream for one training run."""

    def __init__(self, spec):
        self.spec = spec
        self._rng = np.random.default_rng(spec.seed)

    def mask(self, shape, dtype=np.float32):
        return sample_mask(shape, self.spec, self._rng, dtype=dtype)


def sample_mask(shape, spec, rng, dtype=np.float32):
    """Elementwise mask: 1/(1-beta) on kept entries, gamma (leaky) or 0
    (vanilla) on dropped ones."""
    if spec.kind == "none" or spec.beta == 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= spec.beta
    preserved = 1.0 / (1.0 - spec.beta)
    dropped = spec.gamma if spec.kind == "leaky" else 0.0
    return np.where(keep, preserved, dropped).astype(dtype)


def apply(x, spec, sampler=None, mode="train"):
    """Mask ``x`` in training mode; identity in eval mode or when disabled."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval', got %r" % (mode,))
    if mode == "eval" or spec.kind == "none":
        return x
    if sampler is None:
        sampler = DropoutSampler(spec)
    return ag.apply_mask(x, sampler.mask(x.shape, dtype=x.data.dtype))


def expected_mask_mean(spec):
    """Analytic E[mask]: exactly 1 for vanilla, 1 + beta*gamma for leaky."""
    if spec.kind in ("none",):
        return 1.0
    if spec.kind == "vanilla":
        return 1.0
    return 1.0 + spec.beta * spec.gamma
