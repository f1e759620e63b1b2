"""Training objective terms as stateless scalar functions.

L1 for reconstruction and cycle consistency, least-squares GAN terms for the
adversarial part, and the weighted total.  Inputs may be ``Projection``
objects or plain arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "LossWeights",
    "DiscriminatorScores",
    "reconstruction_loss",
    "cycle_consistency_loss",
    "adversarial_loss_generator",
    "adversarial_loss_discriminator",
    "total_loss",
]


def _array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _mean_abs_diff(a, b, what) -> float:
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise ValueError(f"{what} shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class LossWeights:
    lambda_cyc: float = 1.0
    lambda_rec: float = 10.0
    lambda_adv: float = 1.0

    def __post_init__(self):
        for name in ("lambda_cyc", "lambda_rec", "lambda_adv"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
            object.__setattr__(self, name, v)


@dataclass
class DiscriminatorScores:
    """Per-scale discriminator outputs for paired real and synthesized images."""

    real: Sequence[np.ndarray] = field(default_factory=list)
    fake: Sequence[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.real = [np.asarray(r, dtype=np.float64) for r in self.real]
        self.fake = [np.asarray(f, dtype=np.float64) for f in self.fake]
        if not self.real and not self.fake:
            raise ValueError("discriminator scores need at least one scale")
        if self.real and self.fake:
            if len(self.real) != len(self.fake):
                raise ValueError("real and fake score lists have different scale counts")
            for r, f in zip(self.real, self.fake):
                if r.shape != f.shape:
                    raise ValueError(f"score map shape mismatch: {r.shape} vs {f.shape}")


def reconstruction_loss(pred, truth) -> float:
    return _mean_abs_diff(pred, truth, "reconstruction")


def cycle_consistency_loss(reencoded, reference) -> float:
    """``mean|dg| + mean|dt|`` over (geometry map, texture vector) pairs."""
    (g1, t1), (g2, t2) = reencoded, reference
    return _mean_abs_diff(g1, g2, "geometry feature") + _mean_abs_diff(t1, t2, "texture")


def adversarial_loss_generator(scores: DiscriminatorScores) -> float:
    if not scores.fake:
        raise ValueError("generator loss needs fake scores")
    return float(np.mean([np.mean((f - 1.0) ** 2) for f in scores.fake]))


def adversarial_loss_discriminator(scores: DiscriminatorScores) -> float:
    if not (scores.real and scores.fake):
        raise ValueError("discriminator loss needs real and fake scores")
    per_scale = [
        0.5 * np.mean((r - 1.0) ** 2) + 0.5 * np.mean(f**2)
        for r, f in zip(scores.real, scores.fake)
    ]
    return float(np.mean(per_scale))


def total_loss(cyc: float, rec: float, adv: float, weights: LossWeights = LossWeights()) -> float:
    return math.fsum((weights.lambda_cyc * cyc, weights.lambda_rec * rec, weights.lambda_adv * adv))
