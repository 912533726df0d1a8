"""Soft voting: combine per-classifier probabilities by their arithmetic mean.

Means are computed with math.fsum (a correctly rounded sum) and clamped into
the [min, max] envelope of the member values. That keeps the three identities
callers rely on exact in floating point: reordering members never changes the
output, the mean never leaves the envelope, and averaging k copies of one
member returns that member bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boosting import BoostedModel, predict_proba


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """An ordered, named collection of boosted models voting with equal weight."""

    members: tuple[BoostedModel, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        if len(self.names) != len(self.members):
            raise ValueError("one name per member required")
        widths = {m.n_features for m in self.members}
        if len(widths) != 1:
            raise ValueError(f"members disagree on feature count: {sorted(widths)}")

    def predict_proba(self, data, n_threads: int = 1) -> np.ndarray:
        return soft_vote([predict_proba(m, data, n_threads=n_threads) for m in self.members])


def soft_vote(member_probs: list[np.ndarray]) -> np.ndarray:
    """Per-row arithmetic mean of the members' P(malignant) columns."""
    if not member_probs:
        raise ValueError("soft_vote needs at least one member")
    columns = [np.asarray(p, dtype=np.float64) for p in member_probs]
    n = len(columns[0])
    for c in columns:
        if c.ndim != 1 or len(c) != n:
            raise ValueError("members must supply equal-length probability lists")
        if np.any((c < 0) | (c > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
    k = len(columns)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        values = [c[i] for c in columns]
        mean = math.fsum(values) / k
        out[i] = min(max(mean, min(values)), max(values))
    return out


def decide(probabilities: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Label 1 (malignant) iff P(malignant) >= threshold. The >= makes an
    exact tie at the default 0.5 resolve toward malignant."""
    probs = np.asarray(probabilities, dtype=np.float64)
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return (probs >= threshold).astype(np.int8)
