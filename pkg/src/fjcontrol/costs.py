"""Engagement and mitigation cost functions.

The recommender's stage cost has two parts: an engagement term (squared
distance between user sentiment and the recommended content value) and an
extremity penalty scaled by the penalty strength, the network size, and an
exponential novelty factor.  All functions here are pure and safe for
concurrent evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ContentWindowError(ValueError):
    """Content older than the eligible window was passed to a cost function."""


@dataclass(frozen=True)
class CostParams:
    """Penalty strength, novelty decay rate, and eligible content window.

    The novelty rate is named ``delta_novelty`` to keep it visually distinct
    from per-user stubbornness.
    """

    rho: float
    delta_novelty: float = 0.0
    window_z: int = 5

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.delta_novelty < 0:
            raise ValueError(f"delta_novelty must be >= 0, got {self.delta_novelty}")
        if self.window_z < 1:
            raise ValueError(f"window_z must be >= 1, got {self.window_z}")


def engagement_cost(x, u: float) -> float:
    """Squared Euclidean distance between user states and the broadcast value.

    Returns sum_i (x_i - u)^2.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must be in [0, 1], got {u}")
    x = np.asarray(x, dtype=float)
    return float(np.sum((x - u) ** 2))


def novelty_factor(t: int, t_c: int, params: CostParams) -> float:
    """Exponential decay exp(-delta_novelty * (t - t_c)) of the content age.

    Callers must filter eligibility first: ages beyond the window raise
    ContentWindowError rather than silently extending the penalty.
    """
    age = t - t_c
    if age < 0:
        raise ValueError(f"content appears in the future: t={t} < t_c={t_c}")
    if age > params.window_z:
        raise ContentWindowError(
            f"content age {age} exceeds the eligible window z={params.window_z}"
        )
    return math.exp(-params.delta_novelty * age)


def mitigation_cost(x, u: float, t: int, t_c: int, params: CostParams) -> float:
    """Engagement cost plus the extremity penalty rho * n * u^2 * novelty.

    Strictly convex in u; reduces exactly to :func:`engagement_cost` when
    rho = 0 or u = 0.
    """
    x = np.asarray(x, dtype=float)
    penalty = params.rho * x.size * u * u * novelty_factor(t, t_c, params)
    return engagement_cost(x, u) + penalty
