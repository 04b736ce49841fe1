"""Behavioral metrics for closed-loop runs and Pareto trade-off data.

All functions are pure in (trajectory, corpus).  The engagement quantity is
reported as a COST (squared distance between user sentiment and the
recommendation): lower means tighter alignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .content import Corpus
from .dynamics import Trajectory


class UndefinedMetricError(ValueError):
    """The metric has no value for this input (e.g. zero recommendation events)."""


@dataclass(frozen=True)
class RunMetrics:
    misinformation: float | None
    sentiment_shift_mean: float
    sentiment_shift_median: float
    engagement_cost_mean: float
    engagement_cost_median: float
    rho: float

    def as_dict(self) -> dict:
        return {
            "misinformation": self.misinformation,
            "sentiment_shift_mean": self.sentiment_shift_mean,
            "sentiment_shift_median": self.sentiment_shift_median,
            "engagement_cost_mean": self.engagement_cost_mean,
            "engagement_cost_median": self.engagement_cost_median,
            "rho": self.rho,
        }


def misinformation_ratio(traj: Trajectory, corpus: Corpus) -> float:
    """Fraction of recommendation events whose item is labeled false.

    Events are counted per step (repeated exposure to one item counts each
    time); steps that recommended nothing are excluded from both counts.
    """
    events = [cid for cid in traj.content_ids if cid is not None]
    if not events:
        raise UndefinedMetricError("no recommendation events in trajectory")
    n_false = sum(1 for cid in events if corpus.item_by_id(cid).is_false)
    return n_false / len(events)


def sentiment_shift(traj: Trajectory) -> tuple[float, float]:
    """Mean and median over users of |x_i(tau) - x_i(0)|."""
    if traj.states.shape[0] < 2:
        raise ValueError("trajectory must contain at least two states")
    shift = np.abs(traj.states[-1] - traj.states[0])
    return float(shift.mean()), float(np.median(shift))


def engagement_cost_per_user(traj: Trajectory) -> tuple[float, float]:
    """Mean and median over users of the time-averaged engagement cost.

    Per user i: (1/tau) sum_t (x_i(t) - u(t))^2 over the steps where a
    control was applied (t = 0 .. tau-1).
    """
    if traj.tau < 1:
        raise ValueError("trajectory must contain at least one control")
    gaps = traj.states[:-1] - traj.controls[:, None]
    per_user = np.mean(gaps ** 2, axis=0)
    return float(per_user.mean()), float(np.median(per_user))


@dataclass(frozen=True)
class ParetoPoint:
    rho: float
    engagement_cost_median: float
    misinformation: float
    non_dominated: bool


def pareto_points(runs) -> tuple[ParetoPoint, ...]:
    """Trade-off points sorted by rho, with the non-dominated subset flagged.

    Lower is better on both axes.  Weak dominance: a point is dominated only
    if some other point is no worse on both axes and strictly better on at
    least one, so exact ties all stay non-dominated.
    """
    runs = sorted(runs, key=lambda r: r.rho)
    coords = []
    for r in runs:
        if r.misinformation is None:
            raise ValueError(
                f"run at rho={r.rho} has no misinformation value (continuous mode?)"
            )
        coords.append((r.engagement_cost_median, r.misinformation))

    def dominated(i: int) -> bool:
        ei, mi = coords[i]
        for j, (ej, mj) in enumerate(coords):
            if j != i and ej <= ei and mj <= mi and (ej < ei or mj < mi):
                return True
        return False

    return tuple(
        ParetoPoint(
            rho=r.rho,
            engagement_cost_median=coords[i][0],
            misinformation=coords[i][1],
            non_dominated=not dominated(i),
        )
        for i, r in enumerate(runs)
    )
