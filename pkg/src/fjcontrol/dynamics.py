"""State propagation and numerical stability diagnostics.

The update is affine: x(t+1) = A x(t) + B u(t) + anchor, with
A = (I - Lambda) W, B = (I - Lambda) w_rec, and anchor = Lambda x(0).
Because every augmented row of the network is substochastic, the state box
[0, 1]^n is forward invariant; :func:`step` clips away the last-bit float
drift so iterates stay inside the box exactly.

SystemMatrices values are immutable; parallel simulations may share one
instance read-only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .costs import CostParams
from .network import Network


class PowerIterationError(RuntimeError):
    """Power iteration failed to converge within the iteration cap."""


@dataclass(frozen=True)
class SystemMatrices:
    a: np.ndarray       # (n, n) = (I - Lambda) W
    b: np.ndarray       # (n,)   = (I - Lambda) w_rec
    anchor: np.ndarray  # (n,)   = Lambda x(0)

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        anchor = np.array(self.anchor, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n) or b.shape != (n,) or anchor.shape != (n,):
            raise ValueError(
                f"inconsistent shapes: a {a.shape}, b {b.shape}, anchor {anchor.shape}"
            )
        for arr in (a, b, anchor):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "anchor", anchor)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop run record: states x(0..tau), controls u(0..tau-1).

    ``content_ids`` holds the id of the item recommended at each step, or
    None for continuous-mode steps and steps where nothing was eligible.
    """

    states: np.ndarray
    controls: np.ndarray
    content_ids: tuple[str | None, ...]

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        controls = np.array(self.controls, dtype=float)
        if states.ndim != 2:
            raise ValueError("states must be a (tau+1, n) array")
        if controls.ndim != 1 or states.shape[0] != controls.size + 1:
            raise ValueError(
                f"need states.shape[0] == len(controls) + 1, got "
                f"{states.shape[0]} and {controls.size}"
            )
        ids = tuple(self.content_ids)
        if len(ids) != controls.size:
            raise ValueError("content_ids must have one entry per control")
        if np.any(states < 0) or np.any(states > 1):
            raise ValueError("state entries must lie in [0, 1]")
        if np.any(controls < 0) or np.any(controls > 1):
            raise ValueError("controls must lie in [0, 1]")
        states.setflags(write=False)
        controls.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "content_ids", ids)

    @property
    def tau(self) -> int:
        return self.controls.size

    @property
    def n(self) -> int:
        return self.states.shape[1]


def build_matrices(net: Network) -> SystemMatrices:
    """Assemble the affine update from a network."""
    susceptible = 1.0 - net.lambda_stub
    return SystemMatrices(
        a=susceptible[:, None] * net.w,
        b=susceptible * net.w_rec,
        anchor=net.lambda_stub * net.x0,
    )


def step(m: SystemMatrices, x, u: float) -> np.ndarray:
    """One update of the sentiment dynamics.

    The result is a convex combination of values in [0, 1]; clipping only
    absorbs last-bit rounding.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (m.n,):
        raise ValueError(f"x must have shape ({m.n},), got {x.shape}")
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("state entries must lie in [0, 1]")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must be in [0, 1], got {u}")
    out = m.a @ x + m.b * u + m.anchor
    return np.clip(out, 0.0, 1.0)


def closed_loop_matrix(m: SystemMatrices, cost: CostParams, content_age: int) -> np.ndarray:
    """A + B 1^T / (n (1 + rho e^(-delta * age))): the model-free closed loop."""
    if content_age < 0:
        raise ValueError(f"content_age must be >= 0, got {content_age}")
    n = m.n
    scale = n * (1.0 + cost.rho * math.exp(-cost.delta_novelty * content_age))
    return m.a + np.outer(m.b, np.ones(n)) / scale


def spectral_radius_check(
    m: SystemMatrices,
    cost: CostParams,
    content_age: int,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> float:
    """Spectral radius of the model-free closed-loop matrix by power iteration.

    Deterministic all-ones start vector; stops when the radius estimate's
    relative change drops below ``tol``.  Callers requiring convergence of
    the closed loop must assert the result < 1.
    """
    mat = closed_loop_matrix(m, cost, content_age)
    n = mat.shape[0]
    x = np.ones(n) / math.sqrt(n)
    prev = math.inf
    for _ in range(max_iter):
        y = mat @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return 0.0
        x = y / norm
        if abs(norm - prev) <= tol * max(norm, 1e-300):
            return norm
        prev = norm
    raise PowerIterationError(
        f"power iteration did not converge to rel tol {tol} in {max_iter} iterations "
        f"(last estimate {prev})"
    )


def h_matrix_min_eigenvalue(n: int, rho: float, delta_novelty: float, age: int) -> float:
    """Minimum eigenvalue of the convergence certificate matrix.

    H = [[I_n, -1_n], [-1_n^T, n (1 + rho e^(-delta * age))]].  By the Schur
    complement the matrix is positive definite iff rho e^(-delta * age) > 0,
    and positive semidefinite (singular) at rho = 0.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    s = n * (1.0 + rho * math.exp(-delta_novelty * age))
    h = np.eye(n + 1)
    h[:n, n] = -1.0
    h[n, :n] = -1.0
    h[n, n] = s
    return float(np.linalg.eigvalsh(h)[0])


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Export a trajectory as CSV.

    Header: t,u,content_id,x_mean,x_std,x_0,...,x_{n-1}.  One row per step;
    the final row carries the terminal state with empty control fields.
    x_std is the population standard deviation.  Floats are written with 17
    significant digits so the file round-trips exactly.
    """
    n = traj.n
    header = ["t", "u", "content_id", "x_mean", "x_std"] + [f"x_{i}" for i in range(n)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(traj.tau + 1):
            state = traj.states[t]
            if t < traj.tau:
                u_cell = _fmt(traj.controls[t])
                id_cell = traj.content_ids[t] or ""
            else:
                u_cell = ""
                id_cell = ""
            writer.writerow(
                [t, u_cell, id_cell, _fmt(float(state.mean())), _fmt(float(state.std()))]
                + [_fmt(float(v)) for v in state]
            )
