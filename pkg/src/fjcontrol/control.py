"""Model-free and model-based recommender controllers.

The model-free controller is the closed-form one-step minimizer of the
mitigation cost.  The model-based controller solves a receding-horizon
problem: states are eliminated through the dynamics (condensed form), the
hard terminal equality is softened into a quadratic penalty (a scalar input
cannot hit an n-dimensional target exactly for n > horizon), and the
resulting box-constrained QP is solved by projected gradient with
Barzilai-Borwein trial steps and an exact line search along the feasible
segment, which makes the objective monotonically non-increasing.

All operations are pure given their inputs; an MpcSolver owns its workspace,
so parallel sweeps must build one solver per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costs import CostParams, novelty_factor
from .dynamics import SystemMatrices
from .network import Network


class SteadyStateError(RuntimeError):
    """The steady-state linear system is singular (non-convergent configuration)."""


class QpNonConvergedError(RuntimeError):
    """The QP solver hit its iteration cap before reaching the KKT tolerance."""

    def __init__(self, message: str, kkt_residual: float, iterations: int):
        super().__init__(message)
        self.kkt_residual = kkt_residual
        self.iterations = iterations


@dataclass(frozen=True)
class MpcConfig:
    """Receding-horizon controller settings.

    ``terminal_weight`` is the soft-terminal penalty replacing the hard
    terminal equality; larger values track the model-based equilibrium more
    tightly.
    """

    horizon: int = 50
    terminal_weight: float = 1e3
    kkt_tolerance: float = 1e-8
    max_iterations: int = 50_000

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.terminal_weight < 0:
            raise ValueError(f"terminal_weight must be >= 0, got {self.terminal_weight}")
        if self.kkt_tolerance <= 0:
            raise ValueError(f"kkt_tolerance must be > 0, got {self.kkt_tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass(frozen=True)
class SteadyState:
    """An equilibrium (x*, u*) of the closed loop."""

    x_star: np.ndarray
    u_star: float

    def __post_init__(self):
        x = np.array(self.x_star, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x_star", x)
        object.__setattr__(self, "u_star", float(self.u_star))


def mf_control(x, t: int, t_c: int, params: CostParams) -> float:
    """Closed-form one-step minimizer: sum(x) / (n (1 + rho e^(-delta age))).

    The value is mathematically in [0, 1] (numerator <= n, denominator >= n);
    clipping absorbs last-bit rounding only.
    """
    x = np.asarray(x, dtype=float)
    denom = x.size * (1.0 + params.rho * novelty_factor(t, t_c, params))
    return float(min(1.0, max(0.0, x.sum() / denom)))


def _penalty_scale(n: int, params: CostParams, age: int) -> float:
    return n * (1.0 + params.rho * novelty_factor(age, 0, params))


def mf_steady_state(
    m: SystemMatrices, net: Network, params: CostParams, age: int = 0
) -> SteadyState:
    """Fixed point of the model-free closed loop by direct linear solve.

    Solves (I - A - B 1^T / (n (1 + rho e^(-delta age)))) x* = anchor and
    evaluates the model-free control at x*.  Requires the closed-loop
    spectral radius below 1; a singular system raises SteadyStateError.
    """
    if net.n != m.n:
        raise ValueError(f"network size {net.n} does not match matrices ({m.n})")
    n = m.n
    scale = _penalty_scale(n, params, age)
    system = np.eye(n) - m.a - np.outer(m.b, np.ones(n)) / scale
    try:
        x_star = np.linalg.solve(system, m.anchor)
    except np.linalg.LinAlgError as exc:
        raise SteadyStateError(f"model-free steady-state system is singular: {exc}") from exc
    return SteadyState(x_star=x_star, u_star=mf_control(x_star, age, 0, params))


def mb_steady_state(
    m: SystemMatrices, net: Network, params: CostParams, age: int = 0
) -> SteadyState:
    """Cost-optimal equilibrium over the whole steady-state manifold.

    With v = (I - A)^-1 B and y = (I - A)^-1 anchor, every equilibrium is
    x = v u + y; minimizing the mitigation cost along that line gives the
    interior optimum

        u* = (1^T y - v^T y) / (n + v^T v - 2 v^T 1 + rho n e^(-delta age)),

    clamped to [0, 1] (the scalar problem's KKT boundary cases collapse to
    the clamped value), after which x* = v u* + y.
    """
    if net.n != m.n:
        raise ValueError(f"network size {net.n} does not match matrices ({m.n})")
    n = m.n
    i_minus_a = np.eye(n) - m.a
    try:
        v = np.linalg.solve(i_minus_a, m.b)
        y = np.linalg.solve(i_minus_a, m.anchor)
    except np.linalg.LinAlgError as exc:
        raise SteadyStateError(f"I - A is singular: {exc}") from exc
    ebar = novelty_factor(age, 0, params)
    denom = n + v @ v - 2.0 * v.sum() + params.rho * n * ebar
    if denom <= 1e-300:
        # Objective is flat in u along the manifold; prefer the least
        # extreme recommendation.
        u_star = 0.0
    else:
        u_star = float(min(1.0, max(0.0, (y.sum() - v @ y) / denom)))
    return SteadyState(x_star=v * u_star + y, u_star=u_star)


@dataclass
class QpDiagnostics:
    u: np.ndarray
    iterations: int
    kkt_residual: float
    objective: float
    objective_history: list[float]


def _qp_box(
    h: np.ndarray,
    g: np.ndarray,
    lo: float,
    hi: float,
    tol: float,
    max_iter: int,
    start: np.ndarray | None = None,
) -> QpDiagnostics:
    """Minimize 0.5 u^T h u + g^T u over the box [lo, hi]^T.

    Projected gradient: a Barzilai-Borwein step proposes the trial point,
    then an exact line search over the feasible segment [u, proj(u - a g)]
    picks the next iterate, so descent is monotone.  The KKT residual is
    the unit-step projected gradient ||u - proj(u - grad)||_inf.
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    dim = g.size
    if h.shape != (dim, dim):
        raise ValueError(f"h must be ({dim}, {dim}), got {h.shape}")
    if not np.allclose(h, h.T, atol=1e-10 * (1.0 + np.abs(h).max())):
        raise ValueError("h must be symmetric")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")

    if start is None:
        u = np.full(dim, 0.5 * (lo + hi))
    else:
        u = np.clip(np.asarray(start, dtype=float), lo, hi)

    grad = h @ u + g
    obj = float(0.5 * u @ (h @ u) + g @ u)
    history = [obj]
    prev_u = None
    prev_grad = None
    residual = float(np.max(np.abs(u - np.clip(u - grad, lo, hi))))

    for it in range(1, max_iter + 1):
        if residual <= tol:
            return QpDiagnostics(u, it - 1, residual, obj, history)

        alpha = None
        if prev_u is not None:
            s = u - prev_u
            z = grad - prev_grad
            sz = float(s @ z)
            if sz > 1e-30:
                alpha = float(s @ s) / sz
        if alpha is None:
            hg = h @ grad
            curv = float(grad @ hg)
            alpha = float(grad @ grad) / curv if curv > 1e-30 else 1.0
        alpha = min(max(alpha, 1e-12), 1e12)

        trial = np.clip(u - alpha * grad, lo, hi)
        p = trial - u
        if not np.any(p):
            # u is a fixed point of the projection for this step length,
            # hence KKT-optimal up to rounding.
            residual = float(np.max(np.abs(u - np.clip(u - grad, lo, hi))))
            return QpDiagnostics(u, it, residual, obj, history)

        hp = h @ p
        curv = float(p @ hp)
        slope = float(grad @ p)
        theta = 1.0 if curv <= 0 else min(1.0, max(0.0, -slope / curv))

        prev_u, prev_grad = u, grad
        u = u + theta * p
        grad = grad + theta * hp
        obj = obj + theta * slope + 0.5 * theta * theta * curv
        history.append(obj)
        residual = float(np.max(np.abs(u - np.clip(u - grad, lo, hi))))

    raise QpNonConvergedError(
        f"box QP did not reach KKT residual {tol} in {max_iter} iterations "
        f"(residual {residual})",
        kkt_residual=residual,
        iterations=max_iter,
    )


def qp_solve_box(h, g, lo: float, hi: float, tol: float, max_iter: int) -> np.ndarray:
    """Solve min 0.5 u^T h u + g^T u subject to lo <= u_k <= hi.

    Requires h symmetric positive definite.  Raises QpNonConvergedError
    (carrying the final KKT residual) if the iteration cap is exceeded.
    """
    return _qp_box(h, g, lo, hi, tol, max_iter).u


class MpcSolver:
    """Workspace for repeated receding-horizon solves against one target.

    Precomputes the condensed stage operators once; each call assembles only
    the linear term and warm-starts the QP from the previous solution
    shifted by one step.
    """

    def __init__(
        self,
        m: SystemMatrices,
        target: SteadyState,
        params: CostParams,
        cfg: MpcConfig,
    ):
        self.m = m
        self.target = target
        self.params = params
        self.cfg = cfg
        n, horizon = m.n, cfg.horizon

        # g_powers[k] = A^k B: influence of u_j on x_{j+1+k}.
        g_powers = [m.b]
        for _ in range(horizon - 1):
            g_powers.append(m.a @ g_powers[-1])

        # Stacked stage operator: block k maps the control sequence to
        # x_k - u_k 1 (for k < horizon) or to x_T (terminal, sqrt(mu)-scaled).
        stack = np.zeros(((horizon + 1) * n, horizon))
        for k in range(horizon + 1):
            rows = slice(k * n, (k + 1) * n)
            for j in range(k):
                stack[rows, j] = g_powers[k - 1 - j]
            if k < horizon:
                stack[rows, k] = -1.0
        sqrt_mu = math.sqrt(cfg.terminal_weight)
        stack[horizon * n:, :] *= sqrt_mu

        self._stack = stack
        self._sqrt_mu = sqrt_mu
        self._base_h = 2.0 * (stack.T @ stack)
        self._eye = np.eye(horizon)
        self._warm: np.ndarray | None = None
        self.last_diagnostics: QpDiagnostics | None = None

    def _offsets(self, x_now: np.ndarray) -> np.ndarray:
        """Free-response stack: P_0..P_{T-1}, then sqrt(mu) (P_T - x*)."""
        m, horizon, n = self.m, self.cfg.horizon, self.m.n
        o = np.empty((horizon + 1) * n)
        p = np.asarray(x_now, dtype=float)
        for k in range(horizon):
            o[k * n:(k + 1) * n] = p
            p = m.a @ p + m.anchor
        o[horizon * n:] = self._sqrt_mu * (p - self.target.x_star)
        return o

    def control(self, x_now, t: int, t_c: int) -> float:
        """First element of the optimal horizon control sequence."""
        x_now = np.asarray(x_now, dtype=float)
        if x_now.shape != (self.m.n,):
            raise ValueError(f"x_now must have shape ({self.m.n},), got {x_now.shape}")
        pen = self.params.rho * self.m.n * novelty_factor(t, t_c, self.params)
        h = self._base_h + 2.0 * pen * self._eye
        g = 2.0 * (self._stack.T @ self._offsets(x_now))
        start = self._warm
        diag = _qp_box(
            h, g, 0.0, 1.0, self.cfg.kkt_tolerance, self.cfg.max_iterations, start=start
        )
        # Shift the plan one step forward for the next warm start.
        self._warm = np.concatenate([diag.u[1:], diag.u[-1:]])
        self.last_diagnostics = diag
        return float(diag.u[0])


def mpc_control(
    m: SystemMatrices,
    x_now,
    target: SteadyState,
    t: int,
    t_c: int,
    params: CostParams,
    cfg: MpcConfig,
) -> float:
    """One receding-horizon control value (fresh workspace per call).

    Within one solve the novelty factor is frozen at the solve-time content
    age for all predicted steps; with zero novelty decay this is exact.
    """
    return MpcSolver(m, target, params, cfg).control(x_now, t, t_c)
