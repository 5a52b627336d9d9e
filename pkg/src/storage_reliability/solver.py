"""Value iteration for the discounted blackout-cost fixed point.

The Bellman operator minimizes g(w - u) + E[e^{-theta t0} J(min{s - u + r t0,
s_bar}, W)] over withdrawals u in [0, min{s, w}], with t0 ~ Exponential(Q).
J is stored on an (s, w) grid, interpolated piecewise-linearly in s and never
interpolated in w (the W-expectation runs over the quadrature nodes), so the
exponential-time smoothing has a closed form per linear segment and the only
discretization axes are the grid itself and the withdrawal candidates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import Grid, StageCost, SystemParams
from .numeric import golden_section_min

log = logging.getLogger(__name__)

_CHUNK_ROWS = 64


@dataclass(frozen=True)
class ValueTable:
    """Converged (or partial) J(s, w) samples plus the derived C(s)."""

    grid: Grid
    j_values: np.ndarray  # (n_s, n_w)
    c_values: np.ndarray  # (n_s,)
    iterations: int
    residual: float
    error_bound: float
    converged: bool


@dataclass(frozen=True)
class PolicyTable:
    """Tabulated withdrawals u(s, w) on the grid."""

    grid: Grid
    u_values: np.ndarray  # (n_s, n_w)


def _one_minus_exp(x):
    # 1 - e^{-x}
    return -np.expm1(-x)


def _one_minus_exp_linear(x):
    # 1 - e^{-x}(1 + x), series below 1e-3 to dodge cancellation
    x = np.asarray(x, dtype=float)
    direct = 1.0 - np.exp(-x) * (1.0 + x)
    series = x * x * (0.5 + x * (-1.0 / 3.0 + x * (0.125 - x / 30.0)))
    return np.where(np.abs(x) < 1e-3, series, direct)


class _Continuation:
    """Closed-form E[e^{-theta t0} J-bar(min{y + r t0, s_bar})] for PL J-bar.

    With lam = (Q + theta)/r the integral over the charging path is
    (Q/r) * int_y^{s_bar} e^{-lam (z-y)} J-bar(z) dz plus the saturated tail
    (Q/(Q+theta)) e^{-lam (s_bar - y)} J-bar(s_bar); both pieces are exact
    for piecewise-linear J-bar.
    """

    def __init__(self, params: SystemParams, s_points: np.ndarray):
        self.s = s_points
        self.lam = (params.q_rate + params.theta) / params.r
        self.q_over_r = params.q_rate / params.r
        self.tail = params.q_rate / (params.q_rate + params.theta)
        if len(s_points) > 1:
            self.ds = float(s_points[1] - s_points[0])
            x = self.lam * self.ds
            self.seg_decay = math.exp(-x)
            self.seg_a = float(_one_minus_exp(x)) / self.lam
            self.seg_b = float(_one_minus_exp_linear(x)) / self.lam**2

    def nodes(self, j_bar: np.ndarray) -> np.ndarray:
        """Continuation values at the grid nodes, by backward recursion."""
        n = len(self.s)
        k = np.empty(n)
        k[-1] = self.tail * j_bar[-1]
        if n == 1:
            return k
        m = np.diff(j_bar) / self.ds
        for i in range(n - 2, -1, -1):
            seg = j_bar[i] * self.seg_a + m[i] * self.seg_b
            k[i] = self.q_over_r * seg + self.seg_decay * k[i + 1]
        return k

    def at(self, y, j_bar: np.ndarray, k_nodes: np.ndarray):
        """Continuation values at arbitrary post-withdrawal states y."""
        y = np.clip(np.asarray(y, dtype=float), self.s[0], self.s[-1])
        n = len(self.s)
        if n == 1:
            return np.full(y.shape, k_nodes[0])
        idx = np.clip(np.searchsorted(self.s, y, side="right") - 1, 0, n - 2)
        m = (j_bar[idx + 1] - j_bar[idx]) / self.ds
        j_y = j_bar[idx] + m * (y - self.s[idx])
        h = self.s[idx + 1] - y
        x = self.lam * h
        a = _one_minus_exp(x) / self.lam
        b = _one_minus_exp_linear(x) / self.lam**2
        return self.q_over_r * (j_y * a + m * b) + np.exp(-x) * k_nodes[idx + 1]


class _Workspace:
    """Per-solve precomputation shared across Bellman sweeps."""

    def __init__(self, params: SystemParams, cost: StageCost, grid: Grid, refine: bool):
        s = grid.s_points
        w = grid.w_points
        n_s = len(s)
        self.params = params
        self.cost = cost
        self.grid = grid
        self.refine = refine and params.s_bar > 0
        self.cont = _Continuation(params, s)
        tiny = 1e-12 * max(1.0, params.shock.upper)
        # grid-aligned candidates u = k*ds: stage cost table over (w_j, k)
        feasible = s[None, :] <= w[:, None] + tiny
        self.stage = np.where(feasible, cost(np.maximum(w[:, None] - s[None, :], 0.0)), np.inf)
        rows = np.arange(n_s)
        self.gather_idx = np.maximum(rows[:, None] - rows[None, :], 0)
        self.valid_ik = rows[:, None] >= rows[None, :]
        # the continuous endpoint candidate u = min{s, w}
        self.u_end = np.minimum(s[:, None], w[None, :])
        self.y_end = s[:, None] - self.u_end
        self.g_end = cost(np.maximum(w[None, :] - s[:, None], 0.0))
        self.w_row = np.broadcast_to(w[None, :], self.u_end.shape)
        self.s_col = np.broadcast_to(s[:, None], self.u_end.shape)
        self.u_tol = 1e-8 * max(params.s_bar, 1e-12)


def _sweep(ws: _Workspace, j_values: np.ndarray, want_policy: bool):
    """One application of the Bellman operator; optionally the argmin table."""
    need_arg = want_policy or ws.refine
    j_bar = j_values @ ws.grid.w_weights
    k_nodes = ws.cont.nodes(j_bar)
    n_s, n_w = j_values.shape
    ds = ws.grid.ds

    obj_end = ws.g_end + ws.cont.at(ws.y_end, j_bar, k_nodes)
    j_new = np.empty_like(j_values)
    u_new = np.empty_like(j_values) if need_arg else None
    for i0 in range(0, n_s, _CHUNK_ROWS):
        i1 = min(i0 + _CHUNK_ROWS, n_s)
        gathered = np.where(ws.valid_ik[i0:i1], k_nodes[ws.gather_idx[i0:i1]], np.inf)
        obj = ws.stage[None, :, :] + gathered[:, None, :]
        j_new[i0:i1] = obj.min(axis=2)
        if need_arg:
            u_new[i0:i1] = obj.argmin(axis=2) * ds

    # endpoint u = min{s, w} wins only on strict improvement (ties keep the
    # smaller grid-aligned withdrawal)
    better = obj_end < j_new
    j_new = np.where(better, obj_end, j_new)
    if need_arg:
        u_new = np.where(better, ws.u_end, u_new)

    if ws.refine:
        lo = np.maximum(u_new - ds, 0.0)
        hi = np.minimum(u_new + ds, ws.u_end)

        def objective(u):
            return ws.cost(np.maximum(ws.w_row - u, 0.0)) + ws.cont.at(
                ws.s_col - u, j_bar, k_nodes
            )

        u_ref, f_ref = golden_section_min(objective, lo, hi, tol=ws.u_tol)
        improved = f_ref < j_new
        j_new = np.where(improved, f_ref, j_new)
        u_new = np.where(improved, u_ref, u_new)

    return j_new, u_new


def value_iterate(
    params: SystemParams,
    cost: StageCost,
    grid: Grid,
    tol: float = 1e-9,
    max_iter: int = 5000,
    refine: bool | None = None,
) -> ValueTable:
    """Iterate J <- TJ from J0 = 0 until the sup-norm residual drops below tol.

    The contraction modulus is Q/(Q+theta), so the reported error bound is
    residual * Q/theta. Non-convergence is a reported status on the returned
    table, never an exception, so parameter sweeps can keep going.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if refine is None:
        refine = cost.strictly_convex
    ws = _Workspace(params, cost, grid, refine=refine)
    j = np.zeros((grid.n_s, grid.n_w))
    residual = math.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        j_next, _ = _sweep(ws, j, want_policy=False)
        residual = float(np.max(np.abs(j_next - j)))
        j = j_next
        if residual <= tol:
            converged = True
            break
    if not converged:
        log.warning(
            "value iteration hit max_iter=%d with residual %.3e > tol %.3e",
            max_iter, residual, tol,
        )
    j_bar = j @ grid.w_weights
    c = ws.cont.nodes(j_bar)
    return ValueTable(
        grid=grid,
        j_values=j,
        c_values=c,
        iterations=iterations,
        residual=residual,
        error_bound=residual * params.q_rate / params.theta,
        converged=converged,
    )


def bellman_apply(
    j: ValueTable, params: SystemParams, cost: StageCost, grid: Grid,
    refine: bool | None = None,
) -> ValueTable:
    """Apply the Bellman operator once to an existing table."""
    if refine is None:
        refine = cost.strictly_convex
    ws = _Workspace(params, cost, grid, refine=refine)
    j_new, _ = _sweep(ws, j.j_values, want_policy=False)
    residual = float(np.max(np.abs(j_new - j.j_values)))
    c = ws.cont.nodes(j_new @ grid.w_weights)
    return ValueTable(
        grid=grid,
        j_values=j_new,
        c_values=c,
        iterations=j.iterations + 1,
        residual=residual,
        error_bound=residual * params.q_rate / params.theta,
        converged=False,
    )


def extract_policy(
    j: ValueTable, params: SystemParams, cost: StageCost, grid: Grid,
    refine: bool | None = None,
) -> PolicyTable:
    """Per-node argmin withdrawals of the Bellman objective.

    Ties break toward the smallest u (conserve storage).
    """
    if refine is None:
        refine = cost.strictly_convex
    ws = _Workspace(params, cost, grid, refine=refine)
    _, u = _sweep(ws, j.j_values, want_policy=True)
    return PolicyTable(grid=grid, u_values=u)


def cost_from_value(j: ValueTable, params: SystemParams, grid: Grid) -> np.ndarray:
    """C(s): the u = 0 exponential-time smoothing of J(., W) at the nodes."""
    cont = _Continuation(params, grid.s_points)
    return cont.nodes(j.j_values @ grid.w_weights)


def discounted_transition_expectation(
    j: ValueTable, s: float, u: float, params: SystemParams, grid: Grid
) -> float:
    """E[e^{-theta t0} J(min{s - u + r t0, s_bar}, W)] for one (s, u) pair."""
    b = params.shock.upper
    if not (0.0 <= u <= min(s, b) + 1e-12):
        raise ValueError(f"withdrawal u={u} outside [0, min(s={s}, B={b})]")
    if s - u < -1e-12:
        raise ValueError("post-withdrawal state would be negative")
    cont = _Continuation(params, grid.s_points)
    j_bar = j.j_values @ grid.w_weights
    k_nodes = cont.nodes(j_bar)
    return float(cont.at(np.array([s - u]), j_bar, k_nodes)[0])
