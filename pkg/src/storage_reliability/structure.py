"""Structural characterizations of the optimal policy and their verifiers.

For strictly convex stage costs the two-dimensional optimal policy collapses
to u(s, w) = [w - phi(s - w)]+ where the kernel phi(p) minimizes
g(x) + C(x + p) over the feasible box. Under positive drift (q_rate * E[W]
<= r) the kernel is exactly -p below break-point b0, the root of
g'(x) + C'(x + p) = 0 between b0 and b1, and 0 above b1. This module builds
the kernel from a sampled cost vector, reconstructs policies from it, solves
the per-policy cost delay differential equation by linear shooting, computes
HJB residuals, and re-checks the proved properties numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import DriftSign, Grid, StageCost, SystemParams, drift_sign, shock_expectation
from .numeric import bisect_increasing, golden_section_min
from .solver import PolicyTable, ValueTable, policy_lookup


def myopic_policy(s, w):
    """Withdraw min{s, w}: cover every shock as far as storage allows."""
    return np.minimum(s, w)


@dataclass(frozen=True)
class KernelPolicy:
    """One-dimensional kernel phi(p), p = s - w, with its break-points."""

    p_points: np.ndarray
    phi_values: np.ndarray
    b0: float
    b1: float
    assumption4: bool  # positive drift; the three-piece representation is
    # only guaranteed when this holds

    def phi(self, p):
        return np.interp(p, self.p_points, self.phi_values)


@dataclass(frozen=True)
class DdeSolution:
    """Cost-of-policy curve from the delay differential equation."""

    s_points: np.ndarray
    c_values: np.ndarray
    boundary_residual: float
    shooting_iterations: int


@dataclass(frozen=True)
class CollapseReport:
    applicable: bool
    sup_deviation: float
    mean_abs_deviation: float
    tolerance: float
    passed: bool | None
    note: str = ""


@dataclass(frozen=True)
class ClaimCheck:
    claim: str
    passed: bool
    worst_violation: float | None
    tolerance: float
    gated: bool = False
    note: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[ClaimCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.gated)

    def to_rows(self) -> list[dict]:
        return [
            {
                "claim": c.claim,
                "pass": bool(c.passed),
                "worst_violation": None if c.worst_violation is None else float(c.worst_violation),
                "tolerance": float(c.tolerance),
                "gated": bool(c.gated),
                "note": c.note,
            }
            for c in self.checks
        ]


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------


def _cost_derivative_samples(c_values: np.ndarray, s_points: np.ndarray) -> np.ndarray:
    """C'(s) by central differences, one-sided at the ends."""
    c = np.asarray(c_values, dtype=float)
    s = np.asarray(s_points, dtype=float)
    ds = s[1] - s[0]
    cp = np.empty_like(c)
    cp[1:-1] = (c[2:] - c[:-2]) / (2.0 * ds)
    cp[0] = (c[1] - c[0]) / ds
    cp[-1] = (c[-1] - c[-2]) / ds
    return cp


def compute_kernel(
    c_values: np.ndarray,
    s_points: np.ndarray,
    cost: StageCost,
    params: SystemParams,
    n_p: int | None = None,
) -> KernelPolicy:
    """Kernel phi(p) = argmin g(x) + C(x + p) over max{0,-p} <= x <= min{B, s_bar - p}.

    C' comes from finite differences of the sampled cost vector; break-points
    solve g'(-b0) = -C'(0) and C'(b1) = -g'(0) through monotone piecewise-
    linear inversion. Under positive drift the kernel is assembled from its
    exact three-piece representation (interior piece by bisection on the
    first-order condition); otherwise the raw program is minimized by
    golden-section per p and the result is flagged as not guaranteed.
    """
    if not cost.strictly_convex:
        raise ValueError("kernel representation requires a strictly convex stage cost")
    s_points = np.asarray(s_points, dtype=float)
    if len(s_points) < 2:
        raise ValueError("kernel requires positive storage capacity")
    b = params.shock.upper
    s_bar = params.s_bar
    assumption4 = drift_sign(params) is DriftSign.POSITIVE_OR_ZERO

    cp = _cost_derivative_samples(c_values, s_points)
    cp_mono = np.maximum.accumulate(cp)

    def c_interp(x):
        return np.interp(x, s_points, c_values)

    def cp_interp(x):
        return np.interp(x, s_points, cp)

    g0 = float(cost.derivative(0.0))
    b0 = -min(cost.inverse_derivative(max(-cp[0], 0.0)), b)
    b1 = float(np.interp(-g0, cp_mono, s_points))
    b1 = min(max(b1, -b), s_bar)

    if n_p is None:
        target = s_points[1] - s_points[0]
        n_p = max(int(round((b + s_bar) / target)) + 1, 51)
    p = np.linspace(-b, s_bar, int(n_p))
    lo = np.maximum(0.0, -p)
    hi = np.minimum(b, s_bar - p)
    tol = 1e-8 * (b + s_bar)

    if assumption4:
        phi = np.where(p <= b0, -p, 0.0)
        interior = (p > b0) & (p < b1)
        if np.any(interior):
            def foc(x):
                return cost.derivative(x) + cp_interp(x + p[interior])

            phi_int = bisect_increasing(foc, lo[interior], hi[interior], tol=tol)
            phi[interior] = phi_int
    else:
        def objective(x):
            return cost(x) + c_interp(x + p)

        phi, _ = golden_section_min(objective, lo, hi, tol=tol)

    phi = np.clip(phi, lo, hi)
    return KernelPolicy(p_points=p, phi_values=phi, b0=float(b0), b1=float(b1),
                        assumption4=assumption4)


def kernel_to_policy(kernel: KernelPolicy, grid: Grid) -> PolicyTable:
    """Tabulate u(s, w) = [w - phi(s - w)]+ on the grid."""
    s = grid.s_points[:, None]
    w = grid.w_points[None, :]
    phi = np.interp(s - w, kernel.p_points, kernel.phi_values)
    u = np.maximum(w - phi, 0.0)
    u = np.minimum(u, np.minimum(s, w))
    return PolicyTable(grid=grid, u_values=np.broadcast_to(u, (grid.n_s, grid.n_w)).copy())


def verify_collapse(
    dp_policy: PolicyTable, kernel_policy: PolicyTable, cost: StageCost
) -> CollapseReport:
    """Compare the DP argmin table against the kernel reconstruction."""
    if dp_policy.u_values.shape != kernel_policy.u_values.shape:
        raise ValueError("policy tables must share a grid")
    grid = dp_policy.grid
    tolerance = 2.0 * max(grid.ds, grid.dw)
    dev = np.abs(dp_policy.u_values - kernel_policy.u_values)
    sup = float(dev.max())
    mean = float(dev.mean())
    if not cost.strictly_convex:
        return CollapseReport(
            applicable=False, sup_deviation=sup, mean_abs_deviation=mean,
            tolerance=tolerance, passed=None,
            note="kernel collapse needs a strictly convex stage cost",
        )
    return CollapseReport(
        applicable=True, sup_deviation=sup, mean_abs_deviation=mean,
        tolerance=tolerance, passed=bool(sup <= tolerance),
    )


# ---------------------------------------------------------------------------
# Delay differential equation for the cost of a fixed policy
# ---------------------------------------------------------------------------


def _policy_evaluator(policy, grid: Grid):
    w = grid.w_points
    if isinstance(policy, str):
        if policy == "myopic":
            return lambda s: np.minimum(s, w)
        if policy == "zero":
            return lambda s: np.zeros_like(w)
        raise ValueError(f"unknown policy literal {policy!r}")
    if isinstance(policy, PolicyTable):
        def from_table(s):
            u = policy_lookup(policy, np.full_like(w, s), w)
            return np.clip(u, 0.0, np.minimum(s, w))
        return from_table
    if callable(policy):
        return lambda s: np.clip(np.asarray(policy(s, w), dtype=float), 0.0, np.minimum(s, w))
    raise TypeError("policy must be 'myopic', 'zero', a PolicyTable or a callable")


def solve_policy_dde(policy, params: SystemParams, cost: StageCost, grid: Grid) -> DdeSolution:
    """March dC/ds = (Q+theta)/r C(s) - Q/r E[g(W-mu) + C(s-mu)] from s = 0.

    The retarded values C(s - mu) are read from the already-integrated
    history (the retarded argument never exceeds the current point by more
    than an RK4 stage, where the provisional stage value extends the
    history). The unknown C(0) is fixed by shooting on dC/ds(s_bar) = 0;
    the equation is linear in C, so two trial integrations and one affine
    solve determine it exactly up to integration error.
    """
    s = grid.s_points
    wq = grid.w_weights
    w = grid.w_points
    q, theta, r = params.q_rate, params.theta, params.r
    mu_of = _policy_evaluator(policy, grid)

    eg_of_mu = {}

    def stage_term(s_pt: float) -> tuple[float, np.ndarray]:
        # E[g(W - mu(s, W))] and the retarded arguments s - mu(s, W)
        mu = mu_of(float(s_pt))
        return float(wq @ cost(np.maximum(w - mu, 0.0))), s_pt - mu

    if len(s) == 1:
        g_bar, _ = stage_term(0.0)
        c0 = (q / theta) * g_bar
        return DdeSolution(s_points=s, c_values=np.array([c0]),
                           boundary_residual=0.0, shooting_iterations=0)

    h = float(s[1] - s[0])
    n = len(s)
    # two trajectories, C(0) = 0 and C(0) = 1
    hist = np.empty((n, 2))
    hist[0] = (0.0, 1.0)

    def rhs(s_pt: float, c_pt: np.ndarray, k_known: int, stage_s: float | None,
            stage_c: np.ndarray | None) -> np.ndarray:
        g_bar, args = stage_term(s_pt)
        args = np.minimum(args, s_pt)
        out = np.empty(2)
        if stage_s is not None and stage_s > s[k_known]:
            xs = np.concatenate([s[: k_known + 1], [stage_s]])
        else:
            xs = s[: k_known + 1]
        for t in range(2):
            if stage_s is not None and stage_s > s[k_known]:
                ys = np.concatenate([hist[: k_known + 1, t], [stage_c[t]]])
            else:
                ys = hist[: k_known + 1, t]
            c_ret = np.interp(args, xs, ys)
            out[t] = (q + theta) / r * c_pt[t] - (q / r) * (g_bar + wq @ c_ret)
        return out

    for k in range(n - 1):
        ck = hist[k]
        s_k = float(s[k])
        k1 = rhs(s_k, ck, k, None, None)
        k2 = rhs(s_k + 0.5 * h, ck + 0.5 * h * k1, k, s_k + 0.5 * h, ck + 0.5 * h * k1)
        k3 = rhs(s_k + 0.5 * h, ck + 0.5 * h * k2, k, s_k + 0.5 * h, ck + 0.5 * h * k2)
        k4 = rhs(s_k + h, ck + h * k3, k, s_k + h, ck + h * k3)
        hist[k + 1] = ck + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    res = rhs(float(s[-1]), hist[-1], n - 1, None, None)
    denom = res[0] - res[1]
    gamma = 0.0 if denom == 0.0 else res[0] / denom
    c = hist[:, 0] + gamma * (hist[:, 1] - hist[:, 0])

    # recompute the terminal slope on the combined trajectory
    hist_c = np.stack([c, c], axis=1)
    combined = _DdeResidual(s, hist_c, rhs_like=(stage_term, wq, q, theta, r, cost, w))
    boundary = combined.terminal()
    return DdeSolution(s_points=s, c_values=c, boundary_residual=float(boundary),
                       shooting_iterations=2)


class _DdeResidual:
    """Terminal-slope evaluation for a finished cost curve."""

    def __init__(self, s, hist_c, rhs_like):
        self.s = s
        self.c = hist_c[:, 0]
        self.stage_term, self.wq, self.q, self.theta, self.r, self.cost, self.w = rhs_like

    def terminal(self) -> float:
        s_end = float(self.s[-1])
        g_bar, args = self.stage_term(s_end)
        args = np.minimum(args, s_end)
        c_ret = np.interp(args, self.s, self.c)
        return (self.q + self.theta) / self.r * self.c[-1] - (self.q / self.r) * (
            g_bar + self.wq @ c_ret
        )


# ---------------------------------------------------------------------------
# HJB residual
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HjbReport:
    s_interior: np.ndarray
    residuals: np.ndarray
    sup_norm: float
    boundary_slope: float


def hjb_residual(c_values: np.ndarray, params: SystemParams, cost: StageCost,
                 grid: Grid) -> HjbReport:
    """Residual of dC/ds = (Q+theta)/r C - Q/r E[min_u g(W-u) + C(s-u)].

    dC/ds uses central differences at interior nodes; the inner minimization
    runs golden-section on the piecewise-linear interpolant of C.
    """
    c = np.asarray(c_values, dtype=float)
    s = grid.s_points
    w = grid.w_points
    q, theta, r = params.q_rate, params.theta, params.r

    if len(s) == 1:
        inner = float(grid.w_weights @ (cost(w) + c[0]))
        res = 0.0 - ((q + theta) / r * c[0] - (q / r) * inner)
        return HjbReport(s_interior=s, residuals=np.array([res]),
                         sup_norm=abs(res), boundary_slope=0.0)

    s_col = np.broadcast_to(s[:, None], (grid.n_s, grid.n_w))
    w_row = np.broadcast_to(w[None, :], (grid.n_s, grid.n_w))
    hi = np.minimum(s_col, w_row)

    def objective(u):
        return cost(np.maximum(w_row - u, 0.0)) + np.interp(s_col - u, s, c)

    _, inner_vals = golden_section_min(objective, np.zeros_like(hi), hi,
                                       tol=1e-8 * max(params.s_bar, 1e-12))
    inner_bar = inner_vals @ grid.w_weights

    ds = grid.ds
    dc = (c[2:] - c[:-2]) / (2.0 * ds)
    rhs = (q + theta) / r * c - (q / r) * inner_bar
    residuals = dc - rhs[1:-1]
    boundary_slope = (c[-1] - c[-2]) / ds
    return HjbReport(
        s_interior=s[1:-1],
        residuals=residuals,
        sup_norm=float(np.max(np.abs(residuals))) if len(residuals) else 0.0,
        boundary_slope=float(boundary_slope),
    )


# ---------------------------------------------------------------------------
# Theorem / lemma verifiers
# ---------------------------------------------------------------------------


def _check(claim, passed, worst, tol, gated=False, note=""):
    return ClaimCheck(claim=claim, passed=bool(passed),
                      worst_violation=worst if worst is None else float(worst),
                      tolerance=float(tol), gated=gated, note=note)


def _skipped(claim, note):
    return ClaimCheck(claim=claim, passed=True, worst_violation=None, tolerance=0.0,
                      gated=True, note=note)


def verify_theorems(
    value: ValueTable,
    policy: PolicyTable | None,
    kernel: KernelPolicy | None,
    params: SystemParams,
    cost: StageCost,
) -> VerificationReport:
    """Numeric re-check of the proved properties on a solved instance.

    Checks that depend on positive drift are still measured when it fails,
    but marked gated (informational) since the guarantees no longer apply.
    """
    checks: list[ClaimCheck] = []
    grid = value.grid
    s = grid.s_points
    c = value.c_values
    n_s = len(s)
    ds = grid.ds
    scale = float(np.max(np.abs(c))) if n_s else 1.0
    positive_drift = drift_sign(params) is DriftSign.POSITIVE_OR_ZERO
    drift_note = "" if positive_drift else "positive drift fails; not guaranteed"
    e_gw = shock_expectation(params.shock, cost)
    slope_bound = params.q_rate / params.r * e_gw

    # Theorem 2(i): C strictly decreasing
    if n_s > 1:
        fwd = np.diff(c)
        checks.append(_check("cost_strictly_decreasing", np.all(fwd < 0.0),
                             float(fwd.max()), 0.0))
    else:
        checks.append(_skipped("cost_strictly_decreasing", "single-node grid"))

    # Theorem 2(ii): convex C for convex g
    convex_cost = cost.kind != "table" or bool(np.all(np.diff(cost.dg) >= 0))
    if n_s > 2 and convex_cost:
        second = c[2:] - 2.0 * c[1:-1] + c[:-2]
        tol = 1e-8 * scale
        checks.append(_check("cost_convex", np.all(second >= -tol), float(-second.min()), tol))
    elif not convex_cost:
        checks.append(_skipped("cost_convex", "stage cost not convex"))
    else:
        checks.append(_skipped("cost_convex", "too few nodes"))

    # Appendix lemma: dC/ds >= -(Q/r) E[g(W)]
    if n_s > 1:
        slack = 2.0 * ds * slope_bound
        one_sided = np.diff(c) / ds
        worst = float((-slope_bound - slack) - one_sided.min())
        checks.append(_check("cost_slope_lower_bound", one_sided.min() >= -slope_bound - slack,
                             worst, slack))
    else:
        checks.append(_skipped("cost_slope_lower_bound", "single-node grid"))

    # boundary condition dC/ds(s_bar) = 0 at O(ds)
    if n_s > 1:
        bslope = abs(c[-1] - c[-2]) / ds
        tol = 5.0 * ds * slope_bound
        checks.append(_check("cost_boundary_slope", bslope <= tol, float(bslope), tol))
    else:
        checks.append(_skipped("cost_boundary_slope", "single-node grid"))

    # policy feasibility (always checked)
    if policy is not None:
        cap = np.minimum(s[:, None], grid.w_points[None, :])
        u = policy.u_values
        worst = float(max(np.max(u - cap), np.max(-u), 0.0))
        checks.append(_check("policy_feasible", worst <= 1e-9 * max(1.0, params.s_bar),
                             worst, 1e-9 * max(1.0, params.s_bar)))

        # Theorem 4: monotone in s and in w, violations within one grid cell
        cell = max(ds, grid.dw) + 1e-12
        if n_s > 1:
            worst_s = float(np.max(u[:-1, :] - u[1:, :]))
            checks.append(_check("policy_monotone_s", worst_s <= cell, worst_s, cell,
                                 gated=not positive_drift, note=drift_note))
        if grid.n_w > 1:
            worst_w = float(np.max(u[:, :-1] - u[:, 1:]))
            checks.append(_check("policy_monotone_w", worst_w <= cell, worst_w, cell,
                                 gated=not positive_drift, note=drift_note))

    # kernel lemmas
    if kernel is None:
        checks.append(_skipped("kernel_sandwich", "no kernel (stage cost not strictly convex)"))
        checks.append(_skipped("kernel_stickiness", "no kernel"))
        checks.append(_skipped("kernel_constraint_inactive", "no kernel"))
        checks.append(_skipped("kernel_break_point_bounds", "no kernel"))
    else:
        p = kernel.p_points
        phi = kernel.phi_values
        b = params.shock.upper
        ktol = 1e-6 * (b + params.s_bar)
        gate = not kernel.assumption4

        dphi = np.diff(phi)
        dp = np.diff(p)
        worst = float(max(dphi.max(), np.max(-dp - dphi)))
        checks.append(_check("kernel_sandwich", worst <= ktol, worst, ktol,
                             gated=gate, note=drift_note))

        drain = np.abs(phi + p) <= ktol
        zero = np.abs(phi) <= ktol
        worst_drain = 0.0
        if np.any(drain):
            last = int(np.max(np.nonzero(drain)))
            worst_drain = float(np.max(np.abs(phi + p)[: last + 1]))
        worst_zero = 0.0
        if np.any(zero):
            first = int(np.min(np.nonzero(zero)))
            worst_zero = float(np.max(np.abs(phi)[first:]))
        worst = max(worst_drain, worst_zero)
        checks.append(_check("kernel_stickiness", worst <= ktol, worst, ktol,
                             gated=gate, note=drift_note))

        upper = np.minimum(b, params.s_bar - p)
        lower = np.maximum(0.0, -p)
        nondegenerate = upper - lower > ktol
        if np.any(nondegenerate):
            margin = float(np.min((upper - phi)[nondegenerate]))
        else:
            margin = math.inf
        checks.append(_check("kernel_constraint_inactive", margin > ktol,
                             float(max(ktol - margin, 0.0)), ktol,
                             gated=gate, note=drift_note))

        b0_floor = -min(cost.inverse_derivative(slope_bound), b)
        ok = (-b - ktol <= b0_floor <= kernel.b0 + ktol) and (kernel.b1 <= params.s_bar + ktol)
        worst = float(max(b0_floor - kernel.b0, kernel.b1 - params.s_bar, -b - b0_floor, 0.0))
        checks.append(_check("kernel_break_point_bounds", ok, worst, ktol,
                             gated=gate, note=drift_note))

    return VerificationReport(checks=tuple(checks))
