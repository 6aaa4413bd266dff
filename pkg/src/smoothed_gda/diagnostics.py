"""Analytical machinery around the anchored objective K(x, z; y) = f(x, y) + (p/2)||x - z||^2.

For smoothing strength p above the objective's convexity deficit, K is
strongly convex in x, which makes the inner argmin

    x(y, z) = argmin_{x in X} K(x, z; y)

well defined and cheap to compute by projected gradient descent.  On top of
it this module evaluates the dual value d(y, z) = min_x K, the proximal value
P(z) = min_x max_y K, the potential K - 2d + 2P that decreases along
well-parameterized runs, the derived constants entering the convergence
analysis, exact residuals, sufficient-decrease margins, empirical error-bound
ratios, and log-log rate fits.

Every operation reports or accepts the inner-solve tolerance it uses so that
tolerance slack in downstream checks stays auditable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Array, IterateTrace, MinMaxProblem, Residuals, SolverState
from .errors import (
    ConfigurationError,
    ConvergenceFailureError,
    InsufficientDataError,
    ParameterError,
    UsageError,
)

__all__ = [
    "Constants",
    "PotentialRecord",
    "ProxSolution",
    "constants",
    "solve_x_of_yz",
    "y_plus",
    "dual_value",
    "prox_value",
    "potential",
    "psi_value",
    "residual_exact",
    "check_sufficient_decrease",
    "error_bound_ratio",
    "ErrorBoundProbe",
    "fit_rate",
]

_INNER_CAP = 10 ** 6


@dataclass(frozen=True)
class Constants:
    """Derived constants of the convergence analysis for given (L, p, c, alpha, N).

    sigma1 bounds the z-sensitivity of the inner argmin, sigma2 its
    y-sensitivity, sigma3 relates the post-step distance to the argmin to the
    step length (sigma3_multi is the block-sweep analogue), L_d is the
    Lipschitz constant of the dual gradient, kappa = alpha * L * sigma3 the
    dual-surrogate amplification, and lambda_bar converts a residual level
    into a certificate norm bound.
    """

    sigma1: float
    sigma2: float
    sigma3: float
    sigma3_multi: float
    L_d: float
    kappa: float
    lambda_bar: float


def constants(L: float, p: float, c: float, alpha: float, N: int = 1) -> Constants:
    """Evaluate the derived constants; requires p > L."""
    if p <= L:
        raise ParameterError("constants: requires smoothing strength p > L")
    if c <= 0 or alpha <= 0:
        raise ParameterError("constants: c and alpha must be positive")
    sigma1 = p / (p - L)
    sigma2 = 2.0 * (p + L) / (p - L)
    sigma3 = (1.0 + c * (p - L)) / (c * (p - L))
    sigma3_multi = (c * (p - L) + 1.0 + c * (L + p) * N ** 1.5) / (c * (p - L))
    L_d = L + L * sigma2
    kappa = alpha * L * (sigma3 if N == 1 else sigma3_multi)
    lambda_bar = (2.0 + kappa) * (L + 1.0 / alpha) + p + 1.0 / (2.0 * c)
    return Constants(sigma1, sigma2, sigma3, sigma3_multi, L_d, kappa, lambda_bar)


def surrogate_kappa(problem: MinMaxProblem, p: float, c: float, alpha: float, N: int = 1) -> float:
    """Amplification factor for the oracle-free dual residual surrogate.

    Uses the problem's convexity deficit rho in place of L inside sigma3, so
    the surrogate stays a sound upper bound for objectives that are linear in
    x even when p <= L.  Requires p > rho.
    """
    rho = problem.rho
    if p <= rho:
        raise ParameterError("surrogate kappa: requires p > convexity deficit")
    mu = p - rho
    L = problem.lipschitz_L
    if N == 1:
        sigma3 = (1.0 + c * mu) / (c * mu)
    else:
        sigma3 = (c * mu + 1.0 + c * (L + p) * N ** 1.5) / (c * mu)
    return alpha * L * sigma3


def _strong_modulus(problem: MinMaxProblem, p: float) -> float:
    mu = p - problem.rho
    if mu <= 0:
        raise ParameterError(
            f"inner solve requires p > convexity deficit (p={p}, rho={problem.rho})"
        )
    return mu


def solve_x_of_yz(
    problem: MinMaxProblem,
    y: Array,
    z: Array,
    p: float,
    tol: float = 1e-10,
    x0: Array | None = None,
    max_iter: int = _INNER_CAP,
) -> Array:
    """Inner argmin x(y, z) of the anchored objective, to gradient-mapping level ``tol``.

    Projected gradient descent with step 1/(L+p), warm-started at ``x0``
    (default z), stopped once (L+p) * ||x - P_X(x - grad/(L+p))|| <= tol.  By
    strong convexity the returned point lies within tol / (p - rho) of the
    true argmin.
    """
    mu = _strong_modulus(problem, p)
    L = problem.lipschitz_L
    step = 1.0 / (L + p)
    x = np.asarray(z if x0 is None else x0, dtype=float).copy()
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    last = math.inf
    for _ in range(max_iter):
        g = problem.grad_x(x, y) + p * (x - z)
        x_next = problem.proj_x(x - step * g)
        last = float(np.linalg.norm(x - x_next)) / step
        if last <= tol:
            return x_next
        x = x_next
    raise ConvergenceFailureError(
        f"inner argmin did not reach tol={tol:g} within {max_iter} iterations",
        last_residual=last,
    )


def y_plus(
    problem: MinMaxProblem,
    y: Array,
    z: Array,
    p: float,
    alpha: float,
    tol: float = 1e-10,
    x0: Array | None = None,
) -> Array:
    """One exact dual ascent step P_Y(y + alpha * grad_y at the inner argmin)."""
    x_hat = solve_x_of_yz(problem, y, z, p, tol, x0=x0)
    return problem.proj_y(np.asarray(y, dtype=float) + alpha * problem.grad_y(x_hat, y))


def dual_value(
    problem: MinMaxProblem,
    y: Array,
    z: Array,
    p: float,
    tol: float = 1e-10,
    x0: Array | None = None,
) -> tuple[float, float]:
    """Dual value d(y, z) = min_x K(x, z; y) and a bound on its evaluation error.

    The error bound combines the curvature term (L+p)/(2 mu^2) * tol^2 with
    first-order slack tol^2 / mu from the inexact argmin.
    """
    mu = _strong_modulus(problem, p)
    x_hat = solve_x_of_yz(problem, y, z, p, tol, x0=x0)
    value = problem.value_K(x_hat, z, y, p)
    err = (problem.lipschitz_L + p) * tol * tol / (2.0 * mu * mu) + tol * tol / mu
    return value, err


@dataclass(frozen=True)
class ProxSolution:
    """Result of evaluating the proximal value P(z) = min_x max_y K(x, z; y)."""

    P: float
    x_star: Array
    y_star: Array
    inner_tol: float


def prox_value(
    problem: MinMaxProblem,
    z: Array,
    p: float,
    tol: float = 1e-8,
    y0: Array | None = None,
    max_iter: int = _INNER_CAP,
) -> ProxSolution:
    """Proximal value P(z) via concave maximization of d(., z) over Y.

    The dual value's gradient is grad_y at the inner argmin, Lipschitz with
    constant L_d; projected gradient ascent with step 1/L_d (inner argmins at
    tol/10) stops when the ascent displacement falls below ``tol``.  Returns
    the value, the matching primal point x(y, z), and the final y.
    """
    if not math.isfinite(problem.diameter_Y):
        raise ConfigurationError("prox_value requires a compact dual feasible set")
    mu = _strong_modulus(problem, p)
    L = problem.lipschitz_L
    # Dual-gradient Lipschitz bound with the problem's true strong modulus.
    sigma2 = 2.0 * (p + L) / mu
    L_d = L + L * sigma2
    if L_d <= 0:
        L_d = p  # zero-Lipschitz objective: any positive step works
    step = 1.0 / L_d
    if y0 is None:
        y = problem.proj_y(np.zeros(problem.m))
    else:
        y = problem.proj_y(np.asarray(y0, dtype=float))
    z = np.asarray(z, dtype=float)
    x_warm = None
    inner_tol = tol / 10.0
    for _ in range(max_iter):
        x_hat = solve_x_of_yz(problem, y, z, p, inner_tol, x0=x_warm)
        x_warm = x_hat
        y_next = problem.proj_y(y + step * problem.grad_y(x_hat, y))
        moved = float(np.linalg.norm(y - y_next))
        if moved <= tol:
            value = problem.value_K(x_hat, z, y, p)
            return ProxSolution(value, x_hat, y, inner_tol)
        y = y_next
    raise ConvergenceFailureError(
        f"proximal ascent did not reach tol={tol:g} within {max_iter} iterations",
        last_residual=moved,
    )


@dataclass(frozen=True)
class PotentialRecord:
    """Potential decomposition at one state: K, d, P, and phi = K - 2d + 2P."""

    K_value: float
    d_value: float
    P_value: float
    phi: float
    inner_tol: float


def potential(
    problem: MinMaxProblem, state: SolverState, p: float, tol: float = 1e-10
) -> PotentialRecord:
    """Assemble the potential phi = K - 2 d + 2 P at the state's (x, y, z)."""
    K_val = problem.value_K(state.x, state.z, state.y, p)
    d_val, _ = dual_value(problem, state.y, state.z, p, tol)
    prox = prox_value(problem, state.z, p, max(tol, 1e-12), y0=state.y)
    phi = K_val - 2.0 * d_val + 2.0 * prox.P
    return PotentialRecord(K_val, d_val, prox.P, phi, tol)


def psi_value(problem: MinMaxProblem, x: Array, tol: float = 1e-8) -> float:
    """Evaluate psi(x) = max_y f(x, y).

    Exact (a finite max) for problems exposing component values; otherwise by
    projected gradient ascent on the concave map y -> f(x, y).
    """
    comp = getattr(problem, "component_values", None)
    if comp is not None:
        return float(np.max(comp(x)))
    if not math.isfinite(problem.diameter_Y):
        raise ConfigurationError("psi_value requires a compact dual feasible set")
    L = max(problem.lipschitz_L, 1e-12)
    y = problem.proj_y(np.zeros(problem.m))
    for _ in range(_INNER_CAP):
        y_next = problem.proj_y(y + (1.0 / L) * problem.grad_y(x, y))
        if float(np.linalg.norm(y - y_next)) <= tol:
            return float(problem.eval_f(x, y_next))
        y = y_next
    raise ConvergenceFailureError("psi ascent did not converge", last_residual=None)


def residual_exact(
    problem: MinMaxProblem,
    prev: SolverState,
    next_state: SolverState,
    p: float,
    alpha: float,
    tol: float = 1e-10,
) -> Residuals:
    """Exact residual triple across one step: rx, ry (via inner solve), rz."""
    if next_state.t != prev.t + 1:
        raise UsageError("residual_exact: states are not adjacent iterates")
    rx = float(np.linalg.norm(prev.x - next_state.x))
    yp = y_plus(problem, prev.y, prev.z, p, alpha, tol)
    ry = float(np.linalg.norm(prev.y - yp))
    rz = float(np.linalg.norm(next_state.x - prev.z))
    return Residuals(rx, ry, rz, kind="exact")


def check_sufficient_decrease(trace: IterateTrace, params) -> tuple[np.ndarray, float]:
    """Per-step decrease margins of the potential along a trace.

    margin_t = (phi_t - phi_{t+1}) - [rx^2/(16c) + ry^2/(16 alpha) + p beta rz^2 / 16],
    where the residuals are the exact ones recorded for the step t -> t+1.
    Requires consecutive records carrying phi and exact residuals; returns the
    margin sequence and its minimum.
    """
    idx = [
        i
        for i in range(len(trace))
        if trace.phi[i] is not None and trace.ry_kind[i] == "exact"
    ]
    if len(idx) < 2:
        raise UsageError("check_sufficient_decrease: trace lacks phi/exact-residual records")
    margins = []
    for a, b in zip(idx[:-1], idx[1:]):
        if trace.t[b] != trace.t[a] + 1:
            raise UsageError(
                "check_sufficient_decrease: records must cover consecutive iterations"
            )
        drop = trace.phi[a] - trace.phi[b]
        # Residuals recorded at index b describe the step t_a -> t_b.
        required = (
            trace.rx[b] ** 2 / (16.0 * params.c)
            + trace.ry[b] ** 2 / (16.0 * params.alpha)
            + params.p * params.beta * trace.rz[b] ** 2 / 16.0
        )
        margins.append(drop - required)
    margins = np.asarray(margins)
    return margins, float(np.min(margins))


@dataclass(frozen=True)
class ErrorBoundProbe:
    """Empirical dual error-bound probe at one (y, z).

    ``lhs`` is the distance from the post-ascent inner argmin to the proximal
    minimizer, ``rhs`` the dual displacement; their ratio stays bounded on
    trajectories entering the solution regime.  ``weak_lhs <= weak_rhs`` is
    the nonhomogeneous bound alpha (p-L) lhs^2 <= (1 + alpha L + alpha L
    sigma2) rhs D(Y), checked as stated.
    """

    ratio: float
    lhs: float
    rhs: float
    weak_lhs: float
    weak_rhs: float
    inner_tol: float

    @property
    def weak_bound_holds(self) -> bool:
        return self.weak_lhs <= self.weak_rhs + 1e-8


def error_bound_ratio(
    problem: MinMaxProblem,
    y: Array,
    z: Array,
    p: float,
    alpha: float,
    tol: float = 1e-8,
) -> ErrorBoundProbe:
    """Probe the dual error bound at (y, z); see :class:`ErrorBoundProbe`."""
    if not math.isfinite(problem.diameter_Y):
        raise ConfigurationError("error_bound_ratio requires a compact dual feasible set")
    L = problem.lipschitz_L
    yp = y_plus(problem, y, z, p, alpha, tol)
    rhs = float(np.linalg.norm(np.asarray(y, dtype=float) - yp))
    x_of_yp = solve_x_of_yz(problem, yp, z, p, tol)
    prox = prox_value(problem, z, p, tol, y0=yp)
    lhs = float(np.linalg.norm(x_of_yp - prox.x_star))
    if lhs <= tol and rhs <= tol:
        ratio = 0.0
    elif rhs == 0.0:
        ratio = math.inf
    else:
        ratio = lhs / rhs
    sigma2 = 2.0 * (p + L) / (p - L) if p > L else math.inf
    weak_lhs = alpha * (p - L) * lhs * lhs
    weak_rhs = (1.0 + alpha * L + alpha * L * sigma2) * rhs * problem.diameter_Y
    return ErrorBoundProbe(ratio, lhs, rhs, weak_lhs, weak_rhs, tol)


def fit_rate(trace: IterateTrace, window: tuple[float, float]) -> float:
    """Least-squares slope of log(best-so-far max residual) versus log(t).

    The best-so-far envelope accumulates from the start of the trace; records
    with zero residual inside the window are excluded.  Raises
    :class:`InsufficientDataError` with fewer than 10 usable points.
    """
    if len(trace) == 0:
        raise InsufficientDataError("fit_rate: empty trace")
    t_lo, t_hi = window
    env = trace.best_so_far()
    idx = trace.window(t_lo, t_hi)
    if idx.size == 0:
        raise InsufficientDataError("fit_rate: no records inside the window")
    ts = np.asarray(trace.t, dtype=float)[idx]
    vals = env[idx]
    keep = vals > 0.0
    ts, vals = ts[keep], vals[keep]
    if ts.size < 10:
        raise InsufficientDataError(
            f"fit_rate: only {ts.size} usable points in window (need >= 10)"
        )
    lt = np.log(ts)
    lv = np.log(vals)
    lt_c = lt - lt.mean()
    slope = float(np.dot(lt_c, lv - lv.mean()) / np.dot(lt_c, lt_c))
    return slope
