"""Iteration schemes for min-max problems and theory-derived parameter selection.

Three schemes are provided.  Plain gradient descent-ascent (``gda``)
alternates a projected descent step in x with a projected ascent step in y
and is known to oscillate on merely concave dual problems.  The smoothed
variant (``smoothed-gda``) descends the anchored objective
K(x, z; y) = f(x, y) + (p/2)||x - z||^2 and drags the anchor z behind the
iterates with an averaging weight beta; ``smoothed-bgda`` updates the primal
coordinates block by block.  With parameters derived from the certified
Lipschitz constant the smoothed iterations make monotone progress on a
potential function and admit explicit stationarity certificates.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Array,
    IterateTrace,
    MinMaxProblem,
    SolverParams,
    SolverState,
    alpha_upper_bound,
    beta_upper_bound,
)
from .diagnostics import potential, psi_value, residual_exact, surrogate_kappa
from .errors import (
    ConfigurationError,
    OracleError,
    ParameterError,
    RegionViolationError,
    UsageError,
)

__all__ = [
    "ALGORITHMS",
    "Certificate",
    "StopRule",
    "RecordOptions",
    "derive_params",
    "gda_step",
    "smoothed_gda_step",
    "smoothed_bgda_step",
    "run",
    "certificate",
]

ALGORITHMS = ("gda", "smoothed-gda", "smoothed-bgda")


def derive_params(
    L: float,
    N: int = 1,
    safety: float = 0.99,
    theorem1_T: int | None = None,
) -> SolverParams:
    """Theory-compliant parameters for a problem with Lipschitz constant ``L``.

    Fixes p = 4L and c = 1/(2(p+L)), then backs off the strict upper bounds
    on alpha and beta by the ``safety`` factor:

        alpha = safety * min{1/(11L), c^2 (p-L)^2 / (4L (1 + c(p-L))^2)}
        beta  = safety * min{1/36,    (p-L)^2 / (384 p (p+L)^2)}

    For N > 1 the alpha bound's denominator gains the block term
    c (p+L) N^{3/2}.  ``theorem1_T`` optionally caps beta at 0.99/sqrt(T) for
    a planned horizon of T iterations.
    """
    if L <= 0:
        raise ParameterError("derive_params: L must be positive")
    if not (0.0 < safety < 1.0):
        raise ParameterError("derive_params: safety must lie strictly inside (0, 1)")
    if N < 1:
        raise ParameterError("derive_params: N must be a positive integer")
    p = 4.0 * L
    c = 1.0 / (2.0 * (p + L))
    alpha = safety * alpha_upper_bound(L, p, c, N)
    beta = safety * beta_upper_bound(L, p)
    if theorem1_T is not None:
        if theorem1_T < 1:
            raise ParameterError("derive_params: theorem1_T must be positive")
        beta = min(beta, 0.99 / math.sqrt(theorem1_T))
    return SolverParams(p=p, c=c, alpha=alpha, beta=beta, N=N)


def _require_finite(name: str, v: Array) -> None:
    if not np.all(np.isfinite(v)):
        raise OracleError(f"{name} produced a non-finite value")


def gda_step(problem: MinMaxProblem, state: SolverState, c: float, alpha: float) -> SolverState:
    """One gradient descent-ascent step; the ascent uses the fresh primal point."""
    x, y = state.x, state.y
    gx = problem.grad_x(x, y)
    _require_finite("grad_x", gx)
    x_new = problem.proj_x(x - c * gx)
    gy = problem.grad_y(x_new, y)
    _require_finite("grad_y", gy)
    y_new = problem.proj_y(y + alpha * gy)
    return SolverState(x_new, y_new, state.z, state.t + 1)


def smoothed_gda_step(problem: MinMaxProblem, state: SolverState, params: SolverParams) -> SolverState:
    """One smoothed step: descend K in x, ascend in y at the fresh x, relax the anchor z.

    The anchor's quadratic has no y-gradient, so the ascent direction is just
    grad_y at (x', y).  Raises :class:`RegionViolationError` when the new
    primal point leaves the operating region.
    """
    x, y, z = state.x, state.y, state.z
    gx = problem.grad_x(x, y)
    _require_finite("grad_x", gx)
    x_new = problem.proj_x(x - params.c * (gx + params.p * (x - z)))
    if not problem.operating_region.contains(x_new, slack=1e-12):
        raise RegionViolationError(
            f"iterate left the operating region at t={state.t + 1}"
        )
    gy = problem.grad_y(x_new, y)
    _require_finite("grad_y", gy)
    y_new = problem.proj_y(y + params.alpha * gy)
    z_new = z + params.beta * (x_new - z)
    return SolverState(x_new, y_new, z_new, state.t + 1)


def _bgda_sweep(problem, x, y, z, p, c):
    """Sequential block sweep of the primal update.

    Each block's gradient is evaluated at the mix of already-updated earlier
    blocks and not-yet-updated later blocks.  Returns the new primal point and
    the per-block anchored gradients seen during the sweep (needed to build
    certificates).
    """
    x_cur = x.copy()
    staged = []
    for (start, stop) in problem.blocks:
        g = problem.grad_x(x_cur, y)
        _require_finite("grad_x", g)
        g_block = g[start:stop] + p * (x_cur[start:stop] - z[start:stop])
        trial = x_cur.copy()
        trial[start:stop] = trial[start:stop] - c * g_block
        # x_set factors over the blocks, so projecting the full vector only
        # moves the block just updated.
        x_cur = problem.proj_x(trial)
        staged.append((start, stop, g_block))
    return x_cur, staged


def smoothed_bgda_step(problem: MinMaxProblem, state: SolverState, params: SolverParams) -> SolverState:
    """One multi-block smoothed step: sweep the blocks in order, then update y and z."""
    if problem.blocks is None:
        raise ConfigurationError("smoothed_bgda_step requires a problem with declared blocks")
    x, y, z = state.x, state.y, state.z
    x_new, _ = _bgda_sweep(problem, x, y, z, params.p, params.c)
    if not problem.operating_region.contains(x_new, slack=1e-12):
        raise RegionViolationError(
            f"iterate left the operating region at t={state.t + 1}"
        )
    gy = problem.grad_y(x_new, y)
    _require_finite("grad_y", gy)
    y_new = problem.proj_y(y + params.alpha * gy)
    z_new = z + params.beta * (x_new - z)
    return SolverState(x_new, y_new, z_new, state.t + 1)


@dataclass(frozen=True)
class StopRule:
    """Stop at ``max_iter`` iterations or when the stopping residual falls to ``tol``."""

    max_iter: int
    tol: float = 0.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ParameterError("StopRule: max_iter must be positive")
        if self.tol < 0:
            raise ParameterError("StopRule: tol must be nonnegative")


@dataclass(frozen=True)
class RecordOptions:
    """What a run writes into its trace.

    ``stride`` thins the records; the first and final iterations are always
    kept.  ``exact_every`` / ``potential_every`` additionally compute the
    exact dual residual / the potential at that cadence (smoothed algorithms
    only), using inner solves at ``inner_tol``.
    """

    stride: int = 1
    psi: bool = False
    exact_every: int | None = None
    potential_every: int | None = None
    inner_tol: float = 1e-10
    wall_time: bool = False

    def __post_init__(self):
        if self.stride < 1:
            raise ParameterError("RecordOptions: stride must be >= 1")
        for k in (self.exact_every, self.potential_every):
            if k is not None and k < 1:
                raise ParameterError("RecordOptions: strides must be >= 1")


def _stop_surrogate(algorithm, rx, ydisp, rz, kappa, c, alpha):
    """Stopping residual for one step.

    Smoothed runs use the displacement triple max{rx, ||dy|| + kappa rx, rz},
    whose middle entry bounds the exact dual residual from above.  Plain GDA
    has no anchor, so raw displacements shrink with the step sizes regardless
    of stationarity; its stopping residual is the step-normalized
    gradient-mapping pair max{rx/c, ||dy||/alpha}.
    """
    if algorithm == "gda":
        return max(rx / c, ydisp / alpha)
    return max(rx, ydisp + kappa * rx, rz)


def run(
    problem: MinMaxProblem,
    algorithm: str,
    params: SolverParams,
    stop: StopRule,
    record: RecordOptions = RecordOptions(),
    x0: Array | None = None,
    y0: Array | None = None,
    z0: Array | None = None,
    seed: int | None = None,
) -> tuple[IterateTrace, SolverState]:
    """Iterate one of the schemes until the stop rule fires, tracing as configured.

    Initial points are projected onto their sets; the anchor defaults to the
    initial primal point.  Non-finite iterates and operating-region exits do
    not raise: the run aborts with the last valid state and marks the trace's
    ``stop_reason`` (``diverged`` / ``region-violation``), alongside
    ``tol-reached`` and ``max-iter`` for clean stops.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if algorithm == "smoothed-bgda" and problem.blocks is None:
        raise ConfigurationError("smoothed-bgda requires a problem with declared blocks")
    if algorithm == "gda" and (record.exact_every or record.potential_every):
        raise ConfigurationError("exact residual / potential recording needs a smoothed run")

    x = problem.proj_x(np.asarray(x0 if x0 is not None else np.zeros(problem.n), dtype=float))
    y = problem.proj_y(np.asarray(y0 if y0 is not None else np.zeros(problem.m), dtype=float))
    z = np.asarray(z0, dtype=float).copy() if z0 is not None else x.copy()

    p, c, alpha, beta = params.p, params.c, params.alpha, params.beta
    kappa = 0.0
    if algorithm != "gda":
        kappa = surrogate_kappa(problem, p, c, alpha, params.N)

    trace = IterateTrace(
        metadata={
            "problem_id": problem.problem_id,
            "algorithm": algorithm,
            "params": params.as_dict(),
            "seed": seed,
            "kappa": kappa,
            "stop_reason": "max-iter",
        }
    )
    state = SolverState(x, y, z, 0)
    lo, hi = problem.operating_region.lo, problem.operating_region.hi
    bounded_region = not (np.all(np.isneginf(lo)) and np.all(np.isposinf(hi)))
    t0 = time.perf_counter_ns()

    def record_row(t, rx, ry_sur, rz, x_t, y_t, z_t, kind="surrogate", ry_exact=None):
        f_val = float(problem.eval_f(x_t, y_t))
        psi = phi = None
        if record.psi:
            psi = psi_value(problem, x_t, record.inner_tol)
        if record.potential_every and t % record.potential_every == 0:
            phi = potential(problem, SolverState(x_t, y_t, z_t, t), p, record.inner_tol).phi
        wall = time.perf_counter_ns() - t0 if record.wall_time else None
        ry = ry_exact if kind == "exact" else ry_sur
        trace.append(t, rx, ry, rz, f_val, ry_kind=kind, psi=psi, phi=phi, wall_ns=wall)

    stop_reason = "max-iter"
    final = state
    t = 0
    while t < stop.max_iter:
        t += 1
        try:
            if algorithm == "gda":
                new = gda_step(problem, state, c, alpha)
            elif algorithm == "smoothed-gda":
                new = smoothed_gda_step(problem, state, params)
            else:
                new = smoothed_bgda_step(problem, state, params)
        except RegionViolationError:
            stop_reason = "region-violation"
            break
        except OracleError:
            stop_reason = "diverged"
            break

        rx = float(np.linalg.norm(state.x - new.x))
        ydisp = float(np.linalg.norm(state.y - new.y))
        rz = float(np.linalg.norm(new.x - state.z))
        if not (rx + ydisp + rz < math.inf):  # catches NaN and inf together
            stop_reason = "diverged"
            break
        if bounded_region and not problem.operating_region.contains(new.x, slack=1e-12):
            stop_reason = "region-violation"
            break

        surrogate = _stop_surrogate(algorithm, rx, ydisp, rz, kappa, c, alpha)
        reached = stop.tol > 0 and surrogate <= stop.tol
        if stop.tol == 0 and surrogate == 0.0:
            reached = True

        want_exact = (
            record.exact_every is not None and t % record.exact_every == 0
        )
        if t % record.stride == 0 or t == 1 or reached or t == stop.max_iter or want_exact:
            kind = "surrogate"
            ry_exact = None
            if want_exact:
                ry_exact = residual_exact(problem, state, new, p, alpha, record.inner_tol).ry
                kind = "exact"
            record_row(t, rx, ydisp + kappa * rx, rz, new.x, new.y, new.z,
                       kind=kind, ry_exact=ry_exact)

        state = new
        final = new
        if reached:
            stop_reason = "tol-reached"
            break

    trace.metadata["stop_reason"] = stop_reason
    if stop_reason in ("diverged", "region-violation"):
        final = state  # last valid state
    return trace, final


@dataclass(frozen=True)
class Certificate:
    """Explicit stationarity witnesses for one smoothed step.

    ``u`` belongs to grad_x f(x', y') plus the normal cone of X at x', ``v``
    to -grad_y f(x', y') plus the normal cone of Y at y', both exactly by
    projection optimality.  Under theory-compliant parameters their norms are
    bounded by lambda_bar times the residual level epsilon (surrogate level
    here; slack 1e-8 plus inner-solve tolerance applies when epsilon is
    measured with exact residuals).
    """

    epsilon: float
    lambda_bar: float
    u_norm: float
    v_norm: float
    kappa: float

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "lambda_bar": self.lambda_bar,
            "u_norm": self.u_norm,
            "v_norm": self.v_norm,
            "kappa": self.kappa,
        }


def certificate(
    problem: MinMaxProblem,
    prev: SolverState,
    next_state: SolverState,
    params: SolverParams,
) -> Certificate:
    """Build the explicit optimality witnesses for the step prev -> next.

    Projection optimality of the primal update places

        u = grad_x(x', y') - grad_x(x, y) - p (x - z) - (1/c)(x' - x)

    inside grad_x f(x', y') + the normal cone at x' (for the block sweep the
    anchored gradient is taken at each block's staged point), and

        v = grad_y(x', y) - grad_y(x', y') - (1/alpha)(y' - y)

    inside -grad_y f(x', y') + the normal cone at y'.  Reports their norms
    together with the surrogate residual level, kappa, and lambda_bar.
    """
    if next_state.t != prev.t + 1:
        raise UsageError("certificate: states are not adjacent iterates")
    x, y, z = prev.x, prev.y, prev.z
    xn, yn = next_state.x, next_state.y
    p, c, alpha = params.p, params.c, params.alpha

    gx_new = problem.grad_x(xn, yn)
    if problem.blocks is not None and len(problem.blocks) > 1:
        _, staged = _bgda_sweep(problem, x, y, z, p, c)
        u = gx_new - (1.0 / c) * (xn - x)
        for (start, stop, g_block) in staged:
            u[start:stop] -= g_block
    else:
        u = gx_new - problem.grad_x(x, y) - p * (x - z) - (1.0 / c) * (xn - x)
    v = problem.grad_y(xn, y) - problem.grad_y(xn, yn) - (1.0 / alpha) * (yn - y)

    rx = float(np.linalg.norm(x - xn))
    ydisp = float(np.linalg.norm(y - yn))
    rz = float(np.linalg.norm(xn - z))
    kappa = surrogate_kappa(problem, p, c, alpha, params.N)
    epsilon = max(rx, ydisp + kappa * rx, rz)
    lambda_bar = (2.0 + kappa) * (problem.lipschitz_L + 1.0 / alpha) + p + 1.0 / (2.0 * c)
    return Certificate(
        epsilon=epsilon,
        lambda_bar=lambda_bar,
        u_norm=float(np.linalg.norm(u)),
        v_norm=float(np.linalg.norm(v)),
        kappa=kappa,
    )
