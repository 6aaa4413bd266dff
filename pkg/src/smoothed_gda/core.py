"""Shared contracts: problem oracles, solver parameters, state, and traces.

A :class:`MinMaxProblem` bundles the oracles for ``min_x max_y f(x, y)`` with
the feasible sets, a certified gradient Lipschitz constant, and the box over
which that constant is valid.  Problems are immutable after construction and
all oracles are pure, so instances can be shared across concurrent runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DomainError,
    OracleError,
    ParameterError,
    UsageError,
)
from .projections import FeasibleSet

__all__ = [
    "Box",
    "MinMaxProblem",
    "SolverParams",
    "SolverState",
    "Residuals",
    "IterateTrace",
    "check_gradients",
    "alpha_upper_bound",
    "beta_upper_bound",
]

Array = np.ndarray


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, possibly unbounded (infinite endpoints allowed)."""

    lo: Array
    hi: Array

    @staticmethod
    def unbounded(dim: int) -> "Box":
        return Box(np.full(dim, -np.inf), np.full(dim, np.inf))

    @staticmethod
    def centered(dim: int, halfwidth: float) -> "Box":
        return Box(np.full(dim, -float(halfwidth)), np.full(dim, float(halfwidth)))

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise DomainError("Box: lo and hi must have the same shape")
        if np.any(lo > hi):
            raise DomainError("Box: lo > hi in some coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def contains(self, x: Array, slack: float = 0.0) -> bool:
        return bool(np.all(x >= self.lo - slack) and np.all(x <= self.hi + slack))

    def sample(self, rng: np.random.Generator, fallback_halfwidth: float = 1.0) -> Array:
        lo = np.where(np.isfinite(self.lo), self.lo, -fallback_halfwidth)
        hi = np.where(np.isfinite(self.hi), self.hi, fallback_halfwidth)
        return lo + rng.random(self.dim) * (hi - lo)


def _as_blocks(blocks, n: int):
    """Normalize block ranges to half-open (start, stop) tuples covering [0, n)."""
    if blocks is None:
        return None
    norm = []
    for b in blocks:
        start, stop = int(b[0]), int(b[1])
        if not (0 <= start < stop <= n):
            raise ConfigurationError(f"block ({start}, {stop}) out of range for n={n}")
        norm.append((start, stop))
    norm.sort()
    cursor = 0
    for start, stop in norm:
        if start != cursor:
            raise ConfigurationError("blocks must be disjoint and cover all coordinates")
        cursor = stop
    if cursor != n:
        raise ConfigurationError("blocks must cover all coordinates")
    return tuple(norm)


@dataclass(frozen=True, eq=False)
class MinMaxProblem:
    """Oracle bundle for a smooth min-max problem over X x Y.

    Parameters
    ----------
    n, m:
        Primal and dual dimensions.
    eval_f, grad_x, grad_y:
        Deterministic pure oracles for the objective and its partial gradients.
    x_set, y_set:
        Feasible sets; their exact projectors are exposed as :meth:`proj_x`
        and :meth:`proj_y`.
    lipschitz_L:
        Certified Lipschitz constant of both partial gradients, jointly in
        (x, y), valid while x stays inside ``operating_region``.
    operating_region:
        Box over which ``lipschitz_L`` was certified; solvers abort when an
        iterate leaves it.
    convexity_deficit:
        Smallest rho >= 0 such that f(., y) + (rho/2)||x||^2 is convex for
        every feasible y.  Defaults to ``lipschitz_L`` (always valid); tighter
        values (0 for objectives linear in x) let the smoothing anchor use
        smaller strengths.
    blocks:
        Optional index ranges partitioning the primal coordinates, enabling
        the block-coordinate solver.  Requires ``x_set`` to factor as a
        product across the blocks.
    lower_bound:
        Known lower bound on max_y f(., y), when available.
    """

    n: int
    m: int
    eval_f: Callable[[Array, Array], float]
    grad_x: Callable[[Array, Array], Array]
    grad_y: Callable[[Array, Array], Array]
    x_set: FeasibleSet
    y_set: FeasibleSet
    lipschitz_L: float
    operating_region: Box | None = None
    convexity_deficit: float | None = None
    blocks: tuple | None = None
    lower_bound: float | None = None
    problem_id: str = "custom"

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigurationError("dimensions must be positive")
        if self.x_set.dim != self.n or self.y_set.dim != self.m:
            raise ConfigurationError("feasible-set dimensions do not match n, m")
        if not (self.lipschitz_L >= 0.0 and math.isfinite(self.lipschitz_L)):
            raise ConfigurationError("lipschitz_L must be a finite nonnegative real")
        region = self.operating_region
        if region is None:
            region = Box.unbounded(self.n)
        if region.dim != self.n:
            raise ConfigurationError("operating_region dimension does not match n")
        object.__setattr__(self, "operating_region", region)
        blocks = _as_blocks(self.blocks, self.n)
        if blocks is not None and not self.x_set.is_product_over(blocks):
            raise ConfigurationError(
                "x_set is not a product set over the declared blocks"
            )
        object.__setattr__(self, "blocks", blocks)
        if self.convexity_deficit is not None:
            if self.convexity_deficit < 0:
                raise ConfigurationError("convexity_deficit must be nonnegative")

    @property
    def rho(self) -> float:
        """Effective weak-convexity constant used by inner solves."""
        if self.convexity_deficit is None:
            return self.lipschitz_L
        return self.convexity_deficit

    @property
    def diameter_Y(self) -> float:
        return self.y_set.diameter()

    @property
    def num_blocks(self) -> int:
        return 1 if self.blocks is None else len(self.blocks)

    def proj_x(self, v: Array) -> Array:
        return self.x_set.project(v)

    def proj_y(self, v: Array) -> Array:
        return self.y_set.project(v)

    def value_K(self, x: Array, z: Array, y: Array, p: float) -> float:
        """Anchored objective f(x, y) + (p/2)||x - z||^2."""
        return float(self.eval_f(x, y)) + 0.5 * p * float(np.dot(x - z, x - z))

    def grad_x_K(self, x: Array, z: Array, y: Array, p: float) -> Array:
        return self.grad_x(x, y) + p * (x - z)


@dataclass(frozen=True)
class SolverParams:
    """Step sizes and smoothing parameters: (p, c, alpha, beta) plus block count N."""

    p: float
    c: float
    alpha: float
    beta: float
    N: int = 1

    def __post_init__(self):
        if min(self.p, self.c, self.alpha) <= 0:
            raise ParameterError("p, c, alpha must be positive")
        if not (0.0 < self.beta <= 1.0):
            raise ParameterError("beta must lie in (0, 1]")
        if self.N < 1:
            raise ParameterError("N must be a positive integer")

    def theory_compliant(self, L: float) -> bool:
        """Whether the parameters satisfy the convergence conditions for Lipschitz constant L.

        Single block requires p > 3L, c < 1/(p+L), alpha strictly below its
        bound, beta <= its bound; the multi-block alpha bound shrinks with
        N^(3/2) and is non-strict.
        """
        if L <= 0:
            raise ParameterError("L must be positive")
        if not (self.p > 3.0 * L and self.c < 1.0 / (self.p + L)):
            return False
        ab = alpha_upper_bound(L, self.p, self.c, self.N)
        if self.N == 1:
            if not self.alpha < ab:
                return False
        else:
            if not self.alpha <= ab:
                return False
        return self.beta <= beta_upper_bound(L, self.p)

    def as_dict(self) -> dict:
        return {"p": self.p, "c": self.c, "alpha": self.alpha, "beta": self.beta, "N": self.N}


def alpha_upper_bound(L: float, p: float, c: float, N: int = 1) -> float:
    """Dual-step bound: min{1/(11L), c^2(p-L)^2 / (4L (1 + c(p+L)N^{3/2} + c(p-L))^2)}.

    For N = 1 the N-dependent middle term is absent.
    """
    if N == 1:
        denom = 1.0 + c * (p - L)
    else:
        denom = 1.0 + c * (p + L) * N ** 1.5 + c * (p - L)
    return min(1.0 / (11.0 * L), (c * (p - L)) ** 2 / (4.0 * L * denom * denom))


def beta_upper_bound(L: float, p: float) -> float:
    """Averaging-weight bound: min{1/36, (p-L)^2 / (384 p (p+L)^2)}."""
    return min(1.0 / 36.0, (p - L) ** 2 / (384.0 * p * (p + L) ** 2))


@dataclass(frozen=True)
class SolverState:
    """Current iterates (x, y, z) and the iteration counter."""

    x: Array
    y: Array
    z: Array
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=float)))


@dataclass(frozen=True)
class Residuals:
    """The three displacement norms whose smallness certifies approximate stationarity.

    ``rx = ||x_t - x_{t+1}||``, ``rz = ||x_{t+1} - z_t||``, and ``ry`` is
    either the exact dual residual ``||y_t - y_plus(y_t, z_t)||`` or its
    oracle-free surrogate ``||y_t - y_{t+1}|| + kappa * rx``, which bounds the
    exact value from above.
    """

    rx: float
    ry: float
    rz: float
    kind: str = "surrogate"  # "exact" | "surrogate"

    def __post_init__(self):
        if self.kind not in ("exact", "surrogate"):
            raise DomainError("Residuals.kind must be 'exact' or 'surrogate'")

    def max(self) -> float:
        return max(self.rx, self.ry, self.rz)


class IterateTrace:
    """Per-iteration records of a run: residuals, objective values, optional potential.

    Columnar storage; records are strictly ordered by iteration index ``t``.
    ``metadata`` carries the problem id, parameters, seed, algorithm name and
    the stop reason once the run finishes.
    """

    COLUMNS = ("t", "rx", "ry", "ry_kind", "rz", "f", "psi", "phi", "wall_ns")

    def __init__(self, metadata: dict | None = None):
        self.metadata = dict(metadata or {})
        self.t: list[int] = []
        self.rx: list[float] = []
        self.ry: list[float] = []
        self.ry_kind: list[str] = []
        self.rz: list[float] = []
        self.f: list[float] = []
        self.psi: list[Optional[float]] = []
        self.phi: list[Optional[float]] = []
        self.wall_ns: list[Optional[int]] = []

    def append(self, t, rx, ry, rz, f, ry_kind="surrogate", psi=None, phi=None, wall_ns=None):
        if self.t and t <= self.t[-1]:
            raise UsageError("trace records must be strictly ordered by t")
        self.t.append(int(t))
        self.rx.append(float(rx))
        self.ry.append(float(ry))
        self.ry_kind.append(str(ry_kind))
        self.rz.append(float(rz))
        self.f.append(float(f))
        self.psi.append(None if psi is None else float(psi))
        self.phi.append(None if phi is None else float(phi))
        self.wall_ns.append(None if wall_ns is None else int(wall_ns))

    def __len__(self) -> int:
        return len(self.t)

    def max_residuals(self) -> Array:
        """max(rx, ry, rz) per record."""
        return np.maximum(np.maximum(self.rx, self.ry), self.rz)

    def best_so_far(self) -> Array:
        """Running minimum of the per-record max residual."""
        return np.minimum.accumulate(self.max_residuals())

    def window(self, t_lo: float, t_hi: float) -> Array:
        """Indices of records with t in [t_lo, t_hi]."""
        ts = np.asarray(self.t)
        return np.nonzero((ts >= t_lo) & (ts <= t_hi))[0]

    def to_csv(self, path) -> None:
        """Write the trace with 17-significant-digit decimal formatting.

        That precision round-trips IEEE doubles exactly while keeping the file
        tool-friendly; cells never recorded stay empty.
        """
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return format(v, ".17g")
            return str(v)

        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for i in range(len(self.t)):
                row = (
                    self.t[i], self.rx[i], self.ry[i], self.ry_kind[i], self.rz[i],
                    self.f[i], self.psi[i], self.phi[i], self.wall_ns[i],
                )
                fh.write(",".join(fmt(v) for v in row) + "\n")


def check_gradients(problem: MinMaxProblem, x: Array, y: Array, h: float = 1e-6) -> float:
    """Max relative deviation between analytic gradients and central differences.

    Central differences of ``eval_f`` with step ``h`` are compared against
    ``grad_x`` / ``grad_y`` coordinate by coordinate; the deviation is
    normalized by max(1, |analytic|).  Raises :class:`OracleError` naming the
    coordinate when an oracle returns a non-finite value.
    """
    if not (1e-8 <= h <= 1e-3):
        raise DomainError("check_gradients: h must lie in [1e-8, 1e-3]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gx = np.asarray(problem.grad_x(x, y), dtype=float)
    gy = np.asarray(problem.grad_y(x, y), dtype=float)
    if not np.all(np.isfinite(gx)):
        bad = int(np.nonzero(~np.isfinite(gx))[0][0])
        raise OracleError(f"grad_x returned a non-finite value at x-coordinate {bad}")
    if not np.all(np.isfinite(gy)):
        bad = int(np.nonzero(~np.isfinite(gy))[0][0])
        raise OracleError(f"grad_y returned a non-finite value at y-coordinate {bad}")

    worst = 0.0
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        fp = float(problem.eval_f(x + e, y))
        fm = float(problem.eval_f(x - e, y))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise OracleError(f"eval_f returned a non-finite value near x-coordinate {j}")
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(fd - gx[j]) / max(1.0, abs(gx[j])))
    for j in range(y.size):
        e = np.zeros_like(y)
        e[j] = h
        fp = float(problem.eval_f(x, y + e))
        fm = float(problem.eval_f(x, y - e))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise OracleError(f"eval_f returned a non-finite value near y-coordinate {j}")
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(fd - gy[j]) / max(1.0, abs(gy[j])))
    return worst
