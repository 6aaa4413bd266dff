"""Curated and randomly generated min-max instances, plus KKT and assumption checkers.

The central class is :class:`FiniteMaxProblem`: minimize over x the largest of
m smooth components f_i(x), phrased as a min-max problem against the
probability simplex via f(x, y) = F(x)^T y with F = (f_1, ..., f_m).  For
quadratic components the Lipschitz constant is certified exactly over the
declared operating box and instances serialize to JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Array, Box, MinMaxProblem
from .errors import (
    ConfigurationError,
    GenerationError,
    PreconditionError,
)
from .projections import FeasibleSet

__all__ = [
    "FiniteMaxProblem",
    "KKTReport",
    "make_bilinear",
    "make_finite_max_quadratic",
    "make_finite_max_from_quadratics",
    "make_robust_regression",
    "hand_two_component",
    "hand_three_component",
    "make_zero",
    "kkt_residual",
    "check_strict_complementarity",
    "check_regularity",
    "solve_kkt",
    "problem_to_json",
    "problem_from_json",
    "save_problem",
    "load_problem",
]


@dataclass(frozen=True, eq=False)
class FiniteMaxProblem(MinMaxProblem):
    """Pointwise-maximum problem min_x max_i f_i(x) over the probability simplex.

    ``component_values`` returns F(x) (shape m) and ``component_jacobian``
    its Jacobian with rows grad f_i(x)^T (shape m x n).  ``quad`` holds the
    (A, b, c) arrays when the components are quadratic.
    """

    component_values: Callable[[Array], Array] | None = None
    component_jacobian: Callable[[Array], Array] | None = None
    quad: tuple | None = None
    gen_seed: int | None = None

    def psi(self, x: Array) -> float:
        """Exact pointwise maximum max_i f_i(x)."""
        return float(np.max(self.component_values(x)))


def _quadratic_component_oracles(A: Array, b: Array, cvec: Array):
    def values(x):
        Ax = A @ x  # (m, n)
        return 0.5 * Ax @ x + b @ x + cvec

    def jacobian(x):
        return A @ x + b

    return values, jacobian


def _certify_quadratic_L(A: Array, b: Array, region: Box) -> tuple[float, float]:
    """Certified joint-gradient Lipschitz constant and convexity deficit over a box.

    The x-x block of the Hessian is sum_i y_i A_i, bounded by max_i ||A_i||;
    the mixed block is the component Jacobian, whose spectral norm over the
    box is bounded through per-component gradient sups.  Their sum bounds the
    full Hessian norm, hence both partial gradients' joint Lipschitz constant.
    """
    if not region.is_bounded:
        raise ConfigurationError(
            "quadratic finite-max problems need a bounded operating region to certify L"
        )
    eigs = np.linalg.eigvalsh(A)  # (m, n), ascending per component
    opnorms = np.max(np.abs(eigs), axis=1)
    center = 0.5 * (region.lo + region.hi)
    radius = float(np.linalg.norm(0.5 * (region.hi - region.lo)))
    grad_center = A @ center + b  # (m, n)
    sup_grad = np.linalg.norm(grad_center, axis=1) + opnorms * radius
    cross = float(np.sqrt(np.sum(sup_grad**2)))
    L = float(np.max(opnorms) + cross) if A.size else 0.0
    rho = float(max(0.0, -np.min(eigs)))
    return L, rho


def make_finite_max_from_quadratics(
    A,
    b,
    cvec,
    x_set: FeasibleSet | None = None,
    region: Box | None = None,
    blocks=None,
    lower_bound: float | None = None,
    problem_id: str = "finite-max-quadratic",
    gen_seed: int | None = None,
) -> FiniteMaxProblem:
    """Build a finite-max problem from stacked quadratic data.

    ``A`` has shape (m, n, n) with symmetric slices, ``b`` shape (m, n),
    ``cvec`` shape (m,).  The dual set is the probability simplex; ``region``
    defaults to the centered box of halfwidth 4.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    cvec = np.asarray(cvec, dtype=float)
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise ConfigurationError("A must have shape (m, n, n)")
    m, n = A.shape[0], A.shape[1]
    if b.shape != (m, n) or cvec.shape != (m,):
        raise ConfigurationError("b must have shape (m, n) and c shape (m,)")
    if not np.allclose(A, np.swapaxes(A, 1, 2), atol=1e-12):
        raise ConfigurationError("each A_i must be symmetric")
    if region is None:
        region = Box.centered(n, 4.0)
    if x_set is None:
        x_set = FeasibleSet.whole_space(n)
    L, rho = _certify_quadratic_L(A, b, region)

    values, jacobian = _quadratic_component_oracles(A, b, cvec)

    def eval_f(x, y):
        return float(values(x) @ y)

    def grad_x(x, y):
        return jacobian(x).T @ y

    def grad_y(x, y):
        return values(x)

    return FiniteMaxProblem(
        n=n,
        m=m,
        eval_f=eval_f,
        grad_x=grad_x,
        grad_y=grad_y,
        x_set=x_set,
        y_set=FeasibleSet.simplex(m),
        lipschitz_L=L,
        operating_region=region,
        convexity_deficit=rho,
        blocks=blocks,
        lower_bound=lower_bound,
        problem_id=problem_id,
        component_values=values,
        component_jacobian=jacobian,
        quad=(A, b, cvec),
        gen_seed=gen_seed,
    )


def make_bilinear(
    n: int,
    m: int,
    A,
    b=None,
    d=None,
    x_set: FeasibleSet | None = None,
    y_set: FeasibleSet | None = None,
    region: Box | None = None,
    problem_id: str = "bilinear",
) -> MinMaxProblem:
    """Coupled bilinear objective f(x, y) = x^T A y + b^T x + d^T y.

    The gradients are globally Lipschitz with constant ||A||_2 (exact, via
    SVD), so the operating region defaults to the whole space; the objective
    is linear in x, so the convexity deficit is zero.
    """
    A = np.asarray(A, dtype=float).reshape(n, m)
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    d = np.zeros(m) if d is None else np.asarray(d, dtype=float)
    if b.shape != (n,) or d.shape != (m,):
        raise ConfigurationError("b must have shape (n,) and d shape (m,)")
    if x_set is None:
        x_set = FeasibleSet.whole_space(n)
    if y_set is None:
        y_set = FeasibleSet.whole_space(m)
    L = float(np.linalg.svd(A, compute_uv=False)[0]) if A.size else 0.0

    def eval_f(x, y):
        return float(x @ A @ y + b @ x + d @ y)

    def grad_x(x, y):
        return A @ y + b

    def grad_y(x, y):
        return A.T @ x + d

    return MinMaxProblem(
        n=n,
        m=m,
        eval_f=eval_f,
        grad_x=grad_x,
        grad_y=grad_y,
        x_set=x_set,
        y_set=y_set,
        lipschitz_L=L,
        operating_region=region,
        convexity_deficit=0.0,
        problem_id=problem_id,
    )


def make_zero(n: int = 1, m: int = 1) -> MinMaxProblem:
    """The identically-zero objective; every feasible pair is stationary."""
    return make_bilinear(n, m, np.zeros((n, m)), problem_id="zero")


def hand_two_component(region_halfwidth: float = 1.5) -> FiniteMaxProblem:
    """min_x max{(x-1)^2, (x+1)^2}: solution x*=0, y*=(1/2, 1/2), value 1."""
    A = np.array([[[2.0]], [[2.0]]])
    b = np.array([[-2.0], [2.0]])
    cvec = np.array([1.0, 1.0])
    return make_finite_max_from_quadratics(
        A, b, cvec,
        region=Box.centered(1, region_halfwidth),
        lower_bound=1.0,
        problem_id="hand-two-component",
    )


def hand_three_component(region_halfwidth: float = 1.5) -> FiniteMaxProblem:
    """Adds f_3 = x^2 + 10, which dominates near 0: x*=0, y*=e_3, value 10, gap 9."""
    A = np.array([[[2.0]], [[2.0]], [[2.0]]])
    b = np.array([[-2.0], [2.0], [0.0]])
    cvec = np.array([1.0, 1.0, 10.0])
    return make_finite_max_from_quadratics(
        A, b, cvec,
        region=Box.centered(1, region_halfwidth),
        lower_bound=10.0,
        problem_id="hand-three-component",
    )


@dataclass(frozen=True)
class KKTReport:
    """First-order optimality residuals of a pair (x, y) for a finite-max problem.

    ``mu`` is the recovered equality multiplier max_i f_i(x); ``nu`` the
    inequality multipliers mu - f_i(x), nonnegative by construction;
    ``active_set`` collects the top-value components within the tie
    tolerance and ``support`` the dual coordinates above the support
    tolerance.
    """

    grad_residual: float
    feasibility: float
    mu: float
    nu: Array
    complementarity: float
    active_set: tuple
    support: tuple

    @property
    def level(self) -> float:
        return max(self.grad_residual, self.feasibility, self.complementarity)


def kkt_residual(
    problem: FiniteMaxProblem,
    x: Array,
    y: Array,
    tie_tol: float = 1e-6,
    support_tol: float = 1e-8,
) -> KKTReport:
    """Evaluate the KKT residuals of (x, y); see :class:`KKTReport`.

    The active set uses ``tie_tol`` relative to the component-value spread
    (exact ties are not representable in floating point); the support uses
    the absolute ``support_tol``.
    """
    if not (0 < tie_tol < 1 and 0 < support_tol < 1):
        raise ConfigurationError("tolerances must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    F = np.asarray(problem.component_values(x), dtype=float)
    J = np.asarray(problem.component_jacobian(x), dtype=float)
    grad_residual = float(np.linalg.norm(J.T @ y))
    feasibility = float(max(abs(np.sum(y) - 1.0), np.max(np.maximum(-y, 0.0))))
    mu = float(np.max(F))
    nu = mu - F
    complementarity = float(np.dot(np.maximum(y, 0.0), nu))
    spread = mu - float(np.min(F))
    thr = tie_tol * max(spread, 1.0)
    active = tuple(int(i) for i in np.nonzero(F >= mu - thr)[0])
    support = tuple(int(i) for i in np.nonzero(y > support_tol)[0])
    return KKTReport(grad_residual, feasibility, mu, nu, complementarity, active, support)


def check_strict_complementarity(
    problem: FiniteMaxProblem,
    x: Array,
    y: Array,
    tol: float = 1e-6,
    tie_tol: float = 1e-6,
    support_tol: float = 1e-8,
) -> float:
    """Smallest inequality multiplier over components outside the dual support.

    Returns +inf when the support covers every component.  Requires (x, y) to
    be an approximate KKT pair at level ``tol``; otherwise raises
    :class:`PreconditionError` carrying the offending report.
    """
    report = kkt_residual(problem, x, y, tie_tol, support_tol)
    if report.level > tol:
        raise PreconditionError(
            f"(x, y) is not an approximate KKT pair: level {report.level:g} > {tol:g}",
            report=report,
        )
    inactive = [i for i in range(problem.m) if i not in report.support]
    if not inactive:
        return math.inf
    return float(np.min(report.nu[inactive]))


def check_regularity(problem: FiniteMaxProblem, x: Array, tie_tol: float = 1e-6) -> float:
    """Smallest singular value of the bordered active Jacobian [rows [grad f_i, 1]].

    Zero signals rank deficiency of the regularity matrix over the top-value
    component set.
    """
    x = np.asarray(x, dtype=float)
    F = np.asarray(problem.component_values(x), dtype=float)
    J = np.asarray(problem.component_jacobian(x), dtype=float)
    mu = float(np.max(F))
    spread = mu - float(np.min(F))
    thr = tie_tol * max(spread, 1.0)
    rows = np.nonzero(F >= mu - thr)[0]
    M = np.hstack([J[rows], np.ones((rows.size, 1))])
    return float(np.min(np.linalg.svd(M, compute_uv=False)))


def make_robust_regression(
    xi,
    ell,
    psi: Callable[[Array, Array], float] | None = None,
    psi_grad: Callable[[Array, Array], Array] | None = None,
    lipschitz_L: float | None = None,
    region: Box | None = None,
    x_set: FeasibleSet | None = None,
    problem_id: str = "robust-regression",
) -> FiniteMaxProblem:
    """Worst-case regression: components f_i(x) = (1/2)(ell_i - Psi(x, xi_i))^2.

    With the default linear model Psi(x, xi) = xi^T x the components are
    quadratic and everything is certified automatically.  A user-supplied
    smooth model must come with its gradient (validated by finite
    differences) and a certified Lipschitz constant over the region.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    ell = np.asarray(ell, dtype=float)
    m, n = xi.shape
    if ell.shape != (m,):
        raise ConfigurationError("ell must have one label per data row")

    if psi is None:
        A = np.einsum("ij,ik->ijk", xi, xi)
        b = -ell[:, None] * xi
        cvec = 0.5 * ell**2
        return make_finite_max_from_quadratics(
            A, b, cvec, x_set=x_set, region=region, problem_id=problem_id
        )

    if psi_grad is None or lipschitz_L is None or region is None:
        raise ConfigurationError(
            "a supplied model needs psi_grad, lipschitz_L, and a bounded region"
        )

    def values(x):
        return np.array([0.5 * (ell[i] - psi(x, xi[i])) ** 2 for i in range(m)])

    def jacobian(x):
        return np.stack([-(ell[i] - psi(x, xi[i])) * np.asarray(psi_grad(x, xi[i]))
                         for i in range(m)])

    def eval_f(x, y):
        return float(values(x) @ y)

    def grad_x(x, y):
        return jacobian(x).T @ y

    def grad_y(x, y):
        return values(x)

    problem = FiniteMaxProblem(
        n=n,
        m=m,
        eval_f=eval_f,
        grad_x=grad_x,
        grad_y=grad_y,
        x_set=x_set or FeasibleSet.whole_space(n),
        y_set=FeasibleSet.simplex(m),
        lipschitz_L=float(lipschitz_L),
        operating_region=region,
        problem_id=problem_id,
        component_values=values,
        component_jacobian=jacobian,
    )
    from .core import check_gradients

    rng = np.random.default_rng(0)
    for _ in range(5):
        x = region.sample(rng)
        y = problem.proj_y(rng.random(m))
        err = check_gradients(problem, x, y, 1e-5)
        if err > 1e-6:
            raise ConfigurationError(
                f"supplied model gradient fails the finite-difference check (error {err:.2e})"
            )
    return problem


# ---------------------------------------------------------------------------
# Seeded random generation with strict-complementarity targeting
# ---------------------------------------------------------------------------


def _random_quadratics(n, m, rng, eig_range, b_scale, c_scale, value_scale):
    A = np.empty((m, n, n))
    for i in range(m):
        G = rng.standard_normal((n, n))
        Q, _ = np.linalg.qr(G)
        eigs = rng.uniform(eig_range[0], eig_range[1], size=n)
        A[i] = (Q * eigs) @ Q.T
        A[i] = 0.5 * (A[i] + A[i].T)
    b = b_scale * rng.standard_normal((m, n))
    cvec = c_scale * rng.standard_normal(m)
    return value_scale * A, value_scale * b, value_scale * cvec


def solve_kkt(problem: FiniteMaxProblem, x0: Array, max_adjust: int = 60, newton_iters: int = 80):
    """Polish a rough primal point to a machine-precision KKT pair.

    Active-set Newton on the square system {sum_i y_i grad f_i(x) = 0,
    sum y = 1, f_i(x) = mu on the working set}; components whose multiplier
    goes negative leave the set, components overtaking mu join it.  Returns
    (x, y, report) or None when the iteration fails to settle.
    """
    x = np.asarray(x0, dtype=float).copy()
    F = problem.component_values(x)
    mu = float(np.max(F))
    spread = max(mu - float(np.min(F)), 1.0)
    work = set(np.nonzero(F >= mu - 1e-4 * spread)[0].tolist())
    A_all = problem.quad[0] if problem.quad is not None else None

    for _ in range(max_adjust):
        T = sorted(work)
        k = len(T)
        y_T = np.full(k, 1.0 / k)
        mu = float(problem.component_values(x)[T].mean())
        ok = True
        for _ in range(newton_iters):
            F = problem.component_values(x)
            J = problem.component_jacobian(x)
            res = np.concatenate([
                J[T].T @ y_T,
                [np.sum(y_T) - 1.0],
                F[T] - mu,
            ])
            if np.linalg.norm(res) <= 1e-13 * max(1.0, abs(mu)):
                break
            if A_all is not None:
                H = np.tensordot(y_T, A_all[T], axes=(0, 0))
            else:
                H = np.zeros((problem.n, problem.n))
            n = problem.n
            KKT = np.zeros((n + 1 + k, n + 1 + k))
            KKT[:n, :n] = H
            KKT[:n, n + 1:] = J[T].T
            KKT[n, n + 1:] = 1.0
            KKT[n + 1:, :n] = J[T]
            KKT[n + 1:, n] = -1.0
            try:
                delta = np.linalg.solve(KKT, -res)
            except np.linalg.LinAlgError:
                delta, *_ = np.linalg.lstsq(KKT, -res, rcond=None)
            if not np.all(np.isfinite(delta)):
                ok = False
                break
            x = x + delta[:n]
            mu = mu + delta[n]
            y_T = y_T + delta[n + 1:]
        if not ok:
            return None
        F = problem.component_values(x)
        mu = float(F[T].mean())
        # Working-set updates: drop negative multipliers first, then admit
        # components that exceed the current max value.
        if np.min(y_T) < -1e-10:
            work.discard(T[int(np.argmin(y_T))])
            if not work:
                return None
            continue
        outside = [i for i in range(problem.m) if i not in work]
        if outside and np.max(F[outside] - mu) > 1e-10 * max(1.0, abs(mu)):
            work.add(int(outside[int(np.argmax(F[outside]))]))
            continue
        y = np.zeros(problem.m)
        y[T] = np.maximum(y_T, 0.0)
        y = y / np.sum(y)
        report = kkt_residual(problem, x, y)
        if report.level <= 1e-8 * max(1.0, abs(mu)):
            return x, y, report
        return None
    return None


def make_finite_max_quadratic(
    n: int,
    m: int,
    seed: int,
    eig_range: tuple[float, float] = (-1.0, 2.0),
    b_scale: float = 0.3,
    c_scale: float = 0.3,
    value_scale: float = 1.0,
    region_halfwidth: float = 4.0,
    target_strict_complementarity: bool = False,
    gap_min: float = 0.1,
    max_attempts: int = 100,
    blocks=None,
    problem_id: str | None = None,
) -> FiniteMaxProblem:
    """Seeded random finite-max quadratic instance.

    Each A_i is an orthogonal conjugation of a sampled diagonal spectrum with
    eigenvalues drawn uniformly from ``eig_range`` (indefinite allowed), so
    ||A_i||_2 is exactly the largest sampled magnitude.  With
    ``target_strict_complementarity`` the instance is accepted only if a
    high-accuracy solve lands on a KKT pair whose strict-complementarity gap
    is at least ``gap_min``; rejected draws regenerate with an incremented
    sub-seed, up to ``max_attempts`` before :class:`GenerationError`.
    """
    pid = problem_id or f"fmq-n{n}-m{m}-seed{seed}"
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        A, b, cvec = _random_quadratics(n, m, rng, eig_range, b_scale, c_scale, value_scale)
        problem = make_finite_max_from_quadratics(
            A, b, cvec,
            region=Box.centered(n, region_halfwidth),
            blocks=blocks,
            problem_id=pid,
            gen_seed=seed,
        )
        if not target_strict_complementarity:
            return problem
        pair = _locate_solution(problem)
        if pair is None:
            continue
        x_star, y_star = pair
        if not problem.operating_region.contains(x_star, slack=-0.5):
            # Solution too close to the certification boundary.
            continue
        try:
            gap = check_strict_complementarity(problem, x_star, y_star, tol=1e-6)
        except PreconditionError:
            continue
        if gap >= gap_min:
            return problem
    raise GenerationError(
        f"no strict-complementarity instance with gap >= {gap_min} in {max_attempts} attempts"
    )


def _locate_solution(problem: FiniteMaxProblem):
    """Rough smoothed-GDA run followed by an active-set Newton polish."""
    from .solvers import RecordOptions, StopRule, run, derive_params

    params = derive_params(problem.lipschitz_L, 1, 0.99)
    # Generation-time rough solve: a larger averaging weight is fine here
    # because the result is verified a posteriori by the KKT checker.
    fast = type(params)(p=params.p, c=params.c, alpha=params.alpha,
                        beta=min(40.0 * params.beta, 1.0 / 40.0), N=1)
    trace, final = run(
        problem, "smoothed-gda", fast,
        StopRule(max_iter=20000, tol=1e-9),
        RecordOptions(stride=5000),
        x0=np.zeros(problem.n),
        y0=np.full(problem.m, 1.0 / problem.m),
    )
    if trace.metadata["stop_reason"] in ("diverged", "region-violation"):
        return None
    polished = solve_kkt(problem, final.z)
    if polished is None:
        return None
    x, y, _ = polished
    return x, y


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def problem_to_json(problem: MinMaxProblem) -> dict:
    """JSON document for a reproducible instance (matrices row-major)."""
    region = problem.operating_region
    doc = {
        "n": problem.n,
        "m": problem.m,
        "L": problem.lipschitz_L,
        "rho": problem.rho,
        "region": {"lo": region.lo.tolist(), "hi": region.hi.tolist()},
        "x_set": problem.x_set.spec(),
        "y_set": problem.y_set.spec(),
        "blocks": list(problem.blocks) if problem.blocks else None,
        "lower_bound": problem.lower_bound,
        "problem_id": problem.problem_id,
    }
    if isinstance(problem, FiniteMaxProblem) and problem.quad is not None:
        A, b, cvec = problem.quad
        doc["kind"] = "finite-max-quadratic"
        doc["A"] = A.tolist()
        doc["b"] = b.tolist()
        doc["c"] = cvec.tolist()
        doc["gen_seed"] = problem.gen_seed
        return doc
    raise ConfigurationError(
        "only quadratic finite-max instances serialize; oracle-backed problems do not"
    )


def problem_from_json(doc: dict) -> FiniteMaxProblem:
    if doc.get("kind") != "finite-max-quadratic":
        raise ConfigurationError(f"unsupported serialized problem kind {doc.get('kind')!r}")
    region = Box(np.asarray(doc["region"]["lo"]), np.asarray(doc["region"]["hi"]))
    blocks = doc.get("blocks")
    problem = make_finite_max_from_quadratics(
        np.asarray(doc["A"]),
        np.asarray(doc["b"]),
        np.asarray(doc["c"]),
        x_set=FeasibleSet.from_spec(doc["x_set"]),
        region=region,
        blocks=[tuple(b) for b in blocks] if blocks else None,
        lower_bound=doc.get("lower_bound"),
        problem_id=doc.get("problem_id", "finite-max-quadratic"),
        gen_seed=doc.get("gen_seed"),
    )
    return problem


def save_problem(problem: MinMaxProblem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_json(problem), fh, indent=1)
        fh.write("\n")


def load_problem(path) -> FiniteMaxProblem:
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_json(json.load(fh))
