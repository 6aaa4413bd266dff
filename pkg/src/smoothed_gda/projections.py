"""Exact Euclidean projections onto the feasible sets used by the solvers.

Supported sets: the whole space, axis-aligned boxes, L2 balls, and the
probability simplex.  All projections are pure functions of their inputs and
safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "project_simplex",
    "project_box",
    "project_l2_ball",
    "FeasibleSet",
]

# Above this dimension the sort-threshold cumsum is refined with an exact
# compensated sum over the support to bound accumulation drift.
_COMPENSATED_DIM = 10_000


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Project ``v`` onto the probability simplex {w : w >= 0, sum w = 1}.

    Sort-and-threshold method: sort coordinates in descending order, locate
    the threshold tau with sum(max(v_i - tau, 0)) = 1, and clip.  Runs in
    O(d log d).  The threshold is unique, so ties in the (stable) sort cannot
    change the output.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise DomainError("project_simplex expects a 1-d vector with d >= 1")
    if not np.all(np.isfinite(v)):
        raise DomainError("project_simplex: input has non-finite entries")
    d = v.size
    u = np.flip(np.sort(v, kind="stable"))
    css = np.cumsum(u)
    j = np.arange(1, d + 1)
    support = u * j > (css - 1.0)
    rho = int(np.nonzero(support)[0][-1])
    tau = (css[rho] - 1.0) / (rho + 1.0)
    if d > _COMPENSATED_DIM:
        # One exact refinement of the threshold over the detected support.
        tau = (math.fsum(u[: rho + 1]) - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def project_box(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Coordinatewise clamp of ``v`` to the box [lo, hi]."""
    v = np.asarray(v, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), v.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), v.shape)
    if np.any(lo > hi):
        raise DomainError("project_box: lo > hi in some coordinate")
    if not np.all(np.isfinite(v)):
        raise DomainError("project_box: input has non-finite entries")
    return np.minimum(np.maximum(v, lo), hi)


def project_l2_ball(v: np.ndarray, center: np.ndarray, r: float) -> np.ndarray:
    """Project ``v`` onto the closed L2 ball of radius ``r`` about ``center``."""
    if r <= 0:
        raise DomainError("project_l2_ball: radius must be positive")
    v = np.asarray(v, dtype=float)
    center = np.broadcast_to(np.asarray(center, dtype=float), v.shape)
    if not np.all(np.isfinite(v)):
        raise DomainError("project_l2_ball: input has non-finite entries")
    diff = v - center
    dist = float(np.linalg.norm(diff))
    if dist <= r:
        return v.copy()
    return center + (r / dist) * diff


@dataclass(frozen=True)
class FeasibleSet:
    """Tagged description of a closed convex feasible set with an exact projector.

    Variants: ``whole-space``, ``box`` (lo/hi per coordinate), ``l2-ball``
    (center, radius), ``simplex`` (probability simplex of the given dimension).
    """

    kind: str
    dim: int
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    @staticmethod
    def whole_space(dim: int) -> "FeasibleSet":
        return FeasibleSet("whole-space", dim)

    @staticmethod
    def box(lo, hi) -> "FeasibleSet":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise DomainError("box: lo and hi must have the same shape")
        if np.any(lo > hi):
            raise DomainError("box: lo > hi in some coordinate")
        return FeasibleSet("box", lo.size, lo=lo, hi=hi)

    @staticmethod
    def l2_ball(center, radius: float) -> "FeasibleSet":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise DomainError("l2_ball: radius must be positive")
        return FeasibleSet("l2-ball", center.size, center=center, radius=float(radius))

    @staticmethod
    def simplex(dim: int) -> "FeasibleSet":
        if dim < 1:
            raise DomainError("simplex: dimension must be >= 1")
        return FeasibleSet("simplex", dim)

    def project(self, v: np.ndarray) -> np.ndarray:
        if self.kind == "whole-space":
            v = np.asarray(v, dtype=float)
            if not np.all(np.isfinite(v)):
                raise DomainError("project: input has non-finite entries")
            return v.copy()
        if self.kind == "box":
            return project_box(v, self.lo, self.hi)
        if self.kind == "l2-ball":
            return project_l2_ball(v, self.center, self.radius)
        if self.kind == "simplex":
            return project_simplex(v)
        raise DomainError(f"unknown feasible-set kind {self.kind!r}")

    def contains(self, v: np.ndarray, tol: float = 1e-12) -> bool:
        """Membership predicate, independent of the projector."""
        v = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(v)):
            return False
        if self.kind == "whole-space":
            return True
        if self.kind == "box":
            return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))
        if self.kind == "l2-ball":
            return float(np.linalg.norm(v - self.center)) <= self.radius + tol
        if self.kind == "simplex":
            return bool(np.all(v >= -tol) and abs(float(np.sum(v)) - 1.0) <= tol)
        raise DomainError(f"unknown feasible-set kind {self.kind!r}")

    def diameter(self) -> float:
        """Euclidean diameter; inf for unbounded sets."""
        if self.kind == "whole-space":
            return math.inf
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        if self.kind == "l2-ball":
            return 2.0 * self.radius
        if self.kind == "simplex":
            return math.sqrt(2.0) if self.dim > 1 else 0.0
        raise DomainError(f"unknown feasible-set kind {self.kind!r}")

    def is_product_over(self, blocks) -> bool:
        """Whether the set factors as a product across the given index blocks.

        Boxes and the whole space factor over any partition; balls and the
        simplex only when a single block covers everything.
        """
        if self.kind in ("whole-space", "box"):
            return True
        return len(blocks) == 1

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw a feasible point (used by randomized checks)."""
        if self.kind == "whole-space":
            return rng.standard_normal(self.dim)
        if self.kind == "box":
            lo = np.where(np.isfinite(self.lo), self.lo, -1e3)
            hi = np.where(np.isfinite(self.hi), self.hi, 1e3)
            return lo + rng.random(self.dim) * (hi - lo)
        if self.kind == "l2-ball":
            u = rng.standard_normal(self.dim)
            u /= max(np.linalg.norm(u), 1e-300)
            return self.center + self.radius * u * rng.random() ** (1.0 / self.dim)
        if self.kind == "simplex":
            return rng.dirichlet(np.ones(self.dim))
        raise DomainError(f"unknown feasible-set kind {self.kind!r}")

    def spec(self) -> dict:
        """JSON-serializable description."""
        doc = {"kind": self.kind, "dim": self.dim}
        if self.kind == "box":
            doc["lo"] = self.lo.tolist()
            doc["hi"] = self.hi.tolist()
        elif self.kind == "l2-ball":
            doc["center"] = self.center.tolist()
            doc["radius"] = self.radius
        return doc

    @staticmethod
    def from_spec(doc: dict) -> "FeasibleSet":
        kind = doc.get("kind")
        if kind == "whole-space":
            return FeasibleSet.whole_space(int(doc["dim"]))
        if kind == "box":
            return FeasibleSet.box(doc["lo"], doc["hi"])
        if kind == "l2-ball":
            return FeasibleSet.l2_ball(doc["center"], doc["radius"])
        if kind == "simplex":
            return FeasibleSet.simplex(int(doc["dim"]))
        raise DomainError(f"unknown feasible-set kind {kind!r}")
