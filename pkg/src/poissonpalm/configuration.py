"""Finite point configurations and pathwise mixed multiple integrals.

A configuration doubles as a point set and an integer-valued measure.  The
mixed multiple integral iterates one coordinate at a time: a coordinate with
epsilon 1 sums over all atoms of the configuration (repetitions across
coordinates included, so diagonal terms contribute), and a coordinate with
epsilon 0 integrates against the intensity by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .space import (
    EvaluationCapExceeded,
    IntensitySpec,
    QuadratureSpec,
    sample_sigma_points,
    sigma_mass,
    sigma_rule,
)

__all__ = [
    "Configuration",
    "ProcessSpec",
    "as_epsilon",
    "sample_configuration",
    "point_integral",
    "mixed_multiple_integral",
]


def _canonical_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        pts = np.atleast_2d(pts)
    if pts.shape[0] > 1:
        order = np.lexsort(pts.T[::-1])  # lexicographic by axis 0, then 1, ...
        pts = pts[order]
    pts = np.ascontiguousarray(pts)
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True, eq=False)
class Configuration:
    """Finite set of distinct points, stored in lexicographic order."""

    points: np.ndarray  # (n, d), read-only

    @staticmethod
    def from_points(points, dim: int | None = None) -> "Configuration":
        arr = np.asarray(points, dtype=np.float64)
        if arr.size == 0:
            if dim is None:
                raise ValueError("dim required for an empty configuration")
            arr = arr.reshape(0, dim)
        pts = _canonical_points(arr)
        if pts.shape[0] > 1 and np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValueError("configuration points must be distinct")
        return Configuration(pts)

    @staticmethod
    def empty(dim: int) -> "Configuration":
        return Configuration.from_points(np.empty((0, dim)), dim=dim)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.size

    def union(self, extra) -> "Configuration":
        """Set union with extra points (exact-duplicate collapse)."""
        extra = np.atleast_2d(np.asarray(extra, dtype=np.float64))
        if extra.size == 0:
            return self
        merged = np.concatenate([self.points, extra], axis=0)
        pts = _canonical_points(merged)
        if pts.shape[0] > 1:
            keep = np.concatenate(
                [[True], np.any(pts[1:] != pts[:-1], axis=1)]
            )
            pts = _canonical_points(pts[keep])
        return Configuration(pts)

    def count_in(self, lo, hi) -> int:
        """Number of atoms in the closed box [lo, hi]."""
        if self.size == 0:
            return 0
        lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (self.dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (self.dim,))
        inside = np.all((self.points >= lo) & (self.points <= hi), axis=1)
        return int(np.count_nonzero(inside))


@dataclass(frozen=True)
class ProcessSpec:
    """A k-process: evaluator of k space points and the configuration.

    The evaluator receives a (k, d) array of points and a Configuration and
    returns a float.  `vanishes_on_diagonals` declares that the value is zero
    whenever two point arguments coincide (spot-tested, not enforced).
    """

    arity: int
    evaluator: Callable[[np.ndarray, Configuration], float]
    vanishes_on_diagonals: bool = False
    catalog_id: str | None = None

    def __post_init__(self):
        if self.arity < 0:
            raise ValueError("arity must be >= 0")

    def __call__(self, points: np.ndarray, omega: Configuration) -> float:
        return float(self.evaluator(points, omega))


def as_epsilon(eps) -> tuple[int, ...]:
    """Normalize an epsilon vector ('101', [1,0,1], ...) to a tuple of 0/1."""
    if isinstance(eps, str):
        entries = tuple(int(c) for c in eps)
    else:
        entries = tuple(int(e) for e in eps)
    if len(entries) < 1:
        raise ValueError("epsilon vector must have length >= 1")
    if any(e not in (0, 1) for e in entries):
        raise ValueError(f"epsilon entries must be 0 or 1, got {entries}")
    return entries


def sample_configuration(
    intensity: IntensitySpec,
    rng: np.random.Generator,
    quad: QuadratureSpec = QuadratureSpec(),
) -> Configuration:
    """Poisson configuration: count ~ Poisson(mass), points i.i.d. ~ density/mass."""
    mass = sigma_mass(intensity, quad)
    if mass <= 0.0:
        raise ValueError("total intensity mass must be positive")
    n = int(rng.poisson(mass))
    if n == 0:
        return Configuration.empty(intensity.window.dim)
    while True:
        pts = sample_sigma_points(intensity, n, rng, quad)
        try:
            return Configuration.from_points(pts)
        except ValueError:
            continue  # float collision: resample


def point_integral(f: ProcessSpec, omega: Configuration) -> float:
    """Pathwise single integral: sum of f over the atoms."""
    if f.arity != 1:
        raise ValueError(f"point_integral needs a 1-process, got arity {f.arity}")
    return math.fsum(
        f(omega.points[i : i + 1], omega) for i in range(omega.size)
    )


def mixed_multiple_integral(
    f: ProcessSpec,
    omega: Configuration,
    eps,
    intensity: IntensitySpec,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Iterated integral with per-coordinate choice of atom sum vs quadrature.

    Coordinate i integrates against the configuration when eps[i] == 1 (full
    sum over atoms, diagonal repetitions included) and against the intensity
    when eps[i] == 0.  The nesting is coordinate-by-coordinate with the last
    coordinate outermost; the actual summation is exact (fsum), so evaluation
    order cannot change the result.
    """
    eps = as_epsilon(eps)
    n = len(eps)
    if f.arity != n:
        raise ValueError(f"arity {f.arity} does not match epsilon length {n}")
    d = omega.dim

    atom_pts = omega.points
    node_pts, node_w = (None, None)
    if any(e == 0 for e in eps):
        node_pts, node_w = sigma_rule(intensity, quad)

    sizes = []
    for e in eps:
        if e == 1:
            if omega.size == 0:
                return 0.0
            sizes.append(omega.size)
        else:
            sizes.append(node_pts.shape[0])
    total = int(np.prod(sizes, dtype=np.int64))
    cap = quad.eval_cap
    if total > cap:
        raise EvaluationCapExceeded(
            f"mixed integral needs {total} evaluations (cap {cap})"
        )

    x = np.empty((n, d))
    terms = []

    def recurse(coord: int, weight: float) -> None:
        # coord counts down: the last coordinate is the outermost loop.
        if coord < 0:
            terms.append(weight * f(x, omega))
            return
        if eps[coord] == 1:
            for i in range(omega.size):
                x[coord] = atom_pts[i]
                recurse(coord - 1, weight)
        else:
            for i in range(node_pts.shape[0]):
                x[coord] = node_pts[i]
                recurse(coord - 1, weight * node_w[i])

    recurse(n - 1, 1.0)
    value = math.fsum(terms)
    if not math.isfinite(value):
        raise ValueError("mixed integral evaluated to a non-finite value")
    return value
