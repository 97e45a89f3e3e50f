"""State space, intensity measure and deterministic integration.

The intensity measure is always a density over a bounded box window, which
keeps its total mass finite and the induced Poisson configurations almost
surely finite.  Deterministic integrals against the intensity and its tensor
powers are computed by tensor-midpoint quadrature, with a quasi-random rule
as the high-dimension fallback.

Tensor products of a single-axis rule contain node tuples with coinciding
coordinates.  Tensor-power integrals here are integrals over the off-diagonal
part of the product space, so such tuples are nudged apart by a deterministic,
negligible offset; this keeps indicator-of-diagonal integrands at exactly
zero while perturbing continuous integrands far below quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

__all__ = [
    "Window",
    "IntensitySpec",
    "QuadratureSpec",
    "EvaluationCapExceeded",
    "DensityError",
    "sigma_mass",
    "sigma_rule",
    "sigma_product_nodes",
    "sample_sigma_point",
    "sample_sigma_points",
    "quadrature_integrate",
    "box_mass",
]

# Relative size of the off-diagonal nudge, in units of one quadrature cell.
_NUDGE_REL = 1e-12


class EvaluationCapExceeded(RuntimeError):
    """Raised when a tensor quadrature would exceed the evaluation cap.

    The caller should fall back to Monte Carlo for the offending integral.
    """


class DensityError(ValueError):
    """Raised on invalid density values (negative, non-finite, bound breach)."""


@dataclass(frozen=True)
class Window:
    """Bounded axis-aligned box in R^d."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or len(self.lower) < 1:
            raise ValueError("window bounds must be non-empty and of equal length")
        for lo, hi in zip(self.lower, self.upper):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid axis interval [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=np.float64)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=np.float64)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    @staticmethod
    def unit(dim: int = 1) -> "Window":
        return Window((0.0,) * dim, (1.0,) * dim)

    @staticmethod
    def interval(lo: float, hi: float) -> "Window":
        return Window((lo,), (hi,))


@dataclass(frozen=True)
class IntensitySpec:
    """Intensity measure as density x window.

    `density` maps an (m, d) array of points to an (m,) array of nonnegative
    values.  `density_bound` is an upper bound for rejection sampling; when
    omitted it is estimated from the default quadrature grid with a safety
    margin, and any proposal exceeding the bound raises rather than clipping.
    `sampler`, when provided (catalog densities with a known normalized law),
    replaces rejection sampling; it must draw i.i.d. points from
    density/mass using only the given generator.
    """

    window: Window
    density: Callable[[np.ndarray], np.ndarray]
    density_bound: float | None = None
    total_mass_hint: float | None = None
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None

    def density_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        vals = np.asarray(self.density(pts), dtype=np.float64).reshape(-1)
        if vals.shape[0] != pts.shape[0]:
            raise DensityError("density must return one value per point")
        return vals

    def _cache(self) -> dict:
        cache = getattr(self, "_cache_dict", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_cache_dict", cache)
        return cache


@dataclass(frozen=True)
class QuadratureSpec:
    """Deterministic integration rule selection.

    scheme None picks tensor-midpoint when k*d <= 4 and quasi-random above.
    `points_per_axis` applies to the tensor rule, `total_points` to the
    quasi-random rule; both have desk-scale defaults.
    """

    scheme: str | None = None  # "tensor-midpoint" | "quasi-random" | None
    points_per_axis: int | None = None
    total_points: int | None = None
    eval_cap: int = 2_000_000

    def __post_init__(self):
        if self.scheme not in (None, "tensor-midpoint", "quasi-random"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        for name in ("points_per_axis", "total_points"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")

    def resolved_scheme(self, k: int, dim: int) -> str:
        if self.scheme is not None:
            return self.scheme
        return "tensor-midpoint" if k * dim <= 4 else "quasi-random"

    def axis_nodes(self, dim: int) -> int:
        if self.points_per_axis is not None:
            return self.points_per_axis
        return {1: 64, 2: 32, 3: 16}.get(dim, 8)

    def qmc_points(self) -> int:
        return self.total_points if self.total_points is not None else 4096


def _check_finite_density(vals: np.ndarray, pts: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(vals) | (vals < 0.0))
    if bad.size:
        i = int(bad[0])
        raise DensityError(
            f"invalid density value {vals[i]!r} at node {pts[i].tolist()}"
        )


def _cached_rule(intensity: IntensitySpec, quad: QuadratureSpec):
    cache = intensity._cache()
    key = ("rule", quad.scheme, quad.points_per_axis, quad.total_points)
    hit = cache.get(key)
    if hit is not None:
        return hit
    rule = _build_rule(intensity, quad)
    cache[key] = rule
    return rule


def _build_rule(intensity: IntensitySpec, quad: QuadratureSpec):
    window = intensity.window
    d = window.dim
    scheme = quad.resolved_scheme(1, d)
    if scheme == "tensor-midpoint":
        m = quad.axis_nodes(d)
        axes = [
            window.lo[a] + (np.arange(m) + 0.5) * (window.widths[a] / m)
            for a in range(d)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.reshape(-1) for g in mesh], axis=1)
        cell_vol = window.volume / (m**d)
        base_w = np.full(pts.shape[0], cell_vol)
    else:
        n = quad.qmc_points()
        sampler = qmc.Halton(d=d, scramble=False)
        unit = sampler.random(n)
        pts = window.lo + unit * window.widths
        base_w = np.full(n, window.volume / n)
    dens = intensity.density_at(pts)
    _check_finite_density(dens, pts)
    w = base_w * dens
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def sigma_rule(intensity: IntensitySpec, quad: QuadratureSpec):
    """Nodes (m, d) and weights (m,) integrating against the intensity."""
    return _cached_rule(intensity, quad)


def sigma_mass(intensity: IntensitySpec, quad: QuadratureSpec) -> float:
    """Quadrature approximation of the window's total intensity mass."""
    cache = intensity._cache()
    key = ("mass", quad.scheme, quad.points_per_axis, quad.total_points)
    hit = cache.get(key)
    if hit is not None:
        return hit
    _, w = sigma_rule(intensity, quad)
    mass = math.fsum(w.tolist())
    if not (math.isfinite(mass) and mass >= 0.0):
        raise DensityError(f"total mass evaluated to {mass!r}")
    cache[key] = mass
    return mass


def _nudge_apart(tuples: np.ndarray, cell: np.ndarray, window: Window) -> np.ndarray:
    """Separate coinciding coordinates of node tuples, in place.

    tuples has shape (n, k, d).  For each tuple, a coordinate equal to an
    earlier coordinate is shifted by a per-duplicate multiple of a tiny step.
    The step is floored at a few ulps of the coordinate scale so the shifted
    floats are actually distinct.
    """
    n, k, _ = tuples.shape
    if k < 2:
        return tuples
    scale = np.maximum(np.abs(window.lo), np.abs(window.hi))
    step = np.maximum(cell * _NUDGE_REL, 8.0 * np.spacing(scale))
    original = tuples.copy()  # m-th duplicate of an original value moves m steps
    for j in range(1, k):
        dup_count = np.zeros(n, dtype=np.int64)
        for i in range(j):
            dup_count += np.all(original[:, j, :] == original[:, i, :], axis=1)
        hit = dup_count > 0
        if np.any(hit):
            tuples[hit, j, :] += dup_count[hit, None] * step[None, :]
    return tuples


def sigma_product_nodes(intensity: IntensitySpec, quad: QuadratureSpec, k: int):
    """Rule for the k-fold tensor power over off-diagonal tuples.

    Returns (tuples, weights) with tuples of shape (n, k, d).  For the tensor
    scheme, node tuples are the full k-fold product of the single-factor rule
    with coinciding coordinates nudged apart; weights are the products of the
    single-factor weights.  For quasi-random, points fill the k*d-dimensional
    product box directly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    window = intensity.window
    d = window.dim
    scheme = quad.resolved_scheme(k, d)
    if scheme == "tensor-midpoint":
        pts, w = sigma_rule(
            intensity,
            QuadratureSpec("tensor-midpoint", quad.axis_nodes(d), None, quad.eval_cap),
        )
        m = pts.shape[0]
        total = m**k
        if total > quad.eval_cap:
            raise EvaluationCapExceeded(
                f"tensor rule needs {total} evaluations (cap {quad.eval_cap}); "
                "reduce points_per_axis or use Monte Carlo"
            )
        idx = np.indices((m,) * k).reshape(k, total).T
        tuples = pts[idx]  # (total, k, d)
        weights = np.prod(w[idx], axis=1)
        cell = window.widths / quad.axis_nodes(d)
    else:
        n = quad.qmc_points()
        if n > quad.eval_cap:
            raise EvaluationCapExceeded(
                f"quasi-random rule needs {n} evaluations (cap {quad.eval_cap})"
            )
        sampler = qmc.Halton(d=k * d, scramble=False)
        unit = sampler.random(n)
        tuples = (window.lo[None, None, :] + unit.reshape(n, k, d) * window.widths[None, None, :])
        dens = np.ones(n)
        for j in range(k):
            dens *= intensity.density_at(tuples[:, j, :])
        weights = (window.volume**k / n) * dens
        cell = window.widths / max(2, round(n ** (1.0 / (k * d))))
    tuples = _nudge_apart(np.ascontiguousarray(tuples), cell, window)
    return tuples, weights


def quadrature_integrate(
    g,
    k: int,
    intensity: IntensitySpec,
    quad: QuadratureSpec,
    *,
    vectorized: bool = False,
) -> float:
    """Integrate g over the k-fold off-diagonal tensor power of the intensity.

    `g` receives a (k, d) point array per node (or the full (n, k, d) array
    when `vectorized`).  Deterministic for fixed inputs.
    """
    tuples, weights = sigma_product_nodes(intensity, quad, k)
    if vectorized:
        vals = np.asarray(g(tuples), dtype=np.float64).reshape(-1)
        if vals.shape[0] != tuples.shape[0]:
            raise ValueError("vectorized integrand returned wrong length")
    else:
        vals = np.fromiter(
            (float(g(tuples[i])) for i in range(tuples.shape[0])),
            dtype=np.float64,
            count=tuples.shape[0],
        )
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"non-finite integrand value at node {tuples[i].tolist()}"
        )
    return math.fsum((vals * weights).tolist())


def _density_bound(intensity: IntensitySpec, quad: QuadratureSpec) -> float:
    cache = intensity._cache()
    key = ("bound", quad.scheme, quad.points_per_axis, quad.total_points)
    hit = cache.get(key)
    if hit is not None:
        return hit
    if intensity.density_bound is not None:
        bound = float(intensity.density_bound)
    else:
        pts, _ = _cached_rule(intensity, quad)
        dens = intensity.density_at(pts)
        # Grid estimate; 1.5x margin, still validated on every accepted proposal.
        bound = 1.5 * float(dens.max()) if dens.size else 1.0
    cache[key] = bound
    return bound


def sample_sigma_points(
    intensity: IntensitySpec,
    n: int,
    rng: np.random.Generator,
    quad: QuadratureSpec = QuadratureSpec(),
) -> np.ndarray:
    """n i.i.d. points with law density/mass (direct sampler when the
    intensity carries one, rejection against the box otherwise)."""
    if intensity.sampler is not None:
        pts = np.asarray(intensity.sampler(rng, n), dtype=np.float64)
        if pts.shape != (n, intensity.window.dim):
            raise DensityError("direct sampler returned wrong shape")
        return pts
    window = intensity.window
    d = window.dim
    bound = _density_bound(intensity, quad)
    if bound <= 0.0:
        raise DensityError("density bound must be positive to sample")
    out = np.empty((n, d))
    filled = 0
    rounds = 0
    while filled < n:
        rounds += 1
        if rounds > 10_000:
            raise DensityError("rejection sampler failed to accept (mass ~ 0?)")
        m = max(16, 2 * (n - filled))
        props = window.lo + rng.random((m, d)) * window.widths
        dens = intensity.density_at(props)
        _check_finite_density(dens, props)
        over = np.flatnonzero(dens > bound * (1.0 + 1e-12))
        if over.size:
            i = int(over[0])
            raise DensityError(
                f"density {dens[i]!r} exceeds bound {bound!r} at proposal "
                f"{props[i].tolist()}"
            )
        accept = rng.random(m) * bound < dens
        take = props[accept][: n - filled]
        out[filled : filled + take.shape[0]] = take
        filled += take.shape[0]
    return out


def sample_sigma_point(
    intensity: IntensitySpec,
    rng: np.random.Generator,
    quad: QuadratureSpec = QuadratureSpec(),
) -> np.ndarray:
    """One point distributed as density/mass."""
    return sample_sigma_points(intensity, 1, rng, quad)[0]


def box_mass(
    intensity: IntensitySpec,
    lo,
    hi,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Intensity mass of an axis-aligned box, with exact cell clipping.

    Cells of the tensor rule are clipped to the box per axis and the density
    is evaluated at the clipped cell's center, so boxes that do not align
    with the grid carry no geometric error.
    """
    window = intensity.window
    d = window.dim
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (d,))
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (d,))
    m = quad.axis_nodes(d)
    axes_lo = [window.lo[a] + np.arange(m) * (window.widths[a] / m) for a in range(d)]
    axes_hi = [al + (window.widths[a] / m) for a, al in enumerate(axes_lo)]
    clip_lo = [np.maximum(axes_lo[a], lo[a]) for a in range(d)]
    clip_hi = [np.minimum(axes_hi[a], hi[a]) for a in range(d)]
    lengths = [np.maximum(0.0, clip_hi[a] - clip_lo[a]) for a in range(d)]
    centers = [0.5 * (clip_lo[a] + clip_hi[a]) for a in range(d)]
    mesh_c = np.meshgrid(*centers, indexing="ij")
    mesh_l = np.meshgrid(*lengths, indexing="ij")
    pts = np.stack([g.reshape(-1) for g in mesh_c], axis=1)
    vols = np.prod(np.stack([g.reshape(-1) for g in mesh_l], axis=1), axis=1)
    live = vols > 0.0
    if not np.any(live):
        return 0.0
    dens = intensity.density_at(pts[live])
    _check_finite_density(dens, pts[live])
    return math.fsum((dens * vols[live]).tolist())
