"""Named intensity densities, processes and jump functionals.

Everything the command line can reference by name lives here.  Builders take
a plain parameter dict (already schema-checked by the CLI) and return the
corresponding spec objects.  Density evaluators are vectorized over (m, d)
point arrays; jump functional evaluators broadcast over arbitrary shapes with
a trailing space axis.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .configuration import Configuration, ProcessSpec
from .levy import JumpFunctional
from .space import IntensitySpec, Window

__all__ = [
    "DENSITY_NAMES",
    "PROCESS_NAMES",
    "FUNCTIONAL_NAMES",
    "make_window",
    "make_intensity",
    "make_process",
    "make_series_coefficient",
    "make_jump_functional",
]


def make_window(params: dict) -> Window:
    lower = tuple(float(v) for v in params["lower"])
    upper = tuple(float(v) for v in params["upper"])
    return Window(lower, upper)


# ---------------------------------------------------------------------------
# Densities.
# ---------------------------------------------------------------------------


def _constant_density(level: float):
    def density(pts: np.ndarray) -> np.ndarray:
        return np.full(pts.shape[0], level)

    return density


def _linear_density(offset: float, slopes: np.ndarray):
    def density(pts: np.ndarray) -> np.ndarray:
        return offset + pts @ slopes

    return density


def _gaussian_bump_density(amplitude, center, width, floor):
    def density(pts: np.ndarray) -> np.ndarray:
        sq = np.sum((pts - center) ** 2, axis=1)
        return floor + amplitude * np.exp(-0.5 * sq / width**2)

    return density


def _tabulated_density(window: Window, values: np.ndarray):
    shape = values.shape

    def density(pts: np.ndarray) -> np.ndarray:
        rel = (pts - window.lo) / window.widths
        out = np.empty(pts.shape[0])
        for i in range(pts.shape[0]):
            idx = tuple(
                min(shape[a] - 1, max(0, int(rel[i, a] * shape[a])))
                for a in range(window.dim)
            )
            out[i] = values[idx]
        return out

    return density


def _annulus_density(level: float, inner: float, outer: float):
    def density(pts: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(pts, axis=1)
        return np.where((r >= inner) & (r <= outer), level, 0.0)

    return density


DENSITY_NAMES = ("constant", "linear", "gaussian-bump", "user-tabulated-grid", "annulus")


def make_intensity(name: str, params: dict, window: Window) -> IntensitySpec:
    """Intensity measure from a catalog density name and parameter block."""
    if name == "constant":
        level = float(params.get("level", 1.0))
        if level <= 0:
            raise ValueError("constant density level must be positive")
        lo, widths = window.lo, window.widths

        def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
            return lo + rng.random((n, window.dim)) * widths

        return IntensitySpec(
            window, _constant_density(level), density_bound=level, sampler=sampler
        )
    if name == "linear":
        offset = float(params.get("offset", 0.0))
        slopes = np.asarray(
            params.get("slopes", [1.0] * window.dim), dtype=np.float64
        )
        corners = np.stack(
            np.meshgrid(*[(window.lo[a], window.hi[a]) for a in range(window.dim)],
                        indexing="ij"),
            axis=-1,
        ).reshape(-1, window.dim)
        vals = offset + corners @ slopes
        if vals.min() < 0:
            raise ValueError("linear density is negative on the window")
        return IntensitySpec(
            window, _linear_density(offset, slopes), density_bound=float(vals.max())
        )
    if name == "gaussian-bump":
        amplitude = float(params.get("amplitude", 1.0))
        width = float(params.get("width", 0.25))
        floor = float(params.get("floor", 0.0))
        center = np.asarray(
            params.get("center", 0.5 * (window.lo + window.hi)), dtype=np.float64
        )
        if amplitude < 0 or width <= 0 or floor < 0:
            raise ValueError("gaussian-bump needs amplitude, floor >= 0 and width > 0")
        return IntensitySpec(
            window,
            _gaussian_bump_density(amplitude, center, width, floor),
            density_bound=amplitude + floor,
        )
    if name == "user-tabulated-grid":
        values = np.asarray(params["values"], dtype=np.float64)
        if values.ndim != window.dim:
            raise ValueError("tabulated grid rank must equal the window dimension")
        if values.min() < 0 or not np.all(np.isfinite(values)):
            raise ValueError("tabulated values must be finite and nonnegative")
        return IntensitySpec(
            window,
            _tabulated_density(window, values),
            density_bound=float(values.max()),
        )
    if name == "annulus":
        level = float(params.get("level", 1.0))
        inner = float(params.get("inner", 0.0))
        outer = float(params.get("outer", float(np.max(np.abs(window.hi)))))
        if level <= 0 or inner < 0 or outer <= inner:
            raise ValueError("annulus needs level > 0 and 0 <= inner < outer")
        return IntensitySpec(
            window, _annulus_density(level, inner, outer), density_bound=level
        )
    raise ValueError(f"unknown density {name!r} (known: {DENSITY_NAMES})")


# ---------------------------------------------------------------------------
# Processes.
# ---------------------------------------------------------------------------


def _affine_factor(params: dict) -> Callable[[np.ndarray], float]:
    a = float(params.get("offset", 1.0))
    b = float(params.get("slope", 0.0))

    def phi(x: np.ndarray) -> float:
        return a + b * float(x[0])

    return phi


def _all_equal(pts: np.ndarray) -> bool:
    return bool(np.all(pts == pts[0]))


def _any_coincide(pts: np.ndarray) -> bool:
    k = pts.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            if np.all(pts[i] == pts[j]):
                return True
    return False


PROCESS_NAMES = (
    "const",
    "coordinate-product",
    "diag-indicator",
    "count-weighted",
    "exp-count",
    "offdiag-product",
)


def make_process(name: str, params: dict) -> ProcessSpec:
    """Process from a catalog name and parameter block."""
    if name == "const":
        arity = int(params.get("arity", 1))
        value = float(params.get("value", 1.0))
        return ProcessSpec(arity, lambda pts, om: value, catalog_id="const")
    if name == "coordinate-product":
        arity = int(params.get("arity", 1))
        phi = _affine_factor(params)

        def evaluator(pts: np.ndarray, om: Configuration) -> float:
            val = 1.0
            for i in range(pts.shape[0]):
                val *= phi(pts[i])
            return val

        return ProcessSpec(arity, evaluator, catalog_id="coordinate-product")
    if name == "diag-indicator":
        arity = int(params.get("arity", 2))
        if arity < 2:
            raise ValueError("diag-indicator needs arity >= 2")
        return ProcessSpec(
            arity,
            lambda pts, om: 1.0 if _all_equal(pts) else 0.0,
            catalog_id="diag-indicator",
        )
    if name == "count-weighted":
        arity = int(params.get("arity", 1))
        phi = _affine_factor(params)
        box_lo = np.asarray(params["box_lower"], dtype=np.float64)
        box_hi = np.asarray(params["box_upper"], dtype=np.float64)

        def evaluator(pts: np.ndarray, om: Configuration) -> float:
            val = float(om.count_in(box_lo, box_hi))
            for i in range(pts.shape[0]):
                val *= phi(pts[i])
            return val

        return ProcessSpec(arity, evaluator, catalog_id="count-weighted")
    if name == "exp-count":
        theta = float(params.get("theta", 1.0))
        return ProcessSpec(
            0,
            lambda pts, om: math.exp(-theta * om.size),
            catalog_id="exp-count",
        )
    if name == "offdiag-product":
        arity = int(params.get("arity", 2))
        phi = _affine_factor(params)

        def evaluator(pts: np.ndarray, om: Configuration) -> float:
            if _any_coincide(pts):
                return 0.0
            val = 1.0
            for i in range(pts.shape[0]):
                val *= phi(pts[i])
            return val

        return ProcessSpec(
            arity, evaluator, vanishes_on_diagonals=True, catalog_id="offdiag-product"
        )
    raise ValueError(f"unknown process {name!r} (known: {PROCESS_NAMES})")


def make_series_coefficient(name: str, params: dict):
    """Coefficient evaluator (value on an explicit point tuple) for named
    random variables usable by the series oracle.

    Point tuples may carry coinciding rows on tensor grids; counts use the
    multiplicity-preserving extension (rows count separately).
    """
    if name == "exp-count":
        theta = float(params.get("theta", 1.0))
        return lambda pts: math.exp(-theta * pts.shape[0])
    if name == "count":
        return lambda pts: float(pts.shape[0])
    if name == "box-count":
        box_lo = np.asarray(params["box_lower"], dtype=np.float64)
        box_hi = np.asarray(params["box_upper"], dtype=np.float64)

        def coeff(pts: np.ndarray) -> float:
            if pts.shape[0] == 0:
                return 0.0
            inside = np.all((pts >= box_lo) & (pts <= box_hi), axis=1)
            return float(np.count_nonzero(inside))

        return coeff
    if name == "const":
        value = float(params.get("value", 1.0))
        return lambda pts: value
    raise ValueError(f"unknown series coefficient {name!r}")


# ---------------------------------------------------------------------------
# Jump functionals.
# ---------------------------------------------------------------------------


FUNCTIONAL_NAMES = ("const", "jump-tail", "position-box", "time-power")


def make_jump_functional(name: str, params: dict) -> JumpFunctional:
    """n-fold jump functional from a catalog name and parameter block.

    Every catalog functional is a product over the n triples of a per-triple
    factor; the engine supplies horizon clipping and time ordering.
    """
    n = int(params.get("n", 1))

    def product_over_triples(factor):
        def evaluator(*args):
            val = 1.0
            for j in range(n):
                u, x, w = args[3 * j : 3 * j + 3]
                val = val * factor(u, x, w)
            return val

        return evaluator

    if name == "const":
        value = float(params.get("value", 1.0))
        return JumpFunctional(
            n, lambda *args: value, form="pre-post", catalog_id="const"
        )
    if name == "jump-tail":
        threshold = float(params.get("threshold", 1.0))

        def factor(u, x, w):
            return (np.linalg.norm(w, axis=-1) > threshold).astype(np.float64)

        return JumpFunctional(
            n, product_over_triples(factor), form="pre-jump", catalog_id="jump-tail"
        )
    if name == "position-box":
        box_lo = np.asarray(params["box_lower"], dtype=np.float64)
        box_hi = np.asarray(params["box_upper"], dtype=np.float64)

        def factor(u, x, w):
            inside = np.all((x >= box_lo) & (x <= box_hi), axis=-1)
            return inside.astype(np.float64)

        return JumpFunctional(
            n, product_over_triples(factor), form="pre-post", catalog_id="position-box"
        )
    if name == "time-power":
        power = float(params.get("power", 1.0))

        def factor(u, x, w):
            return np.asarray(u, dtype=np.float64) ** power

        return JumpFunctional(
            n, product_over_triples(factor), form="pre-post", catalog_id="time-power"
        )
    raise ValueError(f"unknown jump functional {name!r} (known: {FUNCTIONAL_NAMES})")
