"""Exact exponential-series evaluation of expectations of random variables.

For a finite-mass window, the expectation of a configuration functional g is
an exponentially weighted sum over the number of points: the order-n term
integrates the value of g on the explicit n-point configuration against the
n-fold intensity power, divided by n!.  This gives a third, simulation-free
evaluator next to Monte Carlo and the partition expansion.

The coefficient evaluator receives the raw point tuple (an (n, d) array).
On tensor grids some tuples carry coinciding coordinates; the evaluator must
implement the off-diagonal extension (count points with multiplicity), which
is the continuous continuation from the full-measure set of distinct tuples.
Node nudging in the quadrature rules makes coincidences unreachable anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import poisson

from .space import (
    EvaluationCapExceeded,
    IntensitySpec,
    QuadratureSpec,
    sigma_mass,
    sigma_product_nodes,
)

__all__ = ["SeriesSpec", "SeriesResult", "default_order_cutoff", "expectation_series"]


@dataclass(frozen=True)
class SeriesSpec:
    """Truncated series specification for a configuration functional.

    coefficient(points) is the functional's value on the configuration whose
    atoms are the rows of `points`; it must be invariant under row
    permutations (spot-tested by callers, not enforced here).
    """

    n_max: int
    coefficient: Callable[[np.ndarray], float]
    bound_hint: float | None = None

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")


@dataclass(frozen=True)
class SeriesResult:
    value: float
    truncation_bound: float | None
    orders_evaluated: int
    capped_at_order: int | None
    order_contributions: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "truncation_bound": self.truncation_bound,
            "orders_evaluated": self.orders_evaluated,
            "capped_at_order": self.capped_at_order,
        }


def default_order_cutoff(mass: float) -> int:
    """Truncation order beyond which the count tail is negligible at desk scale."""
    return math.ceil(mass + 10.0 * math.sqrt(mass) + 10.0)


def _order_integral(
    spec: SeriesSpec, intensity: IntensitySpec, quad: QuadratureSpec, n: int
) -> float:
    try:
        tuples, weights = sigma_product_nodes(intensity, quad, n)
    except EvaluationCapExceeded:
        if quad.resolved_scheme(n, intensity.window.dim) == "quasi-random":
            raise
        fallback = QuadratureSpec(
            "quasi-random", quad.points_per_axis, quad.total_points, quad.eval_cap
        )
        tuples, weights = sigma_product_nodes(intensity, fallback, n)
    vals = np.fromiter(
        (float(spec.coefficient(tuples[i])) for i in range(tuples.shape[0])),
        dtype=np.float64,
        count=tuples.shape[0],
    )
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise ValueError(
            f"non-finite coefficient at order {n}, node {tuples[int(bad[0])].tolist()}"
        )
    return math.fsum((vals * weights).tolist())


def expectation_series(
    spec: SeriesSpec,
    intensity: IntensitySpec,
    quad: QuadratureSpec = QuadratureSpec(),
) -> SeriesResult:
    """Truncated series value with an optional count-tail truncation bound.

    Orders are evaluated independently in ascending order.  If the quadrature
    cap is hit at some order, the result is the partial sum through the last
    feasible order, annotated with the first capped order.
    """
    mass = sigma_mass(intensity, quad)
    dim = intensity.window.dim
    contributions: list[float] = [float(spec.coefficient(np.empty((0, dim))))]
    capped_at: int | None = None
    for n in range(1, spec.n_max + 1):
        try:
            integral = _order_integral(spec, intensity, quad, n)
        except EvaluationCapExceeded:
            capped_at = n
            break
        contributions.append(integral / math.factorial(n))
    orders_evaluated = len(contributions) - 1
    value = math.exp(-mass) * math.fsum(contributions)
    bound: float | None = None
    if spec.bound_hint is not None:
        bound = float(spec.bound_hint) * float(poisson.sf(orders_evaluated, mass))
    return SeriesResult(value, bound, orders_evaluated, capped_at, tuple(contributions))
