import math

import numpy as np
import pytest
from scipy import stats

from poissonpalm import (
    IntensitySpec,
    QuadratureSpec,
    Window,
    quadrature_integrate,
    sigma_mass,
)
from poissonpalm.catalog import make_intensity
from poissonpalm.mcstats import StreamKey, make_stream
from poissonpalm.space import (
    DensityError,
    EvaluationCapExceeded,
    box_mass,
    sample_sigma_points,
    sigma_product_nodes,
)


def test_window_validation():
    with pytest.raises(ValueError):
        Window((0.0,), (0.0,))
    with pytest.raises(ValueError):
        Window((0.0, 0.0), (1.0,))
    w = Window((0.0, -1.0), (2.0, 1.0))
    assert w.dim == 2
    assert w.volume == pytest.approx(4.0)


def test_sigma_mass_unit_uniform(unit_intensity, quad):
    assert sigma_mass(unit_intensity, quad) == pytest.approx(1.0)


def test_sigma_mass_constant_two_on_0_3():
    w = Window.interval(0.0, 3.0)
    spec = make_intensity("constant", {"level": 2.0}, w)
    assert sigma_mass(spec, QuadratureSpec()) == pytest.approx(6.0)


def test_sigma_mass_linear_density(linear_intensity):
    # oracle: closed-form integral of x over [0, 1] is 1/2
    mass = sigma_mass(linear_intensity, QuadratureSpec(points_per_axis=1000))
    assert mass == pytest.approx(0.5, abs=1e-6)


def test_sigma_mass_monotone_in_density(unit_window, quad):
    lo = IntensitySpec(unit_window, lambda p: 1.0 + 0.5 * p[:, 0])
    hi = IntensitySpec(unit_window, lambda p: 1.5 + 0.5 * p[:, 0])
    assert sigma_mass(hi, quad) >= sigma_mass(lo, quad)


def test_non_finite_density_reports_node(unit_window, quad):
    bad = IntensitySpec(
        unit_window, lambda p: np.where(p[:, 0] > 0.9, np.nan, 1.0)
    )
    with pytest.raises(DensityError, match="node"):
        sigma_mass(bad, quad)


def test_quadrature_product_factorizes(unit_intensity, quad):
    # tensor-power integral of a product equals the product of 1-d integrals
    val = quadrature_integrate(
        lambda y: float(y[0, 0] * y[1, 0]), 2, unit_intensity, quad
    )
    assert val == pytest.approx(0.25, abs=1e-4)


def test_quadrature_diagonal_indicator_vanishes(unit_intensity, quad):
    val = quadrature_integrate(
        lambda y: 1.0 if np.all(y[0] == y[1]) else 0.0, 2, unit_intensity, quad
    )
    assert val == 0.0


def test_quadrature_constant_total_mass(unit_intensity, quad):
    assert quadrature_integrate(lambda y: 1.0, 2, unit_intensity, quad) == pytest.approx(
        1.0
    )


def test_product_nodes_nudge_keeps_triples_distinct(unit_intensity):
    tuples, _ = sigma_product_nodes(
        unit_intensity, QuadratureSpec("tensor-midpoint", points_per_axis=4), 3
    )
    for t in tuples:
        assert len({float(v) for v in t[:, 0]}) == 3


def test_quadrature_cap(unit_intensity):
    small = QuadratureSpec(points_per_axis=64, eval_cap=1000)
    with pytest.raises(EvaluationCapExceeded):
        sigma_product_nodes(unit_intensity, small, 2)


def test_quasi_random_scheme_mass(unit_intensity):
    quad = QuadratureSpec("quasi-random", total_points=4096)
    assert sigma_mass(unit_intensity, quad) == pytest.approx(1.0)


def test_sampler_uniform_mean(unit_intensity, quad):
    rng = make_stream(StreamKey(3, "space-uniform", 0))
    pts = sample_sigma_points(unit_intensity, 100_000, rng, quad)
    se = math.sqrt(1.0 / 12.0 / 100_000)
    assert abs(pts[:, 0].mean() - 0.5) < 4 * se


def test_sampler_normalization_invariance(unit_window, quad):
    # same stream, scaled density: identical accepted points
    rng1 = make_stream(StreamKey(4, "space-scale", 0))
    rng2 = make_stream(StreamKey(4, "space-scale", 0))
    one = IntensitySpec(unit_window, lambda p: np.ones(p.shape[0]), density_bound=1.0)
    five = IntensitySpec(
        unit_window, lambda p: 5.0 * np.ones(p.shape[0]), density_bound=5.0
    )
    a = sample_sigma_points(one, 500, rng1, quad)
    b = sample_sigma_points(five, 500, rng2, quad)
    assert np.array_equal(a, b)


def test_sampler_linear_density_mean(linear_intensity, quad):
    # normalized law has density 2x on [0,1]; mean 2/3, sd^2 = 1/18
    rng = make_stream(StreamKey(5, "space-linear", 0))
    pts = sample_sigma_points(linear_intensity, 100_000, rng, quad)
    se = math.sqrt((1.0 / 18.0) / 100_000)
    assert abs(pts[:, 0].mean() - 2.0 / 3.0) < 4 * se


def test_sampler_ks_against_normalized_cdf(linear_intensity, quad):
    rng = make_stream(StreamKey(6, "space-ks", 0))
    pts = sample_sigma_points(linear_intensity, 100_000, rng, quad)[:, 0]
    res = stats.kstest(pts, lambda x: np.clip(x, 0.0, 1.0) ** 2)
    assert res.pvalue > 1e-3


def test_sampler_bound_violation_raises(unit_window, quad):
    lying = IntensitySpec(
        unit_window, lambda p: 2.0 * np.ones(p.shape[0]), density_bound=1.0
    )
    rng = make_stream(StreamKey(7, "space-bound", 0))
    with pytest.raises(DensityError, match="exceeds bound"):
        sample_sigma_points(lying, 10, rng, quad)


def test_box_mass_clipping(unit_intensity, quad):
    # box edges deliberately not grid-aligned
    assert box_mass(unit_intensity, [0.013], [0.77], quad) == pytest.approx(
        0.757, abs=1e-12
    )
    assert box_mass(unit_intensity, [-5.0], [5.0], quad) == pytest.approx(1.0)
    assert box_mass(unit_intensity, [2.0], [3.0], quad) == 0.0
