import math

import numpy as np
import pytest

from poissonpalm import (
    Configuration,
    IntensitySpec,
    ProcessSpec,
    QuadratureSpec,
    Window,
    as_epsilon,
    mixed_multiple_integral,
    point_integral,
    sample_configuration,
)
from poissonpalm.catalog import make_intensity, make_process
from poissonpalm.mcstats import StreamKey, aggregate, make_stream, run_replicated


def cfg(points):
    return Configuration.from_points(np.asarray(points, dtype=float).reshape(-1, 1))


def test_configuration_canonical_and_distinct():
    c = cfg([0.4, 0.1, 0.3])
    assert np.allclose(c.points.ravel(), [0.1, 0.3, 0.4])
    with pytest.raises(ValueError, match="distinct"):
        cfg([0.2, 0.2])
    assert c.points.flags.writeable is False


def test_configuration_union_dedups():
    c = cfg([0.1, 0.5])
    u = c.union(np.array([[0.5], [0.7]]))
    assert u.size == 3
    assert np.allclose(u.points.ravel(), [0.1, 0.5, 0.7])


def test_count_in_box():
    c = cfg([0.1, 0.5, 0.9])
    assert c.count_in([0.0], [0.5]) == 2
    assert c.count_in([0.45], [0.55]) == 1


def test_as_epsilon_parsing():
    assert as_epsilon("101") == (1, 0, 1)
    assert as_epsilon([1, 1]) == (1, 1)
    with pytest.raises(ValueError):
        as_epsilon("102")
    with pytest.raises(ValueError):
        as_epsilon("")


def test_sample_configuration_poisson_count(unit_intensity, quad):
    def worker(i, rng):
        return float(sample_configuration(unit_intensity, rng, quad).size)

    counts = run_replicated(100_000, worker, seed=11, label="cfg-count", workers=1)
    est = aggregate(counts[:, 0])
    assert abs(est.mean - 1.0) < 4 * est.std_error
    # variance check: spread of (N - mean)^2 has its own standard error
    dev2 = (counts[:, 0] - est.mean) ** 2
    var_est = aggregate(dev2)
    assert abs(var_est.mean - 1.0) < 5 * var_est.std_error


def test_sample_configuration_tiny_mass(unit_window, quad):
    tiny = IntensitySpec(
        unit_window, lambda p: 1e-9 * np.ones(p.shape[0]), density_bound=1e-9
    )
    rng = make_stream(StreamKey(12, "cfg-tiny", 0))
    assert all(
        sample_configuration(tiny, rng, quad).size == 0 for _ in range(1000)
    )


def test_point_integral_examples():
    count = ProcessSpec(1, lambda pts, om: 1.0)
    assert point_integral(count, cfg([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])) == 7.0
    ident = ProcessSpec(1, lambda pts, om: float(pts[0, 0]))
    assert point_integral(ident, cfg([0.1, 0.2, 0.4])) == pytest.approx(0.7)
    size_dep = ProcessSpec(1, lambda pts, om: float(om.size))
    assert point_integral(size_dep, cfg([0.2, 0.5, 0.8])) == 9.0


def test_mixed_diag_indicator_counts_atoms(unit_intensity, quad):
    f = make_process("diag-indicator", {"arity": 2})
    om = cfg([0.15, 0.4, 0.75, 0.9])
    assert mixed_multiple_integral(f, om, (1, 1), unit_intensity, quad) == 4.0


def test_mixed_fubini_for_deterministic_product(unit_intensity, quad):
    f = ProcessSpec(2, lambda pts, om: float(pts[0, 0] * (1.0 + pts[1, 0])))
    om = cfg([0.3])
    val = mixed_multiple_integral(f, om, (0, 0), unit_intensity, quad)
    assert val == pytest.approx(0.5 * 1.5, abs=1e-4)


def test_mixed_atoms_times_mass():
    w = Window.interval(0.0, 1.0)
    two = make_intensity("constant", {"level": 2.0}, w)
    f = ProcessSpec(2, lambda pts, om: 1.0)
    om = cfg([0.2, 0.5, 0.8])
    val = mixed_multiple_integral(f, om, (1, 0), two, QuadratureSpec())
    assert val == pytest.approx(6.0)


def test_mixed_linearity(unit_intensity, quad):
    f = ProcessSpec(2, lambda pts, om: float(pts[0, 0] + pts[1, 0]))
    g = ProcessSpec(2, lambda pts, om: float(pts[0, 0] * pts[1, 0]) + om.size)
    comb = ProcessSpec(
        2,
        lambda pts, om: 2.0 * f.evaluator(pts, om) - 3.0 * g.evaluator(pts, om),
    )
    om = cfg([0.25, 0.5, 0.7])
    for eps in [(1, 1), (1, 0), (0, 1), (0, 0)]:
        lhs = mixed_multiple_integral(comb, om, eps, unit_intensity, quad)
        rhs = 2.0 * mixed_multiple_integral(
            f, om, eps, unit_intensity, quad
        ) - 3.0 * mixed_multiple_integral(g, om, eps, unit_intensity, quad)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_mixed_all_atoms_diag_vanishing_equals_distinct_tuples(unit_intensity, quad):
    # brute force over ordered tuples of distinct atoms
    import itertools

    f = make_process("offdiag-product", {"arity": 3, "offset": 0.5, "slope": 1.0})
    rng = make_stream(StreamKey(13, "cfg-brute", 0))
    for _ in range(5):
        om = sample_configuration(unit_intensity, rng, quad)
        if om.size > 6 or om.size == 0:
            continue
        val = mixed_multiple_integral(f, om, (1, 1, 1), unit_intensity, quad)
        brute = math.fsum(
            f.evaluator(np.stack(t), om)
            for t in itertools.permutations(om.points, 3)
        )
        assert val == pytest.approx(brute, rel=1e-12, abs=1e-12)


def test_absorption_of_added_atom_for_diag_vanishing(unit_intensity, quad):
    # adding the fixed point to the configuration does not change the
    # remaining-coordinate integral when the process vanishes on diagonals
    f = make_process("offdiag-product", {"arity": 2, "offset": 0.5, "slope": 1.0})
    x = np.array([[0.31]])
    om = cfg([0.1, 0.6, 0.85])
    om_aug = om.union(x)

    def restricted(pts, omega):
        return f.evaluator(np.vstack([pts, x]), om_aug)

    f_rest = ProcessSpec(1, restricted)
    for eps in [(1,), (0,)]:
        with_atom = mixed_multiple_integral(f_rest, om_aug, eps, unit_intensity, quad)
        without = mixed_multiple_integral(f_rest, om, eps, unit_intensity, quad)
        assert with_atom == pytest.approx(without, rel=1e-12, abs=1e-12)


def test_mixed_empty_configuration_atom_coordinate(unit_intensity, quad):
    f = ProcessSpec(2, lambda pts, om: 1.0)
    empty = Configuration.empty(1)
    assert mixed_multiple_integral(f, empty, (1, 0), unit_intensity, quad) == 0.0
