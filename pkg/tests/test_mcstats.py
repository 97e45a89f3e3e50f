import math

import numpy as np
import pytest

from poissonpalm.mcstats import (
    Estimate,
    GateSpec,
    StreamKey,
    aggregate,
    compare,
    default_abs_floor,
    gate,
    make_stream,
    run_replicated,
)


def test_aggregate_constant_samples():
    est = aggregate([1.0, 1.0, 1.0, 1.0])
    assert est.mean == 1.0
    assert est.std_error == 0.0
    assert est.replicates == 4


def test_aggregate_two_point():
    est = aggregate([0.0, 2.0])
    assert est.mean == 1.0
    assert est.std_error == 1.0


def test_aggregate_normal_draws_clt_scale():
    rng = make_stream(StreamKey(1, "agg-normal", 0))
    draws = rng.standard_normal(100_000)
    est = aggregate(draws)
    assert abs(est.mean) < 4.0 / math.sqrt(100_000)


def test_aggregate_rejects_nonfinite_with_index():
    samples = [1.0, 2.0, math.nan, 3.0]
    with pytest.raises(ValueError, match="index 2"):
        aggregate(samples)


def test_aggregate_requires_two_samples():
    with pytest.raises(ValueError):
        aggregate([1.0])


def test_aggregate_order_independent_bitwise():
    rng = make_stream(StreamKey(2, "agg-order", 0))
    samples = rng.random(4097).tolist()
    a = aggregate(samples)
    b = aggregate(list(reversed(samples)))
    rng.shuffle(samples)
    c = aggregate(samples)
    assert (a.mean, a.std_error) == (b.mean, b.std_error) == (c.mean, c.std_error)


def test_gate_identical_estimates():
    e = Estimate(2.0, 0.1, 100)
    res = gate(e, e, 4.0, 1e-9)
    assert res.passed and res.z_score == 0.0


def test_gate_ten_sigma_fails():
    a = Estimate(0.0, 0.1, 100)
    b = Estimate(10.0 * math.hypot(0.1, 0.1), 0.1, 100)
    assert not gate(a, b, 4.0, 1e-9).passed


def test_gate_deterministic_floor():
    a = Estimate(1.0, 0.0, 10)
    b = Estimate(1.0 + 1e-12, 0.0, 10)
    res = gate(a, b, 4.0, default_abs_floor(1.0))
    assert res.passed
    assert not gate(a, Estimate(1.1, 0.0, 10), 4.0, 1e-9).passed


def test_stream_determinism_and_separation():
    k = StreamKey(42, "streams", 7)
    a = make_stream(k).random(4)
    b = make_stream(k).random(4)
    assert np.array_equal(a, b)
    c = make_stream(StreamKey(42, "streams", 8)).random(4)
    d = make_stream(StreamKey(43, "streams", 7)).random(4)
    e = make_stream(StreamKey(42, "streams2", 7)).random(4)
    for other in (c, d, e):
        assert not np.array_equal(a, other)


def test_run_replicated_matches_make_stream():
    ref = np.array([make_stream(StreamKey(9, "rr", i)).random(2) for i in range(64)])
    got = run_replicated(64, lambda i, rng: rng.random(2), seed=9, label="rr", width=2)
    assert np.array_equal(ref, got)


@pytest.mark.parametrize("workers", [2, 4, 7])
def test_run_replicated_worker_invariance(workers):
    base = run_replicated(
        257, lambda i, rng: rng.poisson(3.0) + rng.random(), seed=5, label="wk"
    )
    multi = run_replicated(
        257,
        lambda i, rng: rng.poisson(3.0) + rng.random(),
        seed=5,
        label="wk",
        workers=workers,
    )
    assert np.array_equal(base, multi)


def test_compare_report_roundtrip():
    a = Estimate(1.0, 0.01, 100)
    b = Estimate(1.005, 0.01, 100)
    report = compare(a, b, GateSpec())
    d = report.to_dict()
    assert d["passed"] is True
    assert d["lhs"]["mean"] == 1.0
    assert "z_score" in d
