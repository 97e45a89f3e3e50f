"""Estimation, gating and reproducible random-stream management.

Every Monte Carlo quantity in this package is produced by `run_replicated`,
which evaluates one replicate per counter-based stream and stores the result
in a slot indexed by the replicate number.  Aggregation is a fixed-order,
compensated reduction over those slots, so the final numbers are bit-identical
no matter how many workers filled them or in which order.
"""

from __future__ import annotations

import functools
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StreamKey",
    "MCConfig",
    "Estimate",
    "GateSpec",
    "GateResult",
    "VerificationReport",
    "make_stream",
    "run_replicated",
    "aggregate",
    "gate",
    "default_abs_floor",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class StreamKey:
    """Identifies one independent random stream.

    Distinct keys yield statistically independent Philox streams; the mapping
    is pure, so a replicate can be recomputed in isolation.
    """

    master_seed: int
    scenario_id: str
    replicate_index: int


@functools.lru_cache(maxsize=1024)
def _scenario_digest(scenario_id: str) -> tuple[int, int]:
    digest = hashlib.blake2b(scenario_id.encode("utf-8"), digest_size=16).digest()
    return (
        int.from_bytes(digest[:8], "little"),
        int.from_bytes(digest[8:], "little"),
    )


def _mix64(v: int) -> int:
    # splitmix64 finalizer; decorrelates structured integers into key words
    v = (v + 0x9E3779B97F4A7C15) & _MASK64
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & _MASK64
    return v ^ (v >> 31)


def make_stream(key: StreamKey) -> np.random.Generator:
    """Counter-based generator for the given key (stable across processes)."""
    d0, d1 = _scenario_digest(key.scenario_id)
    words = np.array(
        [
            d0 ^ _mix64(key.master_seed & _MASK64),
            d1 ^ _mix64(key.replicate_index & _MASK64),
        ],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=words))


@dataclass(frozen=True)
class MCConfig:
    """Replication budget for one Monte Carlo estimate."""

    replicates: int
    seed: int
    label: str = ""
    workers: int = 1

    def sub(self, suffix: str) -> "MCConfig":
        """Same budget under a derived stream label."""
        label = f"{self.label}/{suffix}" if self.label else suffix
        return MCConfig(self.replicates, self.seed, label, self.workers)

    def with_replicates(self, n: int) -> "MCConfig":
        return MCConfig(n, self.seed, self.label, self.workers)


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error."""

    mean: float
    std_error: float
    replicates: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "replicates": self.replicates,
        }

    @staticmethod
    def exact(value: float) -> "Estimate":
        return Estimate(value, 0.0, 1)


def run_replicated(n_replicates, worker_fn, *, seed, label, workers=1, width=1):
    """Evaluate `worker_fn(index, rng)` for each replicate into a slot array.

    Returns an array of shape (n_replicates, width).  `worker_fn` must return
    a float (width 1) or a sequence of `width` floats.  Workers process
    contiguous chunks; since each slot depends only on its own stream, the
    result array does not depend on the worker count.

    Each worker reuses one bit generator and rekeys it per replicate to the
    exact state `make_stream` would produce, so the generator handed to
    `worker_fn` is only valid for the duration of that call.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be >= 1")
    out = np.empty((n_replicates, width), dtype=np.float64)
    d0, d1 = _scenario_digest(label)
    key0 = d0 ^ _mix64(seed & _MASK64)

    def run_range(lo: int, hi: int) -> None:
        bitgen = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
        rng = np.random.Generator(bitgen)
        state = bitgen.state
        for i in range(lo, hi):
            state["state"]["counter"][:] = 0
            state["state"]["key"][0] = key0
            state["state"]["key"][1] = d1 ^ _mix64(i)
            state["buffer_pos"] = 4
            state["has_uint32"] = 0
            state["uinteger"] = 0
            bitgen.state = state
            out[i, :] = worker_fn(i, rng)

    workers = max(1, int(workers))
    if workers == 1 or n_replicates < 2 * workers:
        run_range(0, n_replicates)
    else:
        bounds = np.linspace(0, n_replicates, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_range, int(bounds[j]), int(bounds[j + 1]))
                for j in range(workers)
            ]
            for fut in futures:
                fut.result()
    return out


def aggregate(samples) -> Estimate:
    """Mean and standard error via compensated, fixed-order summation.

    Raises on non-finite samples (reporting the first offending index) and on
    fewer than two samples, where a standard error is undefined.
    """
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    n = arr.size
    if n < 2:
        raise ValueError("aggregate requires at least 2 samples")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"non-finite sample at replicate index {i}: {arr[i]!r}")
    vals = arr.tolist()
    mean = math.fsum(vals) / n
    m2 = math.fsum((v - mean) ** 2 for v in vals)
    se = math.sqrt(m2 / (n - 1)) / math.sqrt(n)
    return Estimate(mean, se, n)


@dataclass(frozen=True)
class GateSpec:
    """Statistical acceptance gate for comparing two estimates."""

    z_max: float = 4.0
    abs_floor: float | None = None  # None: 1e-9 * max(1, |lhs|)

    def floor_for(self, reference_mean: float) -> float:
        if self.abs_floor is not None:
            return self.abs_floor
        return default_abs_floor(reference_mean)

    def to_dict(self) -> dict:
        return {"z_max": self.z_max, "abs_floor": self.abs_floor}


def default_abs_floor(reference_mean: float) -> float:
    return 1e-9 * max(1.0, abs(reference_mean))


@dataclass(frozen=True)
class GateResult:
    z_score: float
    passed: bool
    diff: float
    tolerance: float

    def to_dict(self) -> dict:
        z = self.z_score if math.isfinite(self.z_score) else None
        return {
            "z_score": z,
            "passed": self.passed,
            "diff": self.diff,
            "tolerance": self.tolerance,
        }


def gate(a: Estimate, b: Estimate, z_max: float, abs_floor: float) -> GateResult:
    """Pass iff |a.mean - b.mean| <= z_max * combined SE + abs_floor."""
    for est in (a, b):
        if not (math.isfinite(est.mean) and math.isfinite(est.std_error)):
            raise ValueError("gate requires finite estimates")
    diff = abs(a.mean - b.mean)
    combined = math.hypot(a.std_error, b.std_error)
    tol = z_max * combined + abs_floor
    if combined > 0.0:
        z = diff / combined
    else:
        z = 0.0 if diff <= abs_floor else math.inf
    return GateResult(z, diff <= tol, diff, tol)


@dataclass
class VerificationReport:
    """Outcome of comparing two independent evaluations of one identity."""

    lhs: Estimate
    rhs: Estimate
    gate_result: GateResult
    gate_spec: GateSpec
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.gate_result.passed

    @property
    def z_score(self) -> float:
        return self.gate_result.z_score

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs.to_dict(),
            "rhs": self.rhs.to_dict(),
            "gate": self.gate_spec.to_dict(),
            **self.gate_result.to_dict(),
            "details": self.details,
        }


def compare(lhs: Estimate, rhs: Estimate, spec: GateSpec, details: dict | None = None) -> VerificationReport:
    """Gate `rhs` against `lhs` with the spec's floor rule anchored at lhs."""
    result = gate(lhs, rhs, spec.z_max, spec.floor_for(lhs.mean))
    return VerificationReport(lhs, rhs, result, spec, details or {})
