"""Both sides of the multiple mixed Mecke-Palm identity as runnable programs.

The left side is a Monte Carlo average of the pathwise mixed multiple
integral.  The right side expands into one term per admissible partition:
each term integrates, over distinct block points, the expected process value
at the expanded point vector with the configuration augmented by the block
points whose coordinate integrates against the random measure.

Two right-side modes provide genuinely different error sources:

* ``mc-outer``     -- block points drawn i.i.d. from the normalized intensity
                      (importance weight mass^k), fresh configuration per
                      replicate and term.
* ``quadrature-outer`` -- deterministic tensor rule over block points, one
                      shared configuration per replicate across all terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .configuration import (
    Configuration,
    ProcessSpec,
    as_epsilon,
    mixed_multiple_integral,
    sample_configuration,
)
from .mcstats import (
    Estimate,
    GateSpec,
    MCConfig,
    VerificationReport,
    aggregate,
    compare,
    run_replicated,
)
from .partitions import Partition, enumerate_epsilon_partitions
from .space import (
    IntensitySpec,
    QuadratureSpec,
    sample_sigma_points,
    sigma_mass,
    sigma_product_nodes,
)

__all__ = [
    "PalmTerm",
    "TermEstimate",
    "RhsEstimate",
    "expand_rhs",
    "estimate_lhs",
    "estimate_terms",
    "estimate_rhs",
    "verify_identity",
]


@dataclass(frozen=True)
class PalmTerm:
    """One partition's contribution to the expanded right-hand side."""

    partition: Partition
    block_eps: tuple[int, ...]
    integrand: Callable[[np.ndarray, Configuration], float]
    label: str

    @property
    def k(self) -> int:
        return self.partition.k


@dataclass(frozen=True)
class TermEstimate:
    label: str
    k: int
    estimate: Estimate

    def to_dict(self) -> dict:
        return {"term": self.label, "k": self.k, **self.estimate.to_dict()}


@dataclass(frozen=True)
class RhsEstimate:
    total: Estimate
    terms: tuple[TermEstimate, ...]
    mode: str

    def to_dict(self) -> dict:
        return {
            "total": self.total.to_dict(),
            "mode": self.mode,
            "terms": [t.to_dict() for t in self.terms],
        }


def _singleton_partition(n: int) -> Partition:
    return Partition(tuple((i,) for i in range(1, n + 1)))


def make_palm_term(f: ProcessSpec, eps, p: Partition) -> PalmTerm:
    """Term integrand: y -> f(expanded(y); omega augmented by epsilon-1 blocks)."""
    eps = as_epsilon(eps)
    n = len(eps)
    expand_idx = np.empty(n, dtype=np.intp)
    block_eps = []
    for j, block in enumerate(p.blocks):
        vals = {eps[i - 1] for i in block}
        if len(vals) != 1:
            raise ValueError(f"epsilon not constant on block {block}")
        block_eps.append(vals.pop())
        for i in block:
            expand_idx[i - 1] = j
    aug_sel = np.array([j for j, e in enumerate(block_eps) if e == 1], dtype=np.intp)

    def integrand(y: np.ndarray, omega: Configuration) -> float:
        omega_aug = omega.union(y[aug_sel]) if aug_sel.size else omega
        return f(y[expand_idx], omega_aug)

    return PalmTerm(p, tuple(block_eps), integrand, str(p))


def expand_rhs(f: ProcessSpec, eps, *, partition_filter: str = "admissible") -> list[PalmTerm]:
    """One term per admissible partition, in canonical enumeration order.

    ``partition_filter="singletons-only"`` is a deliberately broken mode that
    keeps only the all-singletons term, i.e. the expansion that is valid only
    for processes vanishing on the diagonals.  It exists so tests can show
    the admissible-family sum is essential.
    """
    eps = as_epsilon(eps)
    if f.arity != len(eps):
        raise ValueError("process arity must match epsilon length")
    if partition_filter == "admissible":
        parts = enumerate_epsilon_partitions(len(eps), eps)
    elif partition_filter == "singletons-only":
        parts = [_singleton_partition(len(eps))]
    else:
        raise ValueError(f"unknown partition_filter {partition_filter!r}")
    return [make_palm_term(f, eps, p) for p in parts]


def estimate_lhs(
    f: ProcessSpec,
    eps,
    intensity: IntensitySpec,
    mc: MCConfig,
    quad: QuadratureSpec = QuadratureSpec(),
) -> Estimate:
    """Monte Carlo of the pathwise mixed multiple integral."""
    eps = as_epsilon(eps)

    def worker(i: int, rng: np.random.Generator) -> float:
        omega = sample_configuration(intensity, rng, quad)
        return mixed_multiple_integral(f, omega, eps, intensity, quad)

    samples = run_replicated(
        mc.replicates, worker, seed=mc.seed, label=mc.sub("lhs").label, workers=mc.workers
    )
    return aggregate(samples[:, 0])


def _draw_distinct_points(
    intensity: IntensitySpec, k: int, rng: np.random.Generator, quad: QuadratureSpec
) -> np.ndarray:
    while True:
        pts = sample_sigma_points(intensity, k, rng, quad)
        if k < 2:
            return pts
        ok = True
        for a in range(k):
            for b in range(a + 1, k):
                if np.all(pts[a] == pts[b]):
                    ok = False
        if ok:
            return pts


def estimate_terms(
    terms: Sequence,
    intensity: IntensitySpec,
    mc: MCConfig,
    quad: QuadratureSpec = QuadratureSpec(),
    mode: str = "mc-outer",
) -> RhsEstimate:
    """Estimate a sum of partition terms (anything with .k/.integrand/.label).

    mc-outer uses an independent stream per term; the total standard error
    combines per-term errors in quadrature.  quadrature-outer shares one
    configuration per replicate across terms (the block-point integral is
    deterministic), so the total is aggregated from per-replicate sums.
    """
    terms = list(terms)
    if not terms:
        raise ValueError("no terms to estimate")
    if mode == "mc-outer":
        mass = sigma_mass(intensity, quad)
        per_term: list[TermEstimate] = []
        for t_idx, term in enumerate(terms):
            k = term.k
            weight = mass**k

            def worker(i: int, rng: np.random.Generator, term=term, k=k, weight=weight) -> float:
                y = _draw_distinct_points(intensity, k, rng, quad)
                omega = sample_configuration(intensity, rng, quad)
                return weight * term.integrand(y, omega)

            samples = run_replicated(
                mc.replicates,
                worker,
                seed=mc.seed,
                label=mc.sub(f"rhs/term{t_idx}").label,
                workers=mc.workers,
            )
            per_term.append(TermEstimate(term.label, k, aggregate(samples[:, 0])))
        total_mean = math.fsum(t.estimate.mean for t in per_term)
        total_se = math.sqrt(math.fsum(t.estimate.std_error**2 for t in per_term))
        total = Estimate(total_mean, total_se, mc.replicates)
        return RhsEstimate(total, tuple(per_term), mode)

    if mode == "quadrature-outer":
        rules = {
            k: sigma_product_nodes(intensity, quad, k) for k in sorted({t.k for t in terms})
        }

        def worker(i: int, rng: np.random.Generator):
            omega = sample_configuration(intensity, rng, quad)
            out = []
            for term in terms:
                tuples, weights = rules[term.k]
                vals = math.fsum(
                    weights[j] * term.integrand(tuples[j], omega)
                    for j in range(tuples.shape[0])
                )
                out.append(vals)
            return out

        samples = run_replicated(
            mc.replicates,
            worker,
            seed=mc.seed,
            label=mc.sub("rhs/shared").label,
            workers=mc.workers,
            width=len(terms),
        )
        per_term = tuple(
            TermEstimate(term.label, term.k, aggregate(samples[:, j]))
            for j, term in enumerate(terms)
        )
        row_sums = [math.fsum(samples[i, :].tolist()) for i in range(samples.shape[0])]
        total = aggregate(row_sums)
        return RhsEstimate(total, per_term, mode)

    raise ValueError(f"unknown rhs mode {mode!r}")


def estimate_rhs(
    terms: Sequence[PalmTerm],
    intensity: IntensitySpec,
    mc: MCConfig,
    quad: QuadratureSpec = QuadratureSpec(),
    mode: str = "mc-outer",
) -> RhsEstimate:
    return estimate_terms(terms, intensity, mc, quad, mode)


def verify_identity(
    f: ProcessSpec,
    eps,
    intensity: IntensitySpec,
    *,
    mc_lhs: MCConfig,
    mc_rhs: MCConfig | None = None,
    quad: QuadratureSpec = QuadratureSpec(),
    gate_spec: GateSpec = GateSpec(),
    rhs_mode: str = "mc-outer",
    partition_filter: str = "admissible",
) -> VerificationReport:
    """Compare the two sides of the mixed Mecke-Palm identity under the gate."""
    eps = as_epsilon(eps)
    mc_rhs = mc_rhs if mc_rhs is not None else mc_lhs
    lhs = estimate_lhs(f, eps, intensity, mc_lhs, quad)
    terms = expand_rhs(f, eps, partition_filter=partition_filter)
    rhs = estimate_rhs(terms, intensity, mc_rhs, quad, rhs_mode)
    details = {
        "epsilon": list(eps),
        "process": f.catalog_id,
        "partition_filter": partition_filter,
        "rhs": rhs.to_dict(),
    }
    return compare(lhs, rhs.total, gate_spec, details)
