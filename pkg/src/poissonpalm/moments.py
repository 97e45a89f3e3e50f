"""Moment formulas for products of powers of interlaced multiple integrals.

The product of powers is linearized into a single multiple integral over a
labeled index set (one coordinate per factor copy and slot), and the mixed
Mecke-Palm expansion then turns its expectation into a sum over admissible
partitions of that index set.  Each term evaluates, at distinct block points,
the weight times the product of factor values on the expanded coordinates,
with the configuration augmented by all block points whose coordinate couples
to the random measure.

Explicit, hand-coded expansions of the second moment of a double integral
(eleven integral groups with multiplicities 1,2,2,1,1,1,2,2,1,1,1) and of the
squared intensity/configuration mixed integral (two groups) serve as
independent cross-checks of the generic expansion.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
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
from .palm import RhsEstimate, estimate_terms
from .partitions import (
    LabeledIndex,
    MAX_PARTITION_SIZE,
    Partition,
    enumerate_labeled_partitions,
)
from .space import IntensitySpec, QuadratureSpec

__all__ = [
    "MomentFactor",
    "MomentSpec",
    "MomentTerm",
    "expand_moment_terms",
    "term_group_key",
    "evaluate_moment",
    "ExplicitGroup",
    "GroupedSecondMoment",
    "second_moment_2process_explicit",
    "second_moment_mixed_explicit",
]


@dataclass(frozen=True)
class MomentFactor:
    """One factor: a power of a mixed multiple integral of a process."""

    process: ProcessSpec
    power: int
    eps: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "eps", as_epsilon(self.eps))
        if self.power < 1:
            raise ValueError("power must be >= 1")
        if len(self.eps) != self.process.arity:
            raise ValueError("epsilon length must equal the factor's arity")


@dataclass(frozen=True)
class MomentSpec:
    """Product of factor powers, optionally weighted by a random variable."""

    factors: tuple[MomentFactor, ...]
    weight: ProcessSpec | None = None

    def __post_init__(self):
        if not self.factors:
            raise ValueError("at least one factor required")
        if self.weight is not None and self.weight.arity != 0:
            raise ValueError("weight must be a 0-process")
        if self.index_size > MAX_PARTITION_SIZE:
            raise ValueError(
                f"total coordinate count {self.index_size} exceeds the partition "
                f"cap {MAX_PARTITION_SIZE}"
            )

    @property
    def index_size(self) -> int:
        return sum(f.process.arity * f.power for f in self.factors)

    def labeled_index(self) -> LabeledIndex:
        return LabeledIndex.build(
            [f.process.arity for f in self.factors],
            [f.power for f in self.factors],
        )


@dataclass(frozen=True)
class MomentTerm:
    """One admissible partition's term of the expanded moment."""

    partition: Partition
    block_eps: tuple[int, ...]
    integrand: Callable[[np.ndarray, Configuration], float]
    label: str
    group_key: tuple

    @property
    def k(self) -> int:
        return self.partition.k


def term_group_key(index: LabeledIndex, p: Partition) -> tuple:
    """Canonical key identifying terms equal after renaming block points.

    Two partitions produce the same integral whenever their factor-slot block
    patterns coincide up to a relabeling of blocks; the key is the minimal
    pattern over all block relabelings.
    """
    if math.factorial(p.k) > 5040:
        raise ValueError("group key computation capped at k <= 7")
    block_of = p.block_of()
    best = None
    for perm in itertools.permutations(range(p.k)):
        pattern = tuple(
            sorted(
                (alpha, tuple(perm[block_of[s]] for s in flat_ids))
                for (alpha, gamma, flat_ids) in index.groups
            )
        )
        if best is None or pattern < best:
            best = pattern
    return best


def _make_moment_term(spec: MomentSpec, index: LabeledIndex, p: Partition) -> MomentTerm:
    flat_eps = index.flat_epsilon([f.eps for f in spec.factors])
    block_of = p.block_of()
    block_eps = []
    for block in p.blocks:
        vals = {flat_eps[s - 1] for s in block}
        if len(vals) != 1:
            raise ValueError(f"epsilon not constant on block {block}")
        block_eps.append(vals.pop())
    aug_sel = np.array([j for j, e in enumerate(block_eps) if e == 1], dtype=np.intp)
    group_rows = [
        (spec.factors[alpha - 1].process,
         np.array([block_of[s] for s in flat_ids], dtype=np.intp))
        for (alpha, gamma, flat_ids) in index.groups
    ]
    weight = spec.weight
    empty_pts = np.empty((0, 0))

    def integrand(y: np.ndarray, omega: Configuration) -> float:
        omega_aug = omega.union(y[aug_sel]) if aug_sel.size else omega
        val = weight(empty_pts, omega_aug) if weight is not None else 1.0
        for proc, sel in group_rows:
            val *= proc(y[sel], omega_aug)
        return val

    return MomentTerm(
        p, tuple(block_eps), integrand, str(p), term_group_key(index, p)
    )


def expand_moment_terms(spec: MomentSpec) -> list[MomentTerm]:
    """Complete canonical term list over the admissible labeled partitions."""
    index = spec.labeled_index()
    parts = enumerate_labeled_partitions(index, [f.eps for f in spec.factors])
    return [_make_moment_term(spec, index, p) for p in parts]


def _lhs_worker(spec: MomentSpec, intensity: IntensitySpec, quad: QuadratureSpec):
    empty_pts = np.empty((0, 0))

    def worker(i: int, rng: np.random.Generator) -> float:
        omega = sample_configuration(intensity, rng, quad)
        val = spec.weight(empty_pts, omega) if spec.weight is not None else 1.0
        for factor in spec.factors:
            base = mixed_multiple_integral(
                factor.process, omega, factor.eps, intensity, quad
            )
            val *= base**factor.power
        return val

    return worker


def estimate_moment_lhs(
    spec: MomentSpec,
    intensity: IntensitySpec,
    mc: MCConfig,
    quad: QuadratureSpec = QuadratureSpec(),
) -> Estimate:
    """Monte Carlo of the weighted product of integral powers."""
    samples = run_replicated(
        mc.replicates,
        _lhs_worker(spec, intensity, quad),
        seed=mc.seed,
        label=mc.sub("lhs").label,
        workers=mc.workers,
    )
    return aggregate(samples[:, 0])


def evaluate_moment(
    spec: MomentSpec,
    intensity: IntensitySpec,
    *,
    mc_lhs: MCConfig,
    mc_rhs: MCConfig | None = None,
    quad: QuadratureSpec = QuadratureSpec(),
    gate_spec: GateSpec = GateSpec(),
    rhs_mode: str = "mc-outer",
) -> VerificationReport:
    """Gate the Monte Carlo moment against its partition expansion."""
    mc_rhs = mc_rhs if mc_rhs is not None else mc_lhs
    lhs = estimate_moment_lhs(spec, intensity, mc_lhs, quad)
    terms = expand_moment_terms(spec)
    rhs = estimate_terms(terms, intensity, mc_rhs, quad, rhs_mode)
    details = {
        "factors": [
            {"process": f.process.catalog_id, "power": f.power, "epsilon": list(f.eps)}
            for f in spec.factors
        ],
        "weight": spec.weight.catalog_id if spec.weight else None,
        "rhs": rhs.to_dict(),
    }
    return compare(lhs, rhs.total, gate_spec, details)


# ---------------------------------------------------------------------------
# Explicit second moment of a double integral against the random measure.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplicitGroup:
    label: str
    multiplicity: int
    k: int
    integrand: Callable[[np.ndarray, Configuration], float]


@dataclass(frozen=True)
class GroupedSecondMoment:
    total: Estimate
    groups: tuple[tuple[str, int, int, Estimate], ...]  # (label, mult, k, estimate)

    def to_dict(self) -> dict:
        return {
            "total": self.total.to_dict(),
            "groups": [
                {"group": g, "multiplicity": m, "k": k, **e.to_dict()}
                for (g, m, k, e) in self.groups
            ],
        }


def second_moment_groups(f: ProcessSpec) -> list[ExplicitGroup]:
    """The eleven hand-coded integral groups of the squared double integral.

    Written directly from the displayed expansion; every group integrates
    over distinct points with the configuration augmented by all of them.
    """
    if f.arity != 2:
        raise ValueError("second moment expansion needs a 2-process")

    def pair(y, a, b):
        return np.stack([y[a], y[b]])

    def g01(y, om):
        v = f(pair(y, 0, 0), om)
        return v * v

    def g02(y, om):
        return f(pair(y, 0, 0), om) * f(pair(y, 0, 1), om)

    def g03(y, om):
        return f(pair(y, 0, 0), om) * f(pair(y, 1, 0), om)

    def g04(y, om):
        return f(pair(y, 0, 0), om) * f(pair(y, 1, 1), om)

    def g05(y, om):
        v = f(pair(y, 0, 1), om)
        return v * v

    def g06(y, om):
        return f(pair(y, 0, 1), om) * f(pair(y, 1, 0), om)

    def g07(y, om):
        return f(pair(y, 0, 0), om) * f(pair(y, 1, 2), om)

    def g08(y, om):
        return f(pair(y, 0, 1), om) * f(pair(y, 2, 0), om)

    def g09(y, om):
        return f(pair(y, 0, 1), om) * f(pair(y, 0, 2), om)

    def g10(y, om):
        return f(pair(y, 1, 0), om) * f(pair(y, 2, 0), om)

    def g11(y, om):
        return f(pair(y, 0, 1), om) * f(pair(y, 2, 3), om)

    raw = [
        ("f(x,x)^2", 1, 1, g01),
        ("f(x,x)f(x,y)", 2, 2, g02),
        ("f(x,x)f(y,x)", 2, 2, g03),
        ("f(x,x)f(y,y)", 1, 2, g04),
        ("f(x,y)^2", 1, 2, g05),
        ("f(x,y)f(y,x)", 1, 2, g06),
        ("f(x,x)f(y,z)", 2, 3, g07),
        ("f(x,y)f(z,x)", 2, 3, g08),
        ("f(x,y)f(x,z)", 1, 3, g09),
        ("f(y,x)f(z,x)", 1, 3, g10),
        ("f(x,y)f(z,t)", 1, 4, g11),
    ]

    groups = []
    for label, mult, k, fn in raw:
        def integrand(y, om, fn=fn, k=k):
            return fn(y, om.union(y[:k]))
        groups.append(ExplicitGroup(label, mult, k, integrand))
    return groups


def second_moment_2process_explicit(
    f: ProcessSpec,
    intensity: IntensitySpec,
    mc: MCConfig,
    quad: QuadratureSpec = QuadratureSpec(),
) -> GroupedSecondMoment:
    """Evaluate the eleven groups (times multiplicities) in quadrature-outer mode.

    Shares one configuration per replicate across groups, exactly like the
    generic expansion's quadrature-outer mode, so the two paths agree to
    floating-point noise under shared streams.
    """
    groups = second_moment_groups(f)

    class _GroupTerm:
        def __init__(self, g: ExplicitGroup):
            self.k = g.k
            self.label = g.label
            self.multiplicity = g.multiplicity
            self.integrand = lambda y, om, g=g: g.multiplicity * g.integrand(y, om)

    rhs = estimate_terms([_GroupTerm(g) for g in groups], intensity, mc, quad,
                         mode="quadrature-outer")
    packed = tuple(
        (g.label, g.multiplicity, g.k, te.estimate)
        for g, te in zip(groups, rhs.terms)
    )
    return GroupedSecondMoment(rhs.total, packed)


# ---------------------------------------------------------------------------
# Second moment of the intensity/configuration mixed double integral.
# ---------------------------------------------------------------------------


def mixed_square_terms(f: ProcessSpec) -> list[ExplicitGroup]:
    """Two-term expansion of the squared mixed integral (first slot against
    the intensity, second against the configuration)."""
    if f.arity != 2:
        raise ValueError("mixed second moment needs a 2-process")

    def t1(y, om):
        # distinct (x, y2, z); configuration gains the shared second slot y2
        om_aug = om.union(y[1:2])
        return f(np.stack([y[0], y[1]]), om_aug) * f(np.stack([y[2], y[1]]), om_aug)

    def t2(y, om):
        # distinct (x, y2, z, t); configuration gains both second slots
        om_aug = om.union(y[[1, 3]])
        return f(np.stack([y[0], y[1]]), om_aug) * f(np.stack([y[2], y[3]]), om_aug)

    return [
        ExplicitGroup("f(x,y)f(z,y) | omega+{y}", 1, 3, t1),
        ExplicitGroup("f(x,y)f(z,t) | omega+{y,t}", 1, 4, t2),
    ]


def second_moment_mixed_explicit(
    f: ProcessSpec,
    intensity: IntensitySpec,
    *,
    mc_lhs: MCConfig,
    mc_rhs: MCConfig | None = None,
    quad: QuadratureSpec = QuadratureSpec(),
    gate_spec: GateSpec = GateSpec(),
) -> VerificationReport:
    """Check the squared mixed integral against its two-term expansion.

    Also verifies that coupling the configuration to the outer rather than the
    inner iteration order leaves the estimate unchanged, by evaluating the
    transposed process with the transposed epsilon pattern on an independent
    stream.
    """
    mc_rhs = mc_rhs if mc_rhs is not None else mc_lhs

    def sq_worker_factory(proc: ProcessSpec, eps):
        def worker(i: int, rng: np.random.Generator) -> float:
            omega = sample_configuration(intensity, rng, quad)
            v = mixed_multiple_integral(proc, omega, eps, intensity, quad)
            return v * v
        return worker

    lhs_samples = run_replicated(
        mc_lhs.replicates,
        sq_worker_factory(f, (0, 1)),
        seed=mc_lhs.seed,
        label=mc_lhs.sub("lhs-sq").label,
        workers=mc_lhs.workers,
    )
    lhs = aggregate(lhs_samples[:, 0])

    transposed = ProcessSpec(
        2,
        lambda pts, om: f(pts[::-1], om),
        f.vanishes_on_diagonals,
        f.catalog_id,
    )
    swapped_samples = run_replicated(
        mc_lhs.replicates,
        sq_worker_factory(transposed, (1, 0)),
        seed=mc_lhs.seed,
        label=mc_lhs.sub("lhs-sq-swapped").label,
        workers=mc_lhs.workers,
    )
    swapped = aggregate(swapped_samples[:, 0])

    rhs = estimate_terms(mixed_square_terms(f), intensity, mc_rhs, quad, "mc-outer")
    order_check = compare(lhs, swapped, gate_spec)
    report = compare(lhs, rhs.total, gate_spec)
    report.details.update(
        {
            "rhs": rhs.to_dict(),
            "order_symmetry": order_check.to_dict(),
        }
    )
    return report
