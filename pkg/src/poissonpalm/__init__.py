"""Numerical verification engine for Poisson random measures.

Evaluates mixed multiple integrals over sampled Poisson configurations and
checks the partition-expanded identities for their expectations (mixed
Mecke-Palm formulas, moment formulas for products of integral powers, and
mixed Levy systems of compound Poisson processes) by independent evaluators:
Monte Carlo, partition expansion with quadrature, and an exact exponential
series.
"""

from .configuration import (
    Configuration,
    ProcessSpec,
    as_epsilon,
    mixed_multiple_integral,
    point_integral,
    sample_configuration,
)
from .levy import (
    JumpFunctional,
    LevyBudget,
    LevyMeasureSpec,
    MartingaleReport,
    PathRecord,
    exit_law_check,
    levy_system_general,
    levy_system_simple,
    martingale_checks,
    predictable_factor_check,
    simulate_path,
)
from .mcstats import (
    Estimate,
    GateSpec,
    MCConfig,
    StreamKey,
    VerificationReport,
    aggregate,
    gate,
    make_stream,
    run_replicated,
)
from .moments import (
    MomentFactor,
    MomentSpec,
    evaluate_moment,
    expand_moment_terms,
    second_moment_2process_explicit,
    second_moment_mixed_explicit,
)
from .palm import (
    PalmTerm,
    estimate_lhs,
    estimate_rhs,
    expand_rhs,
    verify_identity,
)
from .partitions import (
    LabeledIndex,
    Partition,
    block_maps,
    enumerate_epsilon_partitions,
    enumerate_labeled_partitions,
    enumerate_partitions,
    partition_type,
)
from .series import SeriesSpec, expectation_series
from .space import (
    IntensitySpec,
    QuadratureSpec,
    Window,
    quadrature_integrate,
    sample_sigma_point,
    sigma_mass,
)

__version__ = "0.1.0"
