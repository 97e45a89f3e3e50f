"""Compound Poisson paths and mixed Levy-system verification.

A finite-activity process is simulated by its jump record: Poisson count on
the horizon, times uniform and sorted, sizes i.i.d. from the normalized jump
measure, plus an optional deterministic drift.  The space-time configuration
of (time, jump) pairs is then a Poisson random measure with control measure
(Lebesgue in time) x (jump measure in space), and all identities are checked
on it.

Sums over jumps and time/jump-measure integrals are assembled from a shared
candidate representation: each integration coordinate either enumerates the
path's jumps or a product rule of per-segment time nodes and jump-measure
nodes.  Time ordering across coordinates is enforced by strict comparison of
the candidates' times; two quadrature candidates sharing the same time node
count with factor one half, which integrates the time simplex exactly for
time-constant integrands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .mcstats import (
    Estimate,
    GateSpec,
    MCConfig,
    VerificationReport,
    aggregate,
    compare,
    run_replicated,
)
from .space import (
    EvaluationCapExceeded,
    IntensitySpec,
    QuadratureSpec,
    box_mass,
    sample_sigma_points,
    sigma_mass,
    sigma_rule,
)

__all__ = [
    "LevyMeasureSpec",
    "PathRecord",
    "JumpFunctional",
    "LevyBudget",
    "simulate_path",
    "levy_system_simple",
    "levy_system_general",
    "predictable_factor_check",
    "martingale_checks",
    "MartingaleReport",
    "exit_law_check",
    "semigroup_rhs_simple",
]

_TENSOR_CAP = 4_000_000  # elements in one broadcast product grid


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Finite jump measure as density x bounded jump window (zero excluded
    by the density's construction)."""

    intensity: IntensitySpec

    @property
    def dim(self) -> int:
        return self.intensity.window.dim

    def mass(self, quad: QuadratureSpec = QuadratureSpec()) -> float:
        return sigma_mass(self.intensity, quad)


@dataclass(frozen=True, eq=False)
class PathRecord:
    """Jump times/sizes plus drift; positions are exact partial sums."""

    times: np.ndarray  # (M,), strictly increasing in (0, horizon]
    jumps: np.ndarray  # (M, d)
    drift: np.ndarray  # (d,)
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        jumps = np.atleast_2d(np.asarray(self.jumps, dtype=np.float64))
        if times.size == 0:
            jumps = jumps.reshape(0, max(1, jumps.shape[1] if jumps.ndim == 2 else 1))
        drift = np.asarray(self.drift, dtype=np.float64).reshape(-1)
        if times.size != jumps.shape[0]:
            raise ValueError("one jump size per jump time required")
        if times.size and (
            times[0] <= 0.0
            or times[-1] > self.horizon
            or np.any(np.diff(times) <= 0.0)
        ):
            raise ValueError("jump times must be strictly increasing in (0, horizon]")
        csum = np.vstack([np.zeros((1, jumps.shape[1])), np.cumsum(jumps, axis=0)])
        for name, arr in (("times", times), ("jumps", jumps), ("drift", drift)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        csum.setflags(write=False)
        object.__setattr__(self, "_csum", csum)

    @property
    def dim(self) -> int:
        return self.jumps.shape[1]

    @property
    def jump_count(self) -> int:
        return self.times.shape[0]

    def position_left(self, t) -> np.ndarray:
        """X_{t-}: drift plus the jumps strictly before t."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="left")
        return self.drift * t[..., None] + self._csum[idx]

    def position_right(self, t) -> np.ndarray:
        """X_t: drift plus the jumps up to and including t."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right")
        return self.drift * t[..., None] + self._csum[idx]

    def pre_jump_positions(self) -> np.ndarray:
        """X_{u_i-} for every recorded jump, shape (M, d)."""
        return self.drift * self.times[:, None] + self._csum[:-1]


@dataclass(frozen=True)
class JumpFunctional:
    """n-fold functional of (time, position, jump) triples.

    The evaluator receives 3n broadcastable arrays (u_1, x_1, w_1, ..., u_n,
    x_n, w_n); space slots carry a trailing axis of length d.  With form
    "pre-post" the third slot of each triple is the post-jump position x + z,
    with "pre-jump" it is the jump size z itself.  Scalar returns are fine;
    the engine broadcasts them.
    """

    n: int
    evaluator: Callable
    form: str = "pre-post"
    catalog_id: str | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.form not in ("pre-post", "pre-jump"):
            raise ValueError(f"unknown form {self.form!r}")

    def triple(self, u, x, z):
        return (u, x, x + z) if self.form == "pre-post" else (u, x, z)

    def squared(self) -> "JumpFunctional":
        ev = self.evaluator
        return JumpFunctional(
            self.n,
            lambda *args: np.square(np.asarray(ev(*args), dtype=np.float64)),
            self.form,
            None if self.catalog_id is None else self.catalog_id + "^2",
        )

    def scaled_by_time(self, g: Callable) -> "JumpFunctional":
        """Multiply by a deterministic time factor g(u of the first triple)."""
        ev = self.evaluator
        return JumpFunctional(
            self.n,
            lambda *args: np.asarray(g(args[0]), dtype=np.float64)
            * np.asarray(ev(*args), dtype=np.float64),
            self.form,
        )


@dataclass(frozen=True)
class LevyBudget:
    """Path count, streams and per-path integration resolution."""

    paths: int
    seed: int
    label: str = "levy"
    workers: int = 1
    u_nodes_per_segment: int = 4
    quad: QuadratureSpec = QuadratureSpec()

    def mc(self) -> MCConfig:
        return MCConfig(self.paths, self.seed, self.label, self.workers)


def simulate_path(
    levy: LevyMeasureSpec,
    drift,
    horizon: float,
    rng: np.random.Generator,
    quad: QuadratureSpec = QuadratureSpec(),
) -> PathRecord:
    """Count ~ Poisson(mass * horizon), times uniform sorted, sizes ~ density/mass."""
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise ValueError("horizon must be positive and finite")
    mass = levy.mass(quad)
    if mass <= 0.0:
        raise ValueError("jump measure must have positive mass")
    drift = np.broadcast_to(
        np.asarray(drift, dtype=np.float64).reshape(-1), (levy.dim,)
    ).copy()
    m = int(rng.poisson(mass * horizon))
    while True:
        times = np.sort((1.0 - rng.random(m)) * horizon)  # values in (0, horizon]
        if m < 2 or np.all(np.diff(times) > 0.0):
            break
    sizes = (
        sample_sigma_points(levy.intensity, m, rng, quad)
        if m
        else np.empty((0, levy.dim))
    )
    return PathRecord(times, sizes, drift, horizon)


# ---------------------------------------------------------------------------
# Candidate representation of one integration coordinate.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Coordinate:
    u: np.ndarray        # (c,)
    x: np.ndarray        # (c, d): X_{u-} along the real path
    z: np.ndarray        # (c, d)
    w: np.ndarray        # (c,)
    is_node: np.ndarray  # (c,) bool: quadrature candidate vs path jump


def _jump_candidates(path: PathRecord, t_max: float) -> _Coordinate:
    m = int(np.searchsorted(path.times, t_max, side="right"))
    u = path.times[:m]
    return _Coordinate(
        u,
        path.pre_jump_positions()[:m],
        path.jumps[:m],
        np.ones(m),
        np.zeros(m, dtype=bool),
    )


def _quad_candidates(
    path: PathRecord,
    t_max: float,
    z_pts: np.ndarray,
    z_w: np.ndarray,
    u_nodes: int,
) -> _Coordinate:
    inner = path.times[(path.times > 0.0) & (path.times < t_max)]
    bounds = np.concatenate([[0.0], inner, [t_max]])
    lo, hi = bounds[:-1], bounds[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    widths = (hi - lo) / u_nodes
    offs = (np.arange(u_nodes) + 0.5) / u_nodes
    u = (lo[:, None] + offs[None, :] * (hi - lo)[:, None]).reshape(-1)
    du = np.repeat(widths, u_nodes)
    x = path.position_left(u)  # nodes are strictly inside segments
    mz = z_pts.shape[0]
    c = u.shape[0] * mz
    return _Coordinate(
        np.repeat(u, mz),
        np.repeat(x, mz, axis=0),
        np.tile(z_pts, (u.shape[0], 1)),
        np.repeat(du, mz) * np.tile(z_w, u.shape[0]),
        np.ones(c, dtype=bool),
    )


def _mixed_value(
    F: JumpFunctional,
    coords: Sequence[_Coordinate],
    shift_eps: tuple[int, ...] | None,
    dim: int,
) -> float:
    """Weighted, time-ordered sum of F over the product of coordinate candidates.

    shift_eps, when given, adds each coordinate's jump size to the position
    slots of all later coordinates whose epsilon is 1 (the accumulation rule
    of the expanded right-hand side).
    """
    n = len(coords)
    sizes = [c.u.shape[0] for c in coords]
    if any(s == 0 for s in sizes):
        return 0.0
    total = 1
    for s in sizes:
        total *= s
    if total > _TENSOR_CAP:
        raise EvaluationCapExceeded(
            f"product grid of {total} candidates exceeds cap {_TENSOR_CAP}"
        )

    def shaped(arr: np.ndarray, j: int, vector: bool) -> np.ndarray:
        shape = [1] * n + ([dim] if vector else [])
        shape[j] = sizes[j]
        return arr.reshape(shape)

    weight = shaped(coords[0].w, 0, False)
    for j in range(1, n):
        weight = weight * shaped(coords[j].w, j, False)
    for j in range(n - 1):
        a, b = coords[j], coords[j + 1]
        less = (a.u[:, None] < b.u[None, :]).astype(np.float64)
        tie = (a.u[:, None] == b.u[None, :]) & a.is_node[:, None] & b.is_node[None, :]
        mat = less + 0.5 * tie
        shape = [1] * n
        shape[j], shape[j + 1] = sizes[j], sizes[j + 1]
        weight = weight * mat.reshape(shape)

    args = []
    shift = None
    for j in range(n):
        u = shaped(coords[j].u, j, False)
        x = shaped(coords[j].x, j, True)
        z = shaped(coords[j].z, j, True)
        if shift is not None:
            x = x + shift
        args.extend(F.triple(u, x, z))
        if shift_eps is not None and shift_eps[j] == 1:
            shift = z if shift is None else shift + z
    vals = np.asarray(F.evaluator(*args), dtype=np.float64)
    vals = np.broadcast_to(vals, tuple(sizes))
    return float(np.sum(weight * vals))


def _lhs_coords(
    path: PathRecord, eps, t_max: float, z_rule, u_nodes: int
) -> list[_Coordinate]:
    z_pts, z_w = z_rule
    out = []
    for e in eps:
        if e == 1:
            out.append(_jump_candidates(path, t_max))
        else:
            out.append(_quad_candidates(path, t_max, z_pts, z_w, u_nodes))
    return out


def _rhs_coords(
    path: PathRecord, n: int, t_max: float, z_rule, u_nodes: int
) -> list[_Coordinate]:
    z_pts, z_w = z_rule
    shared = _quad_candidates(path, t_max, z_pts, z_w, u_nodes)
    return [shared] * n


def mixed_levy_lhs(
    F: JumpFunctional, path: PathRecord, eps, t_max: float, z_rule, u_nodes: int
) -> float:
    """Pathwise mixed sum/integral over the time-ordered simplex."""
    coords = _lhs_coords(path, eps, t_max, z_rule, u_nodes)
    return _mixed_value(F, coords, None, path.dim)


def mixed_levy_rhs(
    F: JumpFunctional, path: PathRecord, eps, t_max: float, z_rule, u_nodes: int
) -> float:
    """Pathwise expanded side: all coordinates integrate du nu(dz), with
    epsilon-1 jump sizes accumulated into later position slots."""
    coords = _rhs_coords(path, len(eps), t_max, z_rule, u_nodes)
    return _mixed_value(F, coords, tuple(eps), path.dim)


def _paths_estimate(
    levy: LevyMeasureSpec,
    drift,
    horizon: float,
    budget: LevyBudget,
    label: str,
    per_path: Callable[[PathRecord], float],
) -> Estimate:
    def worker(i: int, rng: np.random.Generator) -> float:
        path = simulate_path(levy, drift, horizon, rng, budget.quad)
        return per_path(path)

    samples = run_replicated(
        budget.paths, worker, seed=budget.seed, label=label, workers=budget.workers
    )
    return aggregate(samples[:, 0])


def levy_system_general(
    F: JumpFunctional,
    eps,
    levy: LevyMeasureSpec,
    drift,
    horizon: float,
    budget: LevyBudget,
    gate_spec: GateSpec = GateSpec(),
) -> VerificationReport:
    """Gate the pathwise mixed sum/integral against its expanded form."""
    from .configuration import as_epsilon

    eps = as_epsilon(eps)
    n = len(eps)
    if F.n != n:
        raise ValueError("functional arity must match epsilon length")
    if n > 3:
        raise ValueError("mixed systems supported for n <= 3")
    z_rule = sigma_rule(levy.intensity, budget.quad)
    u_nodes = budget.u_nodes_per_segment

    lhs = _paths_estimate(
        levy, drift, horizon, budget, f"{budget.label}/lhs",
        lambda path: mixed_levy_lhs(F, path, eps, horizon, z_rule, u_nodes),
    )
    rhs = _paths_estimate(
        levy, drift, horizon, budget, f"{budget.label}/rhs",
        lambda path: mixed_levy_rhs(F, path, eps, horizon, z_rule, u_nodes),
    )
    details = {"epsilon": list(eps), "n": n, "functional": F.catalog_id}
    return compare(lhs, rhs, gate_spec, details)


def levy_system_simple(
    F: JumpFunctional,
    levy: LevyMeasureSpec,
    drift,
    horizon: float,
    budget: LevyBudget,
    gate_spec: GateSpec = GateSpec(),
) -> VerificationReport:
    """Single system: expected jump sum vs expected du nu(dz) integral."""
    if F.n != 1:
        raise ValueError("simple system needs a 1-fold functional")
    return levy_system_general(F, (1,), levy, drift, horizon, budget, gate_spec)


def predictable_factor_check(
    g: Callable,
    F: JumpFunctional,
    levy: LevyMeasureSpec,
    drift,
    horizon: float,
    budget: LevyBudget,
    gate_spec: GateSpec = GateSpec(),
) -> VerificationReport:
    """Simple system with a deterministic, left-continuous time factor."""
    return levy_system_simple(
        F.scaled_by_time(g), levy, drift, horizon, budget, gate_spec
    )


# ---------------------------------------------------------------------------
# Compensated martingale checks.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleCheck:
    name: str
    estimate: Estimate
    z_score: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            **self.estimate.to_dict(),
            "z_score": self.z_score if math.isfinite(self.z_score) else None,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class MartingaleReport:
    mean_m: Estimate
    second_moment: Estimate
    bracket: Estimate
    angle_bracket: Estimate
    checks: tuple[MartingaleCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "mean_m": self.mean_m.to_dict(),
            "second_moment": self.second_moment.to_dict(),
            "bracket": self.bracket.to_dict(),
            "angle_bracket": self.angle_bracket.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
        }


def _zero_check(name: str, samples, z_max: float) -> MartingaleCheck:
    est = aggregate(samples)
    z = abs(est.mean) / est.std_error if est.std_error > 0 else (
        0.0 if est.mean == 0.0 else math.inf
    )
    return MartingaleCheck(name, est, z, z <= z_max)


def martingale_checks(
    F: JumpFunctional,
    levy: LevyMeasureSpec,
    drift,
    t: float,
    budget: LevyBudget,
    gate_spec: GateSpec = GateSpec(),
) -> MartingaleReport:
    """Checks on M = (sum of F over jumps) - (du nu(dz) compensator) at time t.

    Verifies zero mean, the second-moment identity against the compensator of
    F^2, square bracket vs predictable bracket, and increment orthogonality
    against a fixed family of path-prefix functionals at s = t/2.  Finiteness
    of every pathwise integral is enforced during aggregation.
    """
    if F.n != 1:
        raise ValueError("martingale checks use a 1-fold functional")
    z_rule = sigma_rule(levy.intensity, budget.quad)
    u_nodes = budget.u_nodes_per_segment
    s = 0.5 * t
    eps1 = (1,)
    F2 = F.squared()

    def per_path(path: PathRecord):
        sum_t = mixed_levy_lhs(F, path, eps1, t, z_rule, u_nodes)
        comp_t = mixed_levy_rhs(F, path, eps1, t, z_rule, u_nodes)
        sum2_t = mixed_levy_lhs(F2, path, eps1, t, z_rule, u_nodes)
        comp2_t = mixed_levy_rhs(F2, path, eps1, t, z_rule, u_nodes)
        sum_s = mixed_levy_lhs(F, path, eps1, s, z_rule, u_nodes)
        comp_s = mixed_levy_rhs(F, path, eps1, s, z_rule, u_nodes)
        m_t = sum_t - comp_t
        m_s = sum_s - comp_s
        incr = m_t - m_s
        count_s = float(np.searchsorted(path.times, s, side="right"))
        return [
            m_t,
            m_t * m_t,
            sum2_t,   # [M]_t
            comp2_t,  # <M>_t
            incr,
            incr * m_s,
            incr * min(count_s, 3.0),
            incr * math.exp(-count_s),
        ]

    def worker(i: int, rng: np.random.Generator):
        return per_path(simulate_path(levy, drift, t, rng, budget.quad))

    samples = run_replicated(
        budget.paths, worker, seed=budget.seed,
        label=f"{budget.label}/martingale", workers=budget.workers, width=8,
    )
    mean_m = aggregate(samples[:, 0])
    msq = aggregate(samples[:, 1])
    bracket = aggregate(samples[:, 2])
    angle = aggregate(samples[:, 3])
    z_max = gate_spec.z_max
    checks = (
        _zero_check("mean[M_t] = 0", samples[:, 0], z_max),
        _zero_check("mean[M_t^2 - <M>_t] = 0", samples[:, 1] - samples[:, 3], z_max),
        _zero_check("mean[[M]_t - <M>_t] = 0", samples[:, 2] - samples[:, 3], z_max),
        _zero_check("increment vs 1", samples[:, 4], z_max),
        _zero_check("increment vs M_s", samples[:, 5], z_max),
        _zero_check("increment vs capped count", samples[:, 6], z_max),
        _zero_check("increment vs exp(-count)", samples[:, 7], z_max),
    )
    return MartingaleReport(mean_m, msq, bracket, angle, checks)


# ---------------------------------------------------------------------------
# Exit law: joint distribution of (exit time, pre-exit, post-exit position).
# ---------------------------------------------------------------------------


def _inside(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    return bool(np.all(x > lo) and np.all(x < hi))


def _drift_exit_time(x: np.ndarray, drift: np.ndarray, lo, hi, span: float) -> float | None:
    """First time in (0, span] at which x + s*drift leaves the open box."""
    best = None
    for a in range(x.shape[0]):
        b = drift[a]
        if b > 0.0:
            s = (hi[a] - x[a]) / b
        elif b < 0.0:
            s = (lo[a] - x[a]) / b
        else:
            continue
        if 0.0 < s <= span and (best is None or s < best):
            best = s
    return best


def first_exit(
    path: PathRecord, start: np.ndarray, lo, hi, t_max: float
):
    """(tau, x_pre, x_post) of the first exit from the open box, or None.

    Continuous (drift) exits report the boundary point as both positions;
    jump exits report the pre-jump and post-jump positions.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    t_prev = 0.0
    x_prev = np.asarray(start, dtype=np.float64).copy()
    if not _inside(x_prev, lo, hi):
        raise ValueError("start point must lie inside the open domain")
    m = int(np.searchsorted(path.times, t_max, side="right"))
    for i in range(m + 1):
        seg_end = path.times[i] if i < m else t_max
        span = seg_end - t_prev
        if span > 0.0 and np.any(path.drift != 0.0):
            s = _drift_exit_time(x_prev, path.drift, lo, hi, span)
            if s is not None:
                xb = x_prev + s * path.drift
                return t_prev + s, xb, xb
        if i == m:
            return None
        x_pre = x_prev + span * path.drift
        x_post = x_pre + path.jumps[i]
        if not _inside(x_post, lo, hi):
            return float(path.times[i]), x_pre, x_post
        t_prev, x_prev = float(path.times[i]), x_post
    return None


def _box_distance(a_lo, a_hi, b_lo, b_hi) -> float:
    gaps = np.maximum(0.0, np.maximum(b_lo - a_hi, a_lo - b_hi))
    return float(np.linalg.norm(gaps))


@dataclass(frozen=True)
class ExitLawGrid:
    time_bins: int = 48
    space_bins: int = 40


def exit_law_check(
    levy: LevyMeasureSpec,
    drift,
    domain_lo,
    domain_hi,
    start,
    interval: tuple[float, float],
    a_lo,
    a_hi,
    b_lo,
    b_hi,
    budget: LevyBudget,
    gate_spec: GateSpec = GateSpec(),
    grid: ExitLawGrid = ExitLawGrid(),
) -> VerificationReport:
    """Exit-by-jump law vs killed-occupation estimate of its integral form.

    LHS: frequency of {exit time in the interval, pre-exit position in A,
    post-exit position in B}.  RHS: expected killed occupation, binned on a
    space grid over the domain, weighted per bin by the jump-measure mass of
    (B - bin center); the same quantity evaluated at exact segment positions
    is reported alongside, and their difference is the grid-bias annotation.
    """
    d = levy.dim
    drift = np.broadcast_to(np.asarray(drift, dtype=np.float64).reshape(-1), (d,)).copy()
    domain_lo = np.broadcast_to(np.asarray(domain_lo, dtype=np.float64), (d,)).copy()
    domain_hi = np.broadcast_to(np.asarray(domain_hi, dtype=np.float64), (d,)).copy()
    start = np.broadcast_to(np.asarray(start, dtype=np.float64), (d,)).copy()
    a_lo = np.broadcast_to(np.asarray(a_lo, dtype=np.float64), (d,)).copy()
    a_hi = np.broadcast_to(np.asarray(a_hi, dtype=np.float64), (d,)).copy()
    b_lo = np.broadcast_to(np.asarray(b_lo, dtype=np.float64), (d,)).copy()
    b_hi = np.broadcast_to(np.asarray(b_hi, dtype=np.float64), (d,)).copy()
    t0, t1 = interval
    if not (0.0 <= t0 < t1 and math.isfinite(t1)):
        raise ValueError("interval must satisfy 0 <= t0 < t1 < infinity")
    if np.any(a_lo >= a_hi) or np.any(b_lo >= b_hi):
        raise ValueError("A and B must be nonempty boxes")
    if _box_distance(a_lo, a_hi, b_lo, b_hi) <= 0.0:
        raise ValueError("A and B must be at positive distance")
    if not _inside(start, domain_lo, domain_hi):
        raise ValueError("start point must lie inside the domain")

    # Per-bin weights: jump mass of (B - center) for centers inside A.
    nb = grid.space_bins
    widths = (domain_hi - domain_lo) / nb
    if d != 1:
        raise NotImplementedError("exit-law grid estimator implemented for d=1")
    centers = (domain_lo[0] + (np.arange(nb) + 0.5) * widths[0]).reshape(-1, 1)

    def weight_at(points: np.ndarray) -> np.ndarray:
        out = np.empty(points.shape[0])
        for i, y in enumerate(points):
            if np.all(y >= a_lo) and np.all(y <= a_hi):
                out[i] = box_mass(levy.intensity, b_lo - y, b_hi - y, budget.quad)
            else:
                out[i] = 0.0
        return out

    bin_weights = weight_at(centers)

    def lhs_path(path: PathRecord) -> float:
        hit = first_exit(path, start, domain_lo, domain_hi, t1)
        if hit is None:
            return 0.0
        tau, x_pre, x_post = hit
        ok = (
            t0 < tau <= t1
            and np.all(x_pre >= a_lo)
            and np.all(x_pre <= a_hi)
            and np.all(x_post >= b_lo)
            and np.all(x_post <= b_hi)
        )
        return 1.0 if ok else 0.0

    def rhs_path(path: PathRecord):
        hit = first_exit(path, start, domain_lo, domain_hi, t1)
        tau = t1 if hit is None else min(hit[0], t1)
        # segments of the killed path clipped to (t0, tau]
        t_prev = 0.0
        x = start.copy()
        grid_val = 0.0
        exact_val = 0.0
        m = int(np.searchsorted(path.times, tau, side="right"))
        for i in range(m + 1):
            seg_end = path.times[i] if i < m else tau
            a = max(t_prev, t0)
            b = min(seg_end, tau)
            if b > a:
                if np.any(drift != 0.0):
                    nsub = budget.u_nodes_per_segment
                    for q in range(nsub):
                        um = a + (q + 0.5) * (b - a) / nsub
                        pos = x + (um - t_prev) * drift
                        dur = (b - a) / nsub
                        j = int((pos[0] - domain_lo[0]) // widths[0])
                        if 0 <= j < nb:
                            grid_val += dur * bin_weights[j]
                        exact_val += dur * weight_at(pos.reshape(1, -1))[0]
                else:
                    dur = b - a
                    j = int((x[0] - domain_lo[0]) // widths[0])
                    if 0 <= j < nb:
                        grid_val += dur * bin_weights[j]
                    exact_val += dur * weight_at(x.reshape(1, -1))[0]
            if i == m:
                break
            x = x + (seg_end - t_prev) * drift + path.jumps[i]
            t_prev = seg_end
            if seg_end >= tau:
                break
        return [grid_val, exact_val]

    def lhs_worker(i: int, rng: np.random.Generator) -> float:
        return lhs_path(simulate_path(levy, drift, t1, rng, budget.quad))

    def rhs_worker(i: int, rng: np.random.Generator):
        return rhs_path(simulate_path(levy, drift, t1, rng, budget.quad))

    lhs_samples = run_replicated(
        budget.paths, lhs_worker, seed=budget.seed,
        label=f"{budget.label}/exit-lhs", workers=budget.workers,
    )
    rhs_samples = run_replicated(
        budget.paths, rhs_worker, seed=budget.seed,
        label=f"{budget.label}/exit-rhs", workers=budget.workers, width=2,
    )
    lhs = aggregate(lhs_samples[:, 0])
    rhs_grid = aggregate(rhs_samples[:, 0])
    rhs_exact = aggregate(rhs_samples[:, 1])
    report = compare(lhs, rhs_grid, gate_spec)
    report.details.update(
        {
            "rhs_exact": rhs_exact.to_dict(),
            "grid_bias": abs(rhs_grid.mean - rhs_exact.mean),
            "grid": {"time_bins": grid.time_bins, "space_bins": grid.space_bins},
            "bin_weights": bin_weights.tolist(),
        }
    )
    return report


# ---------------------------------------------------------------------------
# Convolution-series semigroup evaluator (third evaluator, d=1, single level).
# ---------------------------------------------------------------------------


def semigroup_rhs_simple(
    F: JumpFunctional,
    levy: LevyMeasureSpec,
    drift,
    horizon: float,
    *,
    grid_points: int = 2049,
    t_nodes: int = 64,
    n_max: int | None = None,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Deterministic evaluation of the expected du nu(dz) integral via the
    exponential convolution series of the transition kernel (d = 1 only).

    The kernel at each time is an atom at the drift position plus a series of
    convolution powers of the jump density, truncated at n_max and sampled on
    a uniform grid wide enough for the truncated support.
    """
    if levy.dim != 1:
        raise NotImplementedError("semigroup evaluator implemented for d=1")
    if F.n != 1:
        raise ValueError("semigroup evaluator handles 1-fold functionals")
    b = float(np.asarray(drift, dtype=np.float64).reshape(-1)[0])
    mass = levy.mass(quad)
    lam = mass * horizon
    if n_max is None:
        n_max = max(4, math.ceil(lam + 8.0 * math.sqrt(lam) + 8.0))
    window = levy.intensity.window
    zmax = max(abs(window.lower[0]), abs(window.upper[0]))
    half = n_max * zmax + abs(b) * horizon + 1.0
    if grid_points % 2 == 0:
        grid_points += 1
    xs = np.linspace(-half, half, grid_points)
    dx = xs[1] - xs[0]
    # Cell-average sampling keeps the grid representation's mass exact even
    # when density discontinuities fall inside cells.
    dens = np.zeros(grid_points)
    in_reach = (xs >= window.lower[0] - dx) & (xs <= window.upper[0] + dx)
    for i in np.flatnonzero(in_reach):
        dens[i] = box_mass(
            levy.intensity, [xs[i] - 0.5 * dx], [xs[i] + 0.5 * dx], quad
        ) / dx

    z_pts, z_w = sigma_rule(levy.intensity, quad)

    def g_of(u: float, positions: np.ndarray) -> np.ndarray:
        # integral of F(u, x, .) against the jump measure, vectorized in x
        u_arr = np.full((positions.shape[0], 1), u)
        x_arr = positions.reshape(-1, 1, 1)
        z_arr = z_pts.reshape(1, -1, 1)
        vals = np.asarray(
            F.evaluator(*F.triple(u_arr, x_arr, z_arr)), dtype=np.float64
        )
        vals = np.broadcast_to(vals, (positions.shape[0], z_pts.shape[0]))
        return vals @ z_w

    # convolution powers of the jump density, resampled on the grid
    powers = []
    cur = dens.copy()
    powers.append(cur)
    mid = grid_points // 2
    for _ in range(1, n_max):
        nxt = np.convolve(cur, dens, mode="full")[mid : mid + grid_points] * dx
        powers.append(nxt)
        cur = nxt

    total_terms = []
    for it in range(t_nodes):
        u = (it + 0.5) * horizon / t_nodes
        du = horizon / t_nodes
        shift = b * u
        atom = math.exp(-mass * u) * g_of(u, np.array([shift]))[0]
        dens_total = np.zeros(grid_points)
        fac = 1.0
        for k in range(1, n_max + 1):
            fac *= u / k
            dens_total += fac * powers[k - 1]
        gvals = g_of(u, xs + shift)
        ac_part = math.exp(-mass * u) * float(np.dot(dens_total, gvals)) * dx
        total_terms.append(du * (atom + ac_part))
    return math.fsum(total_terms)
