"""
Difference operators on instruction stacks and Monte Carlo estimators of the
normal-approximation bounds.

h = f o gamma is never materialised: a Functional f is evaluated on
reconstruct(R). Single-entry changes R^i go through perturbed_trajectory, which
only re-walks the steps between the change and the re-meeting of the chains.
"""
import itertools
import logging
import math
from typing import Iterator, Optional, Tuple

import numpy as np

from src.config import config
from src.core.hmm import (
    perturb,
    perturbed_trajectory,
    reconstruct,
    sample_emissions,
    sample_instructions,
    sample_trajectory,
)
from src.core.stats import variance_error
from src.errors import IndexInA, InsufficientSamples, ZeroVariance
from src.models import (
    DeltaMoments,
    Estimate,
    Functional,
    HmmSpec,
    InstructionStack,
    PerturbationSet,
    SteinComponents,
    SteinEstimate,
    Trajectory,
)

logger = logging.getLogger(__name__)

SQRT_2PI_OVER_16 = math.sqrt(2.0 * math.pi) / 16.0


def evaluate_stack(h: Functional, stack: InstructionStack) -> float:
    """h(R) = f(gamma(R))."""
    return h(reconstruct(stack))


# ---------------------------------------------------------------------------
#  Difference operators
# ---------------------------------------------------------------------------

def delta(h: Functional, stack: InstructionStack, i: int, fresh: InstructionStack,
          base: Optional[Trajectory] = None) -> float:
    """Delta_i h(R) = h(R) - h(R^i)."""
    if base is None:
        base = reconstruct(stack)
    other = perturbed_trajectory(stack, base, i, fresh)
    if other is base:
        return 0.0
    return h(base) - h(other)


def delta_A(h: Functional, stack: InstructionStack, A: PerturbationSet, i: int,
            fresh: InstructionStack) -> float:
    """Delta_i h^A = h(R^A) - h(R^(A u {i})), for i not in A."""
    if i in A:
        raise IndexInA(f"Index {i} already belongs to the perturbation set")
    return delta(h, perturb(stack, A, fresh), i, fresh)


# ---------------------------------------------------------------------------
#  T_m / T'_m
# ---------------------------------------------------------------------------

def subset_weight(m: int, a: int) -> float:
    """k_{m,A} = 1 / (C(m, |A|) (m - |A|)) for a subset of size a < m."""
    return 1.0 / (math.comb(m, a) * (m - a))


def sampling_atoms(m: int) -> Iterator[Tuple[PerturbationSet, int, float]]:
    """
    Every (A, j) pair reachable by sample_T_term with its probability.

    The size a is uniform on 0..m-1, A uniform among the subsets of that size
    and j uniform outside A, so P(A, j) = k_{m,A} / m.
    """
    for a in range(m):
        p_subset = 1.0 / (m * math.comb(m, a))
        for subset in itertools.combinations(range(m), a):
            rest = [j for j in range(m) if j not in subset]
            for j in rest:
                yield PerturbationSet(subset), j, p_subset / len(rest)


def t_term(h: Functional, stack: InstructionStack, fresh: InstructionStack,
           A: PerturbationSet, j: int, absolute: bool = False,
           base: Optional[Trajectory] = None, base_value: Optional[float] = None) -> float:
    """m * Delta_j h(R) * a(Delta_j h(R^A)), with a = |.| when ``absolute``."""
    if j in A:
        raise IndexInA(f"Index {j} already belongs to the perturbation set")
    m = len(stack)
    if base is None:
        base = reconstruct(stack)
    if base_value is None:
        base_value = h(base)

    moved = perturbed_trajectory(stack, base, j, fresh)
    d_plain = 0.0 if moved is base else base_value - h(moved)
    if d_plain == 0.0:
        return 0.0

    if len(A):
        stack_a = perturb(stack, A, fresh)
        d_pert = delta(h, stack_a, j, fresh)
    else:
        d_pert = d_plain
    if absolute:
        d_pert = abs(d_pert)
    return m * d_plain * d_pert


def sample_T_term(h: Functional, stack: InstructionStack, fresh: InstructionStack,
                  rng: np.random.Generator, absolute: bool = False,
                  base: Optional[Trajectory] = None, base_value: Optional[float] = None) -> float:
    """One unbiased draw of T_m(h) (T'_m(h) when ``absolute``) given (R, R')."""
    m = len(stack)
    a = int(rng.integers(m))
    order = rng.permutation(m)
    A = PerturbationSet.of(order[:a].tolist())
    j = int(order[a])
    return t_term(h, stack, fresh, A, j, absolute, base, base_value)


def exact_T(h: Functional, stack: InstructionStack, fresh: InstructionStack, absolute: bool = False) -> float:
    """Brute-force sum over A of k_{m,A} sum_{j not in A} Delta_j h(R) a(Delta_j h(R^A)). Small m only."""
    m = len(stack)
    total = 0.0
    for a in range(m):
        weight = subset_weight(m, a)
        for subset in itertools.combinations(range(m), a):
            A = PerturbationSet(subset)
            stack_a = perturb(stack, A, fresh)
            for j in range(m):
                if j in A:
                    continue
                d_pert = delta(h, stack_a, j, fresh)
                if absolute:
                    d_pert = abs(d_pert)
                total += weight * delta(h, stack, j, fresh) * d_pert
    return total


def _require(count: int, label: str, minimum: int = 2) -> None:
    if count < minimum:
        raise InsufficientSamples(f"{label} must be >= {minimum}, got {count}")


def _bootstrap_se(statistic, columns, rng: np.random.Generator, resamples: Optional[int] = None) -> float:
    resamples = config.bootstrap_resamples if resamples is None else resamples
    count = len(columns[0])
    draws = np.empty(resamples)
    for b in range(resamples):
        idx = rng.integers(count, size=count)
        draws[b] = statistic(*(c[idx] for c in columns))
    return float(draws.std(ddof=1))


def _cross_variance(first: np.ndarray, second: np.ndarray) -> float:
    """Unbiased Var(g(R)) from two independent unbiased estimates of g per replicate."""
    count = len(first)
    prod = first * second
    cross = (first.sum() * second.sum() - prod.sum()) / (count * (count - 1))
    return float(prod.mean() - cross)


def estimate_var_conditional(spec: HmmSpec, h: Functional, n: int, outer: int, inner: int,
                             rng: np.random.Generator, absolute: bool = False,
                             mark_dim: int = 0) -> Estimate:
    """
    Nested Monte Carlo estimate of Var(E[T_m(h) | R]) (T'_m when ``absolute``).

    For every outer stack R two independent inner averages of sample_T_term are
    formed; their product is unbiased for E[T|R]^2, and the cross products over
    distinct outer replicates are unbiased for (E T)^2.
    """
    _require(outer, 'outer')
    _require(inner, 'inner')
    first = np.empty(outer)
    second = np.empty(outer)
    for o in range(outer):
        stack = sample_instructions(spec, n, rng, mark_dim)
        base = reconstruct(stack)
        base_value = h(base)
        terms = np.empty(2 * inner)
        for k in range(2 * inner):
            fresh = sample_instructions(spec, n, rng, mark_dim)
            terms[k] = sample_T_term(h, stack, fresh, rng, absolute, base, base_value)
        first[o] = terms[:inner].mean()
        second[o] = terms[inner:].mean()
    value = _cross_variance(first, second)
    se = _bootstrap_se(_cross_variance, (first, second), rng)
    logger.debug(f"Var(E[T{'prime' if absolute else ''}|R]) = {value:.6g} +/- {se:.3g}")
    return Estimate(value, se)


# ---------------------------------------------------------------------------
#  Moments of Delta_i h
# ---------------------------------------------------------------------------

def sample_deltas(spec: HmmSpec, h: Functional, n: int, samples: int, rng: np.random.Generator,
                  mark_dim: int = 0) -> np.ndarray:
    """Matrix (samples, m) of Delta_i h(R) draws, a fresh (R, R') pair per row."""
    _require(samples, 'samples')
    m = spec.instruction_count(n)
    out = np.zeros((samples, m))
    for row in range(samples):
        stack = sample_instructions(spec, n, rng, mark_dim)
        fresh = sample_instructions(spec, n, rng, mark_dim)
        base = reconstruct(stack)
        base_value = h(base)
        # only entries read by gamma can move h
        for i in np.unique(base.consulted).tolist():
            other = perturbed_trajectory(stack, base, i, fresh)
            if other is not base:
                out[row, i] = base_value - h(other)
    return out


def delta_moments_from_samples(deltas: np.ndarray, r: float) -> DeltaMoments:
    powered = np.abs(deltas) ** r
    count = powered.shape[0]
    return DeltaMoments(
        order=float(r),
        estimates=powered.mean(axis=0),
        standard_errors=powered.std(axis=0, ddof=1) / math.sqrt(count),
    )


def estimate_delta_moments(spec: HmmSpec, h: Functional, n: int, r: float, samples: int,
                           rng: np.random.Generator, mark_dim: int = 0) -> DeltaMoments:
    """Per-index Monte Carlo estimates of E|Delta_i h(R)|^r with standard errors."""
    return delta_moments_from_samples(sample_deltas(spec, h, n, samples, rng, mark_dim), r)


def efron_stein_sum(spec: HmmSpec, h: Functional, n: int, samples: int, rng: np.random.Generator,
                    mark_dim: int = 0) -> Estimate:
    """1/2 sum_i E[(Delta_i h)^2], the Efron-Stein upper bound on Var h(R)."""
    deltas = sample_deltas(spec, h, n, samples, rng, mark_dim)
    per_row = 0.5 * (deltas ** 2).sum(axis=1)
    return Estimate(float(per_row.mean()), float(per_row.std(ddof=1) / math.sqrt(samples)))


def efron_stein_moment_bound(deltas: np.ndarray, r: float) -> float:
    """
    Right-hand side (raised to the r-th power) of the generalized Efron-Stein
    inequality for E|h - E h|^r.
    """
    if r >= 2:
        per_index = np.mean(np.abs(deltas) ** r, axis=0)
        inner = float(np.sum(per_index ** (2.0 / r)))
        return ((r - 1.0) / 2.0 ** (1.0 / r)) ** r * inner ** (r / 2.0)
    second = float(np.sum(np.mean(deltas ** 2, axis=0)))
    return (1.0 / math.sqrt(2.0)) ** r * second ** (r / 2.0)


def estimate_moment_bound(deltas: np.ndarray, r: float, rng: np.random.Generator) -> Estimate:
    """efron_stein_moment_bound with a bootstrap standard error over the rows of ``deltas``."""
    value = efron_stein_moment_bound(deltas, r)
    se = _bootstrap_se(lambda rows: efron_stein_moment_bound(rows, r), (deltas,), rng)
    return Estimate(value, se)


# ---------------------------------------------------------------------------
#  Bound assembly
# ---------------------------------------------------------------------------

def _sqrt_error(value: float, se: float) -> float:
    """Width of [value - se, value + se] after the square root (clipped at 0)."""
    if not se > 0:
        return 0.0
    value = max(value, 0.0)
    return math.sqrt(value + se) - math.sqrt(max(value - se, 0.0))


def assemble_bounds(components: SteinComponents, m: int, name: str = '', n: int = 0) -> SteinEstimate:
    """
    wass = sqrt(var_T)/s2 + sum_abs3/(2 s^3)
    kol  = sqrt(var_T)/s2 + sqrt(var_T')/s2 + sum_sqrt6/(4 s^3) + sqrt(2 pi)/16 sum_abs3/s^3

    :raises ZeroVariance: sigma2 <= 0
    """
    s2 = components.sigma2
    if not s2 > 0:
        raise ZeroVariance(f"sigma^2 = {s2}: the functional is degenerate")
    var_t = max(components.var_T, 0.0)
    var_tp = max(components.var_Tprime, 0.0)
    abs3 = max(components.sum_abs3, 0.0)
    sqrt6 = max(components.sum_sqrt6, 0.0)
    s3 = s2 ** 1.5

    root_t, root_tp = math.sqrt(var_t), math.sqrt(var_tp)
    wass = root_t / s2 + abs3 / (2.0 * s3)
    kol = root_t / s2 + root_tp / s2 + sqrt6 / (4.0 * s3) + SQRT_2PI_OVER_16 * abs3 / s3

    se = dict(components.standard_errors)
    e_s2 = se.get('sigma2', 0.0)
    e_t = _sqrt_error(var_t, se.get('var_T', 0.0)) / s2
    e_tp = _sqrt_error(var_tp, se.get('var_Tprime', 0.0)) / s2
    e_abs3 = se.get('sum_abs3', 0.0) / s3
    e_sqrt6 = se.get('sum_sqrt6', 0.0) / s3
    d_wass_s2 = -root_t / s2 ** 2 - 0.75 * abs3 / s2 ** 2.5
    d_kol_s2 = -(root_t + root_tp) / s2 ** 2 - 1.5 * (sqrt6 / 4.0 + SQRT_2PI_OVER_16 * abs3) / s2 ** 2.5
    se['wass_bound'] = math.sqrt(e_t ** 2 + (0.5 * e_abs3) ** 2 + (d_wass_s2 * e_s2) ** 2)
    se['kol_bound'] = math.sqrt(
        e_t ** 2 + e_tp ** 2 + (0.25 * e_sqrt6) ** 2
        + (SQRT_2PI_OVER_16 * e_abs3) ** 2 + (d_kol_s2 * e_s2) ** 2
    )
    return SteinEstimate(
        sigma2=s2,
        var_T=var_t,
        var_Tprime=var_tp,
        sum_abs3=abs3,
        sum_sqrt6=sqrt6,
        wass_bound=wass,
        kol_bound=kol,
        standard_errors=se,
        instruction_count=m,
        name=name,
        n=n,
    )


def estimate_stein_bound(spec: HmmSpec, h: Functional, n: int, rng: np.random.Generator, *,
                         sigma_samples: int, outer: int, inner: int, delta_samples: int,
                         mark_dim: int = 0) -> SteinEstimate:
    """Run every component estimator and assemble both bounds."""
    _require(sigma_samples, 'sigma_samples', 3)
    values = np.array([h(sample_trajectory(spec, n, rng, mark_dim)) for _ in range(sigma_samples)])
    sigma2 = float(values.var(ddof=1))
    se_sigma2 = variance_error(values)

    var_t = estimate_var_conditional(spec, h, n, outer, inner, rng, False, mark_dim)
    var_tp = estimate_var_conditional(spec, h, n, outer, inner, rng, True, mark_dim)

    deltas = sample_deltas(spec, h, n, delta_samples, rng, mark_dim)
    third = delta_moments_from_samples(deltas, 3.0)
    sixth = delta_moments_from_samples(deltas, 6.0)
    roots = np.sqrt(sixth.estimates)
    with np.errstate(divide='ignore', invalid='ignore'):
        root_se = np.where(roots > 0, sixth.standard_errors / (2.0 * roots), np.sqrt(sixth.standard_errors))

    components = SteinComponents(
        sigma2=sigma2,
        var_T=var_t.value,
        var_Tprime=var_tp.value,
        sum_abs3=float(third.estimates.sum()),
        sum_sqrt6=float(roots.sum()),
        standard_errors={
            'sigma2': se_sigma2,
            'var_T': var_t.standard_error,
            'var_Tprime': var_tp.standard_error,
            'sum_abs3': float(math.sqrt(np.sum(third.standard_errors ** 2))),
            'sum_sqrt6': float(math.sqrt(np.sum(root_se ** 2))),
        },
    )
    return assemble_bounds(components, spec.instruction_count(n), name=h.name, n=n)


# ---------------------------------------------------------------------------
#  Variance lower bound
# ---------------------------------------------------------------------------

def variance_lower_bound(spec: HmmSpec, f: Functional, n: int, outer: int, inner: int,
                         rng: np.random.Generator, mark_dim: int = 0) -> Estimate:
    """
    Estimate sum_i E[(E[f(X^i) - f(X) | X'_i, Z])^2] <= Var f(X).

    Given the hidden path Z the observations are independent; X^i replaces
    coordinate i by an independent draw X'_i from its emission law. Two
    independent inner averages over X make the square unbiased.
    """
    _require(outer, 'outer')
    _require(inner, 'inner')
    totals = np.empty(outer)
    for o in range(outer):
        hidden = sample_trajectory(spec, n, rng, mark_dim).hidden
        draws = [sample_emissions(spec, hidden, rng, mark_dim) for _ in range(2 * inner)]
        base_values = np.array([f(Trajectory(hidden, sym, marks)) for sym, marks in draws])
        new_symbols, new_marks = sample_emissions(spec, hidden, rng, mark_dim)

        total = 0.0
        for i in range(n):
            diffs = np.empty(2 * inner)
            for k, (sym, marks) in enumerate(draws):
                sym_i = sym.copy()
                marks_i = marks.copy()
                sym_i[i] = new_symbols[i]
                marks_i[i] = new_marks[i]
                diffs[k] = f(Trajectory(hidden, sym_i, marks_i)) - base_values[k]
            total += diffs[:inner].mean() * diffs[inner:].mean()
        totals[o] = total
    return Estimate(float(totals.mean()), float(totals.std(ddof=1) / math.sqrt(outer)))


def check_lipschitz(f: Functional, spec: HmmSpec, n: int, pairs: int, rng: np.random.Generator,
                    mark_dim: int = 0) -> float:
    """Largest |f(x) - f(y)| seen over ``pairs`` random single-coordinate changes."""
    worst = 0.0
    for _ in range(pairs):
        traj = sample_trajectory(spec, n, rng, mark_dim)
        i = int(rng.integers(n))
        sym, marks = sample_emissions(spec, traj.hidden[i:i + 1], rng, mark_dim)
        observed = traj.observed.copy()
        changed = traj.marks.copy()
        observed[i] = sym[0]
        changed[i] = marks[0]
        worst = max(worst, abs(f(traj) - f(Trajectory(traj.hidden, observed, changed))))
    return worst
