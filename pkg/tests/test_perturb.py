import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.apps.functionals import additive_functional, constant_functional
from src.core.hmm import perturb, reconstruct, sample_instructions, sample_trajectory
from src.core.perturb import (
    assemble_bounds,
    check_lipschitz,
    delta,
    delta_A,
    efron_stein_moment_bound,
    efron_stein_sum,
    estimate_delta_moments,
    estimate_stein_bound,
    estimate_var_conditional,
    exact_T,
    sample_deltas,
    sample_T_term,
    sampling_atoms,
    subset_weight,
    t_term,
    variance_lower_bound,
)
from src.core.stats import fit_log_slope
from src.errors import IndexInA, InsufficientSamples, ZeroVariance
from src.models import Functional, HmmSpec, InstructionStack, PerturbationSet, SteinComponents


@pytest.fixture
def pm1():
    """f = sum of +-1 symbols."""
    return additive_functional([-1.0, 1.0])


def _nonlinear():
    return Functional('test.nonlinear', lambda t: float(np.prod(1.0 + t.observed) + 0.5 * t.observed.sum() ** 2))


def _stack(symbols, states=None, num_states=1):
    m = len(symbols)
    n = (m - 1) // num_states + 1
    states = [0] * m if states is None else states
    return InstructionStack(n=n, num_states=num_states, states=states, symbols=symbols, marks=np.zeros((m, 0)))


# ---------------------------------------------------------------------------
#  Difference operators
# ---------------------------------------------------------------------------

def test_delta_constant_is_zero(two_state, rng):
    h = constant_functional(3.0)
    stack = sample_instructions(two_state, 8, rng)
    fresh = sample_instructions(two_state, 8, rng)
    assert all(delta(h, stack, i, fresh) == 0.0 for i in range(len(stack)))


def test_delta_same_entry_is_zero(pm1):
    stack = _stack([0, 1, 1])
    assert delta(pm1, stack, 1, _stack([1, 1, 0])) == 0.0


@pytest.mark.parametrize("x, x_fresh, expected", [(0, 0, 0.0), (0, 1, -2.0), (1, 0, 2.0), (1, 1, 0.0)])
def test_delta_additive_pm1(pm1, x, x_fresh, expected):
    assert delta(pm1, _stack([x, 0]), 0, _stack([x_fresh, 0])) == expected


def test_delta_A_empty_equals_delta(two_state, rng):
    h = _nonlinear()
    stack = sample_instructions(two_state, 6, rng)
    fresh = sample_instructions(two_state, 6, rng)
    for i in range(len(stack)):
        assert delta_A(h, stack, PerturbationSet(), i, fresh) == delta(h, stack, i, fresh)


def test_delta_A_additive_ignores_A(pm1):
    stack, fresh = _stack([1, 0]), _stack([0, 1])
    assert delta_A(pm1, stack, PerturbationSet((0,)), 1, fresh) == -2.0


def test_delta_A_rejects_index_in_A(pm1):
    with pytest.raises(IndexInA):
        delta_A(pm1, _stack([1, 0]), PerturbationSet((1,)), 1, _stack([0, 1]))


def test_delta_matches_full_reconstruction(two_state, rng):
    h = _nonlinear()
    stack = sample_instructions(two_state, 7, rng)
    fresh = sample_instructions(two_state, 7, rng)
    for i in range(len(stack)):
        slow = h(reconstruct(stack)) - h(reconstruct(perturb(stack, PerturbationSet((i,)), fresh)))
        assert delta(h, stack, i, fresh) == pytest.approx(slow, abs=1e-12)


# ---------------------------------------------------------------------------
#  T_m sampling measure
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", range(1, 11))
def test_weights_over_subsets_avoiding_j_sum_to_one(m):
    # every subset of size a avoiding a fixed j: C(m-1, a) of them
    total = sum(math.comb(m - 1, a) * subset_weight(m, a) for a in range(m))
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_sampling_atoms_form_a_probability_measure(m):
    assert sum(p for _, _, p in sampling_atoms(m)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("num_states, n", [(1, 1), (1, 2), (1, 3), (2, 2)])
@pytest.mark.parametrize("absolute", [False, True])
def test_atom_weighted_mean_equals_exact_T(num_states, n, absolute):
    spec = HmmSpec.from_arrays(
        np.full(num_states, 1.0 / num_states),
        np.full((num_states, num_states), 1.0 / num_states),
        [[0.3, 0.7]] * num_states,
    )
    h = _nonlinear()
    for seed in range(10):
        rng = np.random.default_rng(seed)
        stack = sample_instructions(spec, n, rng)
        fresh = sample_instructions(spec, n, rng)
        m = len(stack)
        assert m <= 3
        weighted = sum(p * t_term(h, stack, fresh, A, j, absolute) for A, j, p in sampling_atoms(m))
        assert abs(weighted - exact_T(h, stack, fresh, absolute)) <= 1e-12


def test_single_instruction_T_term_is_square(pm1):
    stack, fresh = _stack([1]), _stack([0])
    rng = np.random.default_rng(0)
    assert sample_T_term(pm1, stack, fresh, rng) == 4.0
    assert sample_T_term(pm1, stack, fresh, rng, absolute=True) == 4.0


def test_sample_T_term_mean_matches_closed_form(coin, pm1, rng):
    stack = sample_instructions(coin, 20, rng)
    fresh = sample_instructions(coin, 20, rng)
    x = np.where(stack.symbols == 1, 1.0, -1.0)
    x_fresh = np.where(fresh.symbols == 1, 1.0, -1.0)
    exact = float(np.sum((x - x_fresh) ** 2))
    draws = np.array([sample_T_term(pm1, stack, fresh, rng) for _ in range(20_000)])
    se = draws.std(ddof=1) / math.sqrt(len(draws))
    assert abs(draws.mean() - exact) <= 3 * se + 1e-12


# ---------------------------------------------------------------------------
#  Conditional variance
# ---------------------------------------------------------------------------

def test_var_conditional_constant_is_zero(two_state, rng):
    est = estimate_var_conditional(two_state, constant_functional(1.0), 10, 5, 3, rng)
    assert abs(est.value) <= 1e-12


@pytest.mark.parametrize("outer, inner", [(1, 5), (5, 1)])
def test_var_conditional_needs_samples(two_state, rng, outer, inner):
    with pytest.raises(InsufficientSamples):
        estimate_var_conditional(two_state, constant_functional(), 5, outer, inner, rng)


def test_var_conditional_null_case(coin, pm1, rng):
    est = estimate_var_conditional(coin, pm1, 30, 200, 10, rng)
    assert abs(est.value) <= 3 * est.standard_error


def _exact_var_conditional(p, h):
    """Var(E[T|R]) for n = 2, one state, symbols {0, 1} with P(1) = p."""
    outcomes = list(itertools.product((0, 1), repeat=2))
    weight = {o: np.prod([p if s else 1 - p for s in o]) for o in outcomes}
    means = []
    for r in outcomes:
        stack = _stack(list(r))
        means.append(sum(weight[f] * exact_T(h, stack, _stack(list(f))) for f in outcomes))
    probs = np.array([weight[r] for r in outcomes])
    means = np.array(means)
    return float(np.sum(probs * means ** 2) - np.sum(probs * means) ** 2)


def test_var_conditional_matches_enumeration(rng):
    spec = HmmSpec.from_arrays([1.0], [[1.0]], [[0.3, 0.7]])
    h = _nonlinear()
    exact = _exact_var_conditional(0.7, h)
    est = estimate_var_conditional(spec, h, 2, 3000, 6, rng)
    assert abs(est.value - exact) <= 4 * est.standard_error


# ---------------------------------------------------------------------------
#  Delta moments and Efron-Stein
# ---------------------------------------------------------------------------

def test_delta_moments_constant(two_state, rng):
    moments = estimate_delta_moments(two_state, constant_functional(), 6, 3.0, 10, rng)
    assert_allclose(moments.estimates, 0.0)
    assert moments.estimates.shape == (two_state.instruction_count(6),)


def test_delta_moments_additive_pm1(coin, pm1, rng):
    moments = estimate_delta_moments(coin, pm1, 10, 3.0, 2000, rng)
    assert np.all(np.abs(moments.estimates - 4.0) <= 4 * moments.standard_errors)


def test_delta_moments_need_samples(coin, pm1, rng):
    with pytest.raises(InsufficientSamples):
        estimate_delta_moments(coin, pm1, 10, 3.0, 1, rng)


def test_delta_moment_sum_grows_at_most_like_n_log_n(stationary_two_state, rng):
    f = additive_functional([0.0, 1.0])
    grid = [32, 64, 128, 256]
    totals = [estimate_delta_moments(stationary_two_state, f, n, 1.0, 100, rng).estimates.sum() for n in grid]
    scaled = [total / (n * math.log(n)) for n, total in zip(grid, totals)]
    assert scaled[-1] <= scaled[0]
    slope, _, _ = fit_log_slope(list(zip(grid, totals)))
    assert slope <= 1.2


def test_efron_stein_equality_case(coin, rng):
    n = 40
    f = additive_functional([0.0, 1.0])
    es = efron_stein_sum(coin, f, n, 2000, rng)
    assert abs(es.value - n / 4) <= 3 * es.standard_error
    values = np.array([f(sample_trajectory(coin, n, rng)) for _ in range(4000)])
    var_se = math.sqrt(2.0 / (len(values) - 1)) * (n / 4)
    assert abs(values.var(ddof=1) - n / 4) <= 3 * var_se


def test_moment_bound_at_two_is_efron_stein(two_state, rng):
    deltas = sample_deltas(two_state, _nonlinear(), 5, 50, rng)
    half_sum = 0.5 * float(np.sum(np.mean(deltas ** 2, axis=0)))
    assert efron_stein_moment_bound(deltas, 2.0) == pytest.approx(half_sum, rel=1e-12)


# ---------------------------------------------------------------------------
#  Bound assembly
# ---------------------------------------------------------------------------

def _components(**kw):
    base = dict(sigma2=100.0, var_T=0.0, var_Tprime=0.0, sum_abs3=400.0, sum_sqrt6=800.0)
    base.update(kw)
    return SteinComponents(**base)


def test_assemble_closed_form_additive():
    est = assemble_bounds(_components(), 199)
    assert est.wass_bound == pytest.approx(0.2)
    expected_kol = 800.0 / (4 * 1000.0) + math.sqrt(2 * math.pi) / 16 * 400.0 / 1000.0
    assert est.kol_bound == pytest.approx(expected_kol)
    assert est.instruction_count == 199


def test_assemble_zero_components():
    est = assemble_bounds(SteinComponents(1.0, 0.0, 0.0, 0.0, 0.0), 5)
    assert est.wass_bound == 0.0
    assert est.kol_bound == 0.0


@pytest.mark.parametrize("sigma2", [0.0, -1.0])
def test_assemble_zero_variance(sigma2):
    with pytest.raises(ZeroVariance):
        assemble_bounds(SteinComponents(sigma2, 0.0, 0.0, 0.0, 0.0), 5)


@pytest.mark.parametrize("field", ['var_T', 'var_Tprime', 'sum_abs3', 'sum_sqrt6'])
def test_assemble_monotone_in_components(field):
    start = dict(sigma2=2.0, var_T=0.3, var_Tprime=0.5, sum_abs3=1.5, sum_sqrt6=2.5)
    low = assemble_bounds(SteinComponents(**start), 10)
    bumped = dict(start)
    bumped[field] *= 1.1
    high = assemble_bounds(SteinComponents(**bumped), 10)
    assert high.wass_bound >= low.wass_bound
    assert high.kol_bound >= low.kol_bound


def test_stein_bound_additive_closed_form(coin, pm1):
    rng = np.random.default_rng(7)
    est = estimate_stein_bound(coin, pm1, 100, rng, sigma_samples=4000, outer=100, inner=10, delta_samples=200)
    se = est.standard_errors
    assert abs(est.var_T) <= 3 * se['var_T'] + 1e-12
    assert abs(est.wass_bound - 0.2) <= 3 * se['wass_bound']
    assert est.sum_abs3 >= 0 and est.sum_sqrt6 >= 0


def test_stein_bound_constant_is_degenerate(coin):
    with pytest.raises(ZeroVariance):
        estimate_stein_bound(coin, constant_functional(), 10, np.random.default_rng(0),
                             sigma_samples=10, outer=2, inner=2, delta_samples=2)


# ---------------------------------------------------------------------------
#  Variance lower bound and Lipschitz check
# ---------------------------------------------------------------------------

def test_variance_lower_bound_constant(two_state, rng):
    est = variance_lower_bound(two_state, constant_functional(), 8, 4, 3, rng)
    assert est.value == 0.0


def test_variance_lower_bound_additive_pm1(coin, pm1, rng):
    n = 20
    est = variance_lower_bound(coin, pm1, n, 200, 10, rng)
    assert abs(est.value - n) <= 3 * est.standard_error


def test_variance_lower_bound_below_variance(two_state, rng):
    f = _nonlinear()
    n = 6
    est = variance_lower_bound(two_state, f, n, 300, 8, rng)
    values = np.array([f(sample_trajectory(two_state, n, rng)) for _ in range(4000)])
    var = values.var(ddof=1)
    m4 = np.mean((values - values.mean()) ** 4)
    var_se = math.sqrt(max(m4 - var ** 2, 0.0) / len(values))
    assert est.value <= var + 3 * math.hypot(est.standard_error, var_se)


def test_variance_lower_bound_needs_samples(coin, pm1, rng):
    with pytest.raises(InsufficientSamples):
        variance_lower_bound(coin, pm1, 5, 1, 3, rng)


def test_check_lipschitz_additive(two_state, rng):
    f = additive_functional([-1.0, 1.0])
    assert check_lipschitz(f, two_state, 15, 200, rng) <= f.lipschitz_constant
