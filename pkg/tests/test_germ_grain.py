import dataclasses
import math

import numpy as np
import pytest

from src.apps.germ_grain import (
    CoveragePoints,
    GermGrainConfig,
    GermGrainSample,
    ball_volume,
    coverage_functional,
    coverage_points,
    covered_volume,
    isolated_count,
    isolation_functional,
    radius_for_volume,
    replicate_record,
    sample_germs,
)
from src.apps.measures import TwoCellMeasures
from src.core.hmm import sample_trajectory
from src.core.simulate import summarize_grid
from src.core.stats import dkw_width, fit_log_slope
from src.errors import InsufficientSamples, InvalidMeasure, StateMismatch
from src.models import HmmSpec, Workload


def _sample(germs, radii, side):
    germs = np.asarray(germs, dtype=float)
    return GermGrainSample(germs=germs, radii=np.asarray(radii, dtype=float),
                           hidden=np.zeros(len(germs), dtype=int), side=side)


def _within(est, exact, side, d, M):
    """|est - exact| inside 3 binomial standard errors evaluated at the exact fraction."""
    volume = side ** d
    q = exact / volume
    return abs(est.value - exact) <= 3 * volume * math.sqrt(q * (1 - q) / M) + 1e-12


def test_ball_volume_closed_forms():
    assert ball_volume(1, 0.5) == pytest.approx(1.0)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4.0 / 3.0 * math.pi * 8.0)
    assert ball_volume(2, radius_for_volume(2, 1.25)) == pytest.approx(1.25)


# ---------------------------------------------------------------------------
#  Config
# ---------------------------------------------------------------------------

class TestConfig:
    def test_default_radius_is_midpoint_volume(self):
        cfg = GermGrainConfig(2, 9, TwoCellMeasures.uniform(), (0.5, 1.5))
        assert cfg.side == pytest.approx(3.0)
        assert np.allclose(ball_volume(2, cfg.grain_radii()), 1.0)

    def test_radius_override_must_respect_range(self):
        with pytest.raises(InvalidMeasure):
            GermGrainConfig(2, 2, TwoCellMeasures.uniform(), (0.5, 1.5), radii=[0.5, 2.0])

    def test_radius_override_length(self):
        with pytest.raises(InvalidMeasure):
            GermGrainConfig(2, 3, TwoCellMeasures.uniform(), radii=[0.5, 0.5])

    def test_measures_outside_density_band(self):
        with pytest.raises(InvalidMeasure):
            TwoCellMeasures([[0.9, 0.1]], (0.5, 1.5))

    def test_measures_rows_sum_to_one(self):
        with pytest.raises(InvalidMeasure):
            TwoCellMeasures([[0.5, 0.6]], (0.5, 1.5))

    def test_point_budget(self):
        with pytest.raises(InsufficientSamples):
            GermGrainConfig(2, 4, TwoCellMeasures.uniform(), point_budget=0)

    def test_with_n_drops_radii(self):
        r = radius_for_volume(2, 1.0)
        cfg = GermGrainConfig(2, 2, TwoCellMeasures.uniform(), radii=[r, r]).with_n(16)
        assert cfg.n == 16 and cfg.radii is None


# ---------------------------------------------------------------------------
#  sample_germs
# ---------------------------------------------------------------------------

def test_uniform_germs_split_evenly(coin, rng):
    n = 2000
    cfg = GermGrainConfig(2, n, TwoCellMeasures.uniform())
    sample = sample_germs(cfg, coin, rng)
    assert np.all((sample.germs >= 0) & (sample.germs <= cfg.side))
    lower = int(np.sum(sample.germs[:, 0] < cfg.side / 2))
    assert abs(lower - n / 2) <= 4 * math.sqrt(n / 4)


def test_extreme_cell_weight_frequency(coin, rng):
    n = 2000
    cfg = GermGrainConfig(2, n, TwoCellMeasures([[0.75, 0.25]], (0.5, 1.5)))
    sample = sample_germs(cfg, coin, rng)
    freq = float(np.mean(sample.germs[:, 0] < cfg.side / 2))
    assert abs(freq - 0.75) <= 4 * math.sqrt(0.75 * 0.25 / n)


def test_state_dependent_cells(rng):
    spec = HmmSpec.from_arrays([0.5, 0.5], [[0.9, 0.1], [0.1, 0.9]], [[1.0], [1.0]])
    cfg = GermGrainConfig(1, 3000, TwoCellMeasures([[0.75, 0.25], [0.25, 0.75]], (0.5, 1.5)))
    sample = sample_germs(cfg, spec, rng)
    lower = sample.germs[:, 0] < cfg.side / 2
    for state, expected in ((0, 0.75), (1, 0.25)):
        picked = lower[sample.hidden == state]
        assert abs(picked.mean() - expected) <= 4 * math.sqrt(expected * (1 - expected) / len(picked))


def test_single_germ(coin, rng):
    cfg = GermGrainConfig(3, 1, TwoCellMeasures.uniform())
    sample = sample_germs(cfg, coin, rng)
    assert sample.germs.shape == (1, 3)
    assert np.all((sample.germs >= 0) & (sample.germs <= 1.0))


def test_state_mismatch(two_state, rng):
    with pytest.raises(StateMismatch):
        sample_germs(GermGrainConfig(2, 4, TwoCellMeasures.uniform(1)), two_state, rng)


def test_sampling_is_deterministic(two_state):
    cfg = GermGrainConfig(2, 50, TwoCellMeasures.uniform(2))
    a = sample_germs(cfg, two_state, np.random.default_rng(3))
    b = sample_germs(cfg, two_state, np.random.default_rng(3))
    assert np.array_equal(a.germs, b.germs)


# ---------------------------------------------------------------------------
#  f_V
# ---------------------------------------------------------------------------

M = 20_000


def test_single_ball_volume(rng):
    r = radius_for_volume(2, 1.0)
    est = covered_volume(_sample([[2.0, 2.0]], [r], 4.0), M, rng)
    assert _within(est, 1.0, 4.0, 2, M)


def test_disjoint_balls_add(rng):
    r = radius_for_volume(2, 1.0)
    est = covered_volume(_sample([[1.0, 1.0], [3.0, 3.0]], [r, r], 4.0), M, rng)
    assert _within(est, 2.0, 4.0, 2, M)


def test_coincident_balls_clip_to_cube(rng):
    centre = np.array([0.2, 0.2])
    radii = [0.3, 0.5, 0.4]
    est = covered_volume(_sample([centre] * 3, radii, 4.0), M, rng)
    # midpoint-rule area of the largest disc inside [0, 0.7]^2
    ticks = (np.arange(2800) + 0.5) * (0.7 / 2800)
    xx, yy = np.meshgrid(ticks, ticks)
    exact = float(np.sum((xx - 0.2) ** 2 + (yy - 0.2) ** 2 <= 0.25) * (0.7 / 2800) ** 2)
    assert _within(est, exact, 4.0, 2, M)


def test_volume_monotone_when_adding_grains(rng):
    grid = CoveragePoints(3.0, 2, 4096, rng)
    germs = rng.random((6, 2)) * 3.0
    radii = np.full(6, 0.4)
    values = [grid.estimate(germs[:k], radii[:k]).value for k in range(1, 7)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_volume_bounded(rng):
    cfg = GermGrainConfig(2, 30, TwoCellMeasures.uniform())
    grid = coverage_points(cfg, rng)
    for _ in range(20):
        sample = sample_germs(cfg, HmmSpec.from_arrays([1.0], [[1.0]], [[1.0]]), rng)
        est = grid.estimate(sample.germs, sample.radii)
        cap = min(cfg.n, float(ball_volume(2, sample.radii).sum()))
        assert 0.0 <= est.value <= cap + 3 * est.standard_error + 1e-12


# ---------------------------------------------------------------------------
#  f_I
# ---------------------------------------------------------------------------

def test_far_apart_grains_are_isolated():
    sample = _sample([[0.5, 0.5], [3.5, 0.5], [0.5, 3.5], [3.5, 3.5]], [0.4] * 4, 4.0)
    assert isolated_count(sample) == 4


def test_identical_germs_touch():
    assert isolated_count(_sample([[1.0, 1.0]] * 3, [0.3] * 3, 4.0)) == 0


def test_single_grain_is_isolated():
    assert isolated_count(_sample([[1.0, 1.0]], [0.3], 4.0)) == 1


def test_unequal_radii():
    # gap 1.0: touching for radii 0.6 + 0.5, apart for 0.4 + 0.5
    assert isolated_count(_sample([[1.0, 1.0], [2.0, 1.0]], [0.6, 0.5], 4.0)) == 0
    assert isolated_count(_sample([[1.0, 1.0], [2.0, 1.0]], [0.4, 0.5], 4.0)) == 2


def _lens_isolated(sample, rng, points=2000):
    """Grain k is isolated unless some uniform point of ball k lies in ball j and in E_n."""
    germs, radii, side = sample.germs, sample.radii, sample.side
    d = germs.shape[1]
    out = 0
    for k in range(len(germs)):
        cloud = rng.uniform(-1.0, 1.0, size=(8 * points, d))
        cloud = cloud[np.linalg.norm(cloud, axis=1) <= 1.0][:points] * radii[k] + germs[k]
        inside = np.all((cloud >= 0) & (cloud <= side), axis=1)
        hit = False
        for j in range(len(germs)):
            if j != k and np.any(inside & (np.linalg.norm(cloud - germs[j], axis=1) <= radii[j])):
                hit = True
                break
        out += not hit
    return out


def test_isolated_count_matches_lens_oracle():
    cfg = GermGrainConfig(2, 5, TwoCellMeasures.uniform())
    coin_cells = HmmSpec.from_arrays([1.0], [[1.0]], [[0.5, 0.5]])
    accepted = 0
    seed = 0
    while accepted < 100:
        rng = np.random.default_rng(seed)
        seed += 1
        sample = sample_germs(cfg, coin_cells, rng)
        gaps = np.linalg.norm(sample.germs[:, None] - sample.germs[None], axis=2)
        reach = sample.radii[:, None] + sample.radii[None]
        off_diag = ~np.eye(len(gaps), dtype=bool)
        if np.any(np.abs(gaps - reach)[off_diag] <= 0.1 * reach[off_diag]):
            continue
        assert isolated_count(sample) == _lens_isolated(sample, rng)
        accepted += 1


def test_isolated_count_bounds(coin, rng):
    cfg = GermGrainConfig(2, 40, TwoCellMeasures.uniform())
    f_i = isolation_functional(cfg)
    for _ in range(10):
        traj = sample_trajectory(cfg.measures.cell_spec(coin), cfg.n, rng, cfg.dimension)
        assert 0 <= f_i(traj) <= cfg.n


def test_replicate_record_columns(coin, rng):
    cfg = GermGrainConfig(2, 10, TwoCellMeasures.uniform(), point_budget=512)
    grid = coverage_points(cfg, rng)
    f_v = coverage_functional(cfg, grid)
    traj = sample_trajectory(cfg.measures.cell_spec(coin), cfg.n, rng, cfg.dimension)
    record = replicate_record(cfg, grid)(traj, f_v(traj))
    assert set(record) == {'f_V', 'f_V_stderr', 'f_I'}
    assert record['f_V'] == f_v(traj)
    assert f_v.lipschitz_constant == 1.5


# ---------------------------------------------------------------------------
#  Growth and normality
# ---------------------------------------------------------------------------

def _builder(spec, functional_of, rng):
    base = GermGrainConfig(2, 1, TwoCellMeasures.uniform(spec.num_states))

    def _build(n):
        cfg = dataclasses.replace(base.with_n(n), point_budget=64 * n)
        return Workload(n=n, spec=cfg.measures.cell_spec(spec), functional=functional_of(cfg, rng), mark_dim=2)

    return _build


@pytest.mark.slow
def test_coverage_variance_grows_linearly(stationary_two_state):
    rng = np.random.default_rng(11)
    build = _builder(stationary_two_state, lambda cfg, r: coverage_functional(cfg, coverage_points(cfg, r)), rng)
    grid = [32, 64, 128, 256]
    summaries = summarize_grid(build, grid, 1500, rng)
    slope, _, _ = fit_log_slope([(n, summaries[n].variance) for n in grid])
    assert 0.8 <= slope <= 1.2


@pytest.mark.slow
@pytest.mark.parametrize("which", ['f_V', 'f_I'])
def test_kolmogorov_distance_shrinks(stationary_two_state, which):
    rng = np.random.default_rng(12)
    if which == 'f_V':
        make = lambda cfg, r: coverage_functional(cfg, coverage_points(cfg, r))
    else:
        make = lambda cfg, r: isolation_functional(cfg)
    grid = [2 ** k for k in range(7, 12)]
    replicates = 4000
    summaries = summarize_grid(_builder(stationary_two_state, make, rng), grid, replicates, rng)
    d_k = [summaries[n].d_kolmogorov for n in grid]
    slack = 2 * dkw_width(replicates)
    assert all(b <= a + slack for a, b in zip(d_k, d_k[1:]))
    assert d_k[-1] < 0.05
