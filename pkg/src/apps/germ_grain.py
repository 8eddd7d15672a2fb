"""
Germ-grain covering process driven by an HMM.

Germ i sits in the cube E_n = [0, n^(1/d)]^d with a law chosen by the hidden
state Z_i; grain i is the ball of radius r_i around it. Two functionals:
f_V, the covered volume inside E_n (Monte Carlo over uniform points), and
f_I, the number of grains that meet no other grain.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from src.apps.measures import TwoCellMeasures, positions
from src.config import config
from src.core.hmm import sample_trajectory
from src.errors import InsufficientSamples, InvalidMeasure
from src.models import Estimate, Functional, HmmSpec, Trajectory

logger = logging.getLogger(__name__)


def ball_volume(d: int, r) -> np.ndarray:
    """kappa_d r^d with kappa_d = pi^(d/2) / Gamma(d/2 + 1)."""
    return math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0) * np.asarray(r, dtype=float) ** d


def radius_for_volume(d: int, volume: float) -> float:
    return float((volume / ball_volume(d, 1.0)) ** (1.0 / d))


@dataclass(frozen=True, eq=False)
class GermGrainConfig:
    dimension: int
    n: int
    measures: TwoCellMeasures
    grain_volume_range: Tuple[float, float] = (0.5, 1.5)
    radii: Optional[np.ndarray] = None  # per-germ override, default: midpoint volume
    point_budget: int = config.default_point_budget

    def __post_init__(self):
        if self.dimension < 1 or self.n < 1:
            raise InvalidMeasure(f"Need d >= 1 and n >= 1, got d={self.dimension}, n={self.n}")
        v1, v2 = self.grain_volume_range
        if not 0 < v1 <= v2:
            raise InvalidMeasure(f"Grain volume range must satisfy 0 < V1 <= V2, got {self.grain_volume_range}")
        if self.point_budget < 1:
            raise InsufficientSamples(f"Point budget must be >= 1, got {self.point_budget}")
        if self.radii is not None:
            radii = np.array(self.radii, dtype=float).ravel()
            if radii.shape != (self.n,):
                raise InvalidMeasure(f"Expected {self.n} radii, got {radii.shape[0]}")
            volumes = ball_volume(self.dimension, radii)
            tol = 1e-12 * v2
            if np.any(radii <= 0) or np.any(volumes < v1 - tol) or np.any(volumes > v2 + tol):
                raise InvalidMeasure(f"Grain volumes must lie in [{v1}, {v2}]")
            radii.setflags(write=False)
            object.__setattr__(self, 'radii', radii)

    @property
    def side(self) -> float:
        return self.n ** (1.0 / self.dimension)

    def grain_radii(self) -> np.ndarray:
        if self.radii is not None:
            return self.radii
        midpoint = 0.5 * (self.grain_volume_range[0] + self.grain_volume_range[1])
        return np.full(self.n, radius_for_volume(self.dimension, midpoint))

    def with_n(self, n: int) -> 'GermGrainConfig':
        """Same geometry at another size; per-germ radii do not carry over."""
        return dataclasses.replace(self, n=n, radii=None)


@dataclass(frozen=True, eq=False)
class GermGrainSample:
    germs: np.ndarray   # (n, d)
    radii: np.ndarray   # (n,)
    hidden: np.ndarray  # (n,)
    side: float


# ---------------------------------------------------------------------------
#  Sampling
# ---------------------------------------------------------------------------

def sample_from_trajectory(cfg: GermGrainConfig, trajectory: Trajectory) -> GermGrainSample:
    """Germs from a trajectory whose symbols are density cells and whose marks are in-cell offsets."""
    return GermGrainSample(
        germs=positions(trajectory.observed, trajectory.marks[:, :cfg.dimension], cfg.side),
        radii=cfg.grain_radii(),
        hidden=trajectory.hidden,
        side=cfg.side,
    )


def sample_germs(cfg: GermGrainConfig, spec: HmmSpec, rng: np.random.Generator) -> GermGrainSample:
    """
    Sample the hidden chain of ``spec`` and place one germ per step.

    :raises StateMismatch: spec and state measures disagree on |S|
    """
    cell_spec = cfg.measures.cell_spec(spec)
    return sample_from_trajectory(cfg, sample_trajectory(cell_spec, cfg.n, rng, cfg.dimension))


# ---------------------------------------------------------------------------
#  f_V
# ---------------------------------------------------------------------------

def _covered_mask(tree: cKDTree, count: int, germs: np.ndarray, radii: np.ndarray) -> np.ndarray:
    covered = np.zeros(count, dtype=bool)
    for hit in tree.query_ball_point(germs, r=radii):
        covered[hit] = True
    return covered


class CoveragePoints:
    """A fixed uniform point set of E_n, so f_V is a deterministic function of the germs."""

    def __init__(self, side: float, dimension: int, budget: int, rng: np.random.Generator):
        if budget < 1:
            raise InsufficientSamples(f"Point budget must be >= 1, got {budget}")
        self.volume = side ** dimension
        self.points = rng.random((budget, dimension)) * side
        self.tree = cKDTree(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def estimate(self, germs: np.ndarray, radii: np.ndarray) -> Estimate:
        p = float(_covered_mask(self.tree, len(self), germs, radii).mean())
        return Estimate(self.volume * p, self.volume * math.sqrt(p * (1.0 - p) / len(self)))


def covered_volume(sample: GermGrainSample, M: int, rng: np.random.Generator) -> Estimate:
    """Volume of E_n covered by the grains, from M uniform points, with its binomial error."""
    grid = CoveragePoints(sample.side, sample.germs.shape[1], M, rng)
    return grid.estimate(sample.germs, sample.radii)


# ---------------------------------------------------------------------------
#  f_I
# ---------------------------------------------------------------------------

def isolated_count(sample: GermGrainSample) -> int:
    """
    Number of grains k with |C_k - C_j| > r_k + r_j for every j != k.

    Two overlapping balls with centres in the convex E_n always meet inside
    E_n, so no clipping is needed.
    """
    n = len(sample.germs)
    if n < 2:
        return n
    tree = cKDTree(sample.germs)
    pairs = tree.query_pairs(2.0 * float(sample.radii.max()), output_type='ndarray')
    if not len(pairs):
        return n
    gaps = np.linalg.norm(sample.germs[pairs[:, 0]] - sample.germs[pairs[:, 1]], axis=1)
    touching = pairs[gaps <= sample.radii[pairs[:, 0]] + sample.radii[pairs[:, 1]]]
    return n - int(np.unique(touching).size)


# ---------------------------------------------------------------------------
#  Functionals
# ---------------------------------------------------------------------------

def coverage_points(cfg: GermGrainConfig, rng: np.random.Generator) -> CoveragePoints:
    return CoveragePoints(cfg.side, cfg.dimension, cfg.point_budget, rng)


def coverage_functional(cfg: GermGrainConfig, grid: CoveragePoints) -> Functional:
    """f_V on a fixed point set; moving one germ changes it by at most V2."""
    radii = cfg.grain_radii()

    def _f_v(trajectory: Trajectory) -> float:
        return grid.estimate(sample_from_trajectory(cfg, trajectory).germs, radii).value

    return Functional('germ_grain.f_V', _f_v, lipschitz_constant=cfg.grain_volume_range[1])


def isolation_functional(cfg: GermGrainConfig) -> Functional:
    def _f_i(trajectory: Trajectory) -> float:
        return float(isolated_count(sample_from_trajectory(cfg, trajectory)))

    return Functional('germ_grain.f_I', _f_i)


def replicate_record(cfg: GermGrainConfig, grid: CoveragePoints):
    """Per-replicate CSV columns (f_V, f_V_stderr, f_I)."""
    def _record(trajectory: Trajectory, value: float) -> Dict[str, object]:
        sample = sample_from_trajectory(cfg, trajectory)
        volume = grid.estimate(sample.germs, sample.radii)
        return {'f_V': volume.value, 'f_V_stderr': volume.standard_error, 'f_I': isolated_count(sample)}

    return _record
