"""
Voronoi approximation of a compact region K of [0,1]^d.

phi(X) is the volume of the union of Voronoi cells whose nucleus lies in K,
estimated as the fraction of uniform points whose nearest nucleus is in K.
Nuclei follow the same HMM-driven two-cell law as the germ-grain germs, on
the unit cube.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.apps.germ_grain import ball_volume
from src.apps.measures import TwoCellMeasures, positions
from src.config import config
from src.core.simulate import summarize_grid
from src.errors import EmptyNuclei, InsufficientSamples, InvalidRegion
from src.models import EmpiricalSummary, Estimate, Functional, HmmSpec, Trajectory, Workload

logger = logging.getLogger(__name__)

REGION_KINDS = ('ball', 'box', 'full')


@dataclass(frozen=True, eq=False)
class RegionPredicate:
    """
    K as a ball, an axis-aligned box or the whole cube.

    ``params`` holds (center, radius) for a ball and (lo, hi) for a box.
    """
    kind: str
    dimension: int
    params: Tuple = ()
    exact_volume: Optional[float] = None

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise InvalidRegion(f"Unknown region kind '{self.kind}', expected one of {REGION_KINDS}")
        if self.dimension < 1:
            raise InvalidRegion(f"Region dimension must be >= 1, got {self.dimension}")
        if self.kind == 'ball':
            center, radius = self.params
            center = np.array(center, dtype=float).ravel()
            radius = float(radius)
            if center.shape != (self.dimension,) or radius <= 0:
                raise InvalidRegion(f"Ball needs a {self.dimension}-d center and a positive radius")
            if np.any(center - radius < 0) or np.any(center + radius > 1):
                raise InvalidRegion("Ball must lie inside the unit cube")
            object.__setattr__(self, 'params', (center, radius))
        elif self.kind == 'box':
            lo, hi = (np.array(p, dtype=float).ravel() for p in self.params)
            if lo.shape != (self.dimension,) or hi.shape != (self.dimension,):
                raise InvalidRegion(f"Box corners must be {self.dimension}-d")
            if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
                raise InvalidRegion(f"Box [{lo.tolist()}, {hi.tolist()}] is not a sub-box of the unit cube")
            object.__setattr__(self, 'params', (lo, hi))
        if self.exact_volume is not None and not abs(self.exact_volume - self.volume()) <= 1e-12:
            raise InvalidRegion(f"exact_volume {self.exact_volume} does not match the region volume {self.volume()}")

    @classmethod
    def ball(cls, center: Sequence[float], radius: float, exact_volume: Optional[float] = None) -> 'RegionPredicate':
        return cls('ball', len(center), (center, radius), exact_volume)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], exact_volume: Optional[float] = None) -> 'RegionPredicate':
        return cls('box', len(lo), (lo, hi), exact_volume)

    @classmethod
    def full(cls, dimension: int) -> 'RegionPredicate':
        return cls('full', dimension)

    @classmethod
    def from_dict(cls, data: dict) -> 'RegionPredicate':
        try:
            kind = data['kind']
            if kind == 'ball':
                return cls.ball(data['center'], data['radius'], data.get('exact_volume'))
            if kind == 'box':
                return cls.box(data['lo'], data['hi'], data.get('exact_volume'))
            if kind == 'full':
                return cls.full(int(data['dimension']))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidRegion(f"Malformed region descriptor: {e}") from e
        raise InvalidRegion(f"Unknown region kind '{kind}'")

    def to_dict(self) -> dict:
        if self.kind == 'ball':
            out = {'kind': 'ball', 'center': self.params[0].tolist(), 'radius': self.params[1]}
        elif self.kind == 'box':
            out = {'kind': 'box', 'lo': self.params[0].tolist(), 'hi': self.params[1].tolist()}
        else:
            out = {'kind': 'full', 'dimension': self.dimension}
        if self.exact_volume is not None:
            out['exact_volume'] = self.exact_volume
        return out

    def volume(self) -> float:
        if self.kind == 'ball':
            return float(ball_volume(self.dimension, self.params[1]))
        if self.kind == 'box':
            return float(np.prod(self.params[1] - self.params[0]))
        return 1.0

    def contains(self, points) -> np.ndarray:
        """Boolean membership of each row of ``points`` (closed region)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        if self.kind == 'ball':
            center, radius = self.params
            return np.sum((pts - center) ** 2, axis=1) <= radius ** 2
        if self.kind == 'box':
            lo, hi = self.params
            return np.all((pts >= lo) & (pts <= hi), axis=1)
        return np.all((pts >= 0) & (pts <= 1), axis=1)


@dataclass(frozen=True, eq=False)
class VoronoiConfig:
    dimension: int
    n: int
    measures: TwoCellMeasures
    region: RegionPredicate
    point_budget: int = config.default_point_budget
    method: str = field(default=config.nearest_index)

    def __post_init__(self):
        if self.region.dimension != self.dimension:
            raise InvalidRegion(f"Region is {self.region.dimension}-d but the nuclei are {self.dimension}-d")
        if self.point_budget < 1:
            raise InsufficientSamples(f"Point budget must be >= 1, got {self.point_budget}")
        if self.method not in ('kdtree', 'brute'):
            raise InvalidRegion(f"Unknown nearest-neighbour method '{self.method}'")

    def with_n(self, n: int) -> 'VoronoiConfig':
        return dataclasses.replace(self, n=n)


# ---------------------------------------------------------------------------
#  Nearest nucleus
# ---------------------------------------------------------------------------

def _as_nuclei(X, dimension: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dimension in (None, 1) else arr.reshape(1, -1)
    if arr.shape[0] == 0:
        raise EmptyNuclei("Nucleus set is empty")
    return arr


def nearest_nucleus(y, X) -> int:
    """Index of the nucleus closest to y; ties go to the smallest index."""
    y = np.asarray(y, dtype=float).ravel()
    nuclei = _as_nuclei(X, len(y))
    return int(np.argmin(np.sum((nuclei - y) ** 2, axis=1)))


def nearest_nuclei(points: np.ndarray, X, method: Optional[str] = None) -> np.ndarray:
    """
    Nearest-nucleus index for every row of ``points``.

    'brute' applies the lowest-index tie rule exactly; 'kdtree' agrees with it
    except on exact ties.
    """
    method = config.nearest_index if method is None else method
    nuclei = _as_nuclei(X, points.shape[1])
    if method == 'kdtree':
        _, idx = cKDTree(nuclei).query(points, k=1)
        return np.asarray(idx, dtype=np.int64)
    out = np.empty(len(points), dtype=np.int64)
    for start in range(0, len(points), config.brute_chunk):
        block = points[start:start + config.brute_chunk]
        dist = np.sum((block[:, None, :] - nuclei[None, :, :]) ** 2, axis=2)
        out[start:start + len(block)] = np.argmin(dist, axis=1)
    return out


# ---------------------------------------------------------------------------
#  phi
# ---------------------------------------------------------------------------

def _fraction_in_region(points: np.ndarray, nuclei: np.ndarray, K: RegionPredicate,
                        method: Optional[str]) -> float:
    inside = K.contains(nuclei)
    if inside.all():
        return 1.0
    if not inside.any():
        return 0.0
    return float(inside[nearest_nuclei(points, nuclei, method)].mean())


def voronoi_volume_estimate(X, K: RegionPredicate, M: int, rng: np.random.Generator,
                            method: Optional[str] = None) -> Estimate:
    """phi(X) from M uniform points of [0,1]^d with its binomial standard error."""
    nuclei = _as_nuclei(X, K.dimension)
    if M < 1:
        raise InsufficientSamples(f"Point budget must be >= 1, got {M}")
    points = rng.random((M, K.dimension))
    p = _fraction_in_region(points, nuclei, K, method)
    return Estimate(p, math.sqrt(p * (1.0 - p) / M))


def voronoi_volume_exact_1d(X, K: RegionPredicate) -> float:
    """Exact phi(X) for d = 1: cells are bounded by midpoints of consecutive sorted nuclei."""
    if K.dimension != 1:
        raise InvalidRegion(f"Exact oracle needs a 1-d region, got d={K.dimension}")
    nuclei = np.sort(_as_nuclei(X, 1)[:, 0])
    edges = np.concatenate(([0.0], 0.5 * (nuclei[1:] + nuclei[:-1]), [1.0]))
    lengths = np.diff(edges)
    return float(lengths[K.contains(nuclei)].sum())


def nuclei_from_trajectory(cfg: VoronoiConfig, trajectory: Trajectory) -> np.ndarray:
    return positions(trajectory.observed, trajectory.marks[:, :cfg.dimension], 1.0)


def phi_functional(cfg: VoronoiConfig, rng: np.random.Generator) -> Functional:
    """phi on a point set drawn once from ``rng``."""
    points = rng.random((cfg.point_budget, cfg.dimension))

    def _phi(trajectory: Trajectory) -> float:
        return _fraction_in_region(points, nuclei_from_trajectory(cfg, trajectory), cfg.region, cfg.method)

    return Functional('voronoi.phi', _phi)


def voronoi_workload(cfg: VoronoiConfig, spec: HmmSpec, rng: np.random.Generator) -> Workload:
    budget = cfg.point_budget

    def _record(trajectory: Trajectory, value: float) -> Dict[str, object]:
        return {'d': cfg.dimension, 'phi': value, 'phi_stderr': math.sqrt(value * (1.0 - value) / budget)}

    return Workload(
        n=cfg.n,
        spec=cfg.measures.cell_spec(spec),
        functional=phi_functional(cfg, rng),
        mark_dim=cfg.dimension,
        record=_record,
    )


def run_voronoi_clt(cfg: VoronoiConfig, spec: HmmSpec, K: RegionPredicate, grid: Sequence[int],
                    replicates: int, rng: np.random.Generator) -> Dict[int, EmpiricalSummary]:
    """Summaries of phi over ``replicates`` trajectories for every n of the grid."""
    cfg = dataclasses.replace(cfg, region=K)
    return summarize_grid(lambda n: voronoi_workload(cfg.with_n(n), spec, rng), grid, replicates, rng)
