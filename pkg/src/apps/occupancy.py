"""
Occupancy: W = number of letters of an L = floor(alpha n) alphabet never emitted.

Per-state emission laws come from the block family: state s is uniform on a
contiguous (wrapping) block of about fractions[s] * L letters starting at
offset s * L / |S|.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.core.perturb import estimate_stein_bound
from src.core.simulate import check_grid, sample_values
from src.core.stats import summarize
from src.errors import InvalidMeasure, StateMismatch, SymbolOutOfRange, ZeroVariance
from src.models import (
    EmpiricalSummary,
    Functional,
    HmmSpec,
    SteinEstimate,
    SteinSettings,
    Trajectory,
    Workload,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OccupancyConfig:
    alpha: float
    n: int
    fractions: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, 'fractions', tuple(float(f) for f in self.fractions))
        if not self.alpha > 0:
            raise InvalidMeasure(f"alpha must be positive, got {self.alpha}")
        if self.letters < 1:
            raise InvalidMeasure(f"L = floor({self.alpha} * {self.n}) must be >= 1")
        if not self.fractions or any(not 0 < f <= 1 for f in self.fractions):
            raise InvalidMeasure(f"Block fractions must lie in (0, 1], got {self.fractions}")

    @property
    def letters(self) -> int:
        return int(math.floor(self.alpha * self.n))

    def with_n(self, n: int) -> 'OccupancyConfig':
        return dataclasses.replace(self, n=n)


def emission_blocks(cfg: OccupancyConfig, num_states: int) -> np.ndarray:
    """
    Block-family emission matrix of shape (|S|, L).

    A single fraction applies to every state; otherwise one fraction per state.
    """
    fractions = cfg.fractions * num_states if len(cfg.fractions) == 1 else cfg.fractions
    if len(fractions) != num_states:
        raise StateMismatch(f"Model has {num_states} states but {len(fractions)} block fractions were given")
    L = cfg.letters
    emission = np.zeros((num_states, L))
    for s, fraction in enumerate(fractions):
        size = min(L, max(1, int(round(fraction * L))))
        start = (s * L) // num_states
        emission[s, (start + np.arange(size)) % L] = 1.0 / size
    return emission


def occupancy_spec(cfg: OccupancyConfig, spec: HmmSpec) -> HmmSpec:
    return spec.with_emission(emission_blocks(cfg, spec.num_states))


def occupancy_count(X, L: int) -> int:
    """
    W = L - #distinct symbols of X.

    :raises SymbolOutOfRange: a symbol outside 0..L-1
    """
    symbols = np.asarray(X, dtype=np.int64).ravel()
    if symbols.size and (symbols.min() < 0 or symbols.max() >= L):
        raise SymbolOutOfRange(f"Symbols must lie in 0..{L - 1}, got range [{symbols.min()}, {symbols.max()}]")
    return int(L - np.count_nonzero(np.bincount(symbols, minlength=L)))


def expected_w_iid(L: int, n: int) -> float:
    """E W when the n symbols are iid uniform on L letters."""
    return L * (1.0 - 1.0 / L) ** n


def asymptotic_variance_constant(alpha: float) -> float:
    """lim Var(W)/n for iid uniform symbols with L = floor(alpha n)."""
    return alpha * math.exp(-1.0 / alpha) - (1.0 + alpha) * math.exp(-2.0 / alpha)


def w_functional(L: int) -> Functional:
    """W is 1-Lipschitz: one changed symbol adds or removes at most one letter."""
    return Functional('occupancy.W', lambda trajectory: occupancy_count(trajectory.observed, L), 1.0)


def occupancy_workload(cfg: OccupancyConfig, spec: HmmSpec) -> Workload:
    L = cfg.letters

    def _record(trajectory: Trajectory, value: float) -> Dict[str, object]:
        return {'alpha': cfg.alpha, 'L': L, 'W': int(value)}

    return Workload(n=cfg.n, spec=occupancy_spec(cfg, spec), functional=w_functional(L), record=_record)


@dataclass(frozen=True)
class OccupancyRun:
    summary: EmpiricalSummary
    stein: Optional[SteinEstimate] = None


def run_occupancy_clt(cfg: OccupancyConfig, spec: HmmSpec, grid: Sequence[int], replicates: int,
                      rng: np.random.Generator, stein: Optional[SteinSettings] = None) -> Dict[int, OccupancyRun]:
    """Per-n summary of W and, when ``stein`` is given, the estimated normal-approximation bounds."""
    out: Dict[int, OccupancyRun] = {}
    for n in check_grid(grid):
        workload = occupancy_workload(cfg.with_n(n), spec)
        summary = summarize(sample_values(workload, replicates, rng))
        bound = None
        if summary.degenerate:
            logger.warning(f"W is degenerate at n={n} (L={cfg.with_n(n).letters})")
        elif stein is not None:
            try:
                bound = estimate_stein_bound(
                    workload.spec, workload.functional, n, rng,
                    sigma_samples=stein.sigma_samples, outer=stein.outer,
                    inner=stein.inner, delta_samples=stein.delta_samples,
                )
            except ZeroVariance as e:
                logger.warning(f"No bound for W at n={n}: {e}")
        out[n] = OccupancyRun(summary, bound)
    return out
