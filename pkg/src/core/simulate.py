"""
Seeded replicate streams and replicate fan-out.

Every replicate owns a generator derived from (master seed, experiment id,
counters...), so the output never depends on scheduling or worker count.
"""
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from src.config import config
from src.core.hmm import sample_trajectory
from src.core.stats import summarize
from src.errors import InvalidGrid
from src.models import EmpiricalSummary, Workload

logger = logging.getLogger(__name__)

T = TypeVar('T')


def experiment_key(experiment_id: str) -> int:
    """Stable 64-bit integer for an experiment id (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(experiment_id.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')


def replicate_rng(seed: int, experiment_id: str, *counters: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), experiment_key(experiment_id), *map(int, counters)]))


def map_replicates(fn: Callable[[int], T], count: int, workers: Optional[int] = None,
                   on_done: Optional[Callable[[], None]] = None) -> List[T]:
    """Run fn(0..count-1), possibly on a thread pool; results come back in index order."""
    workers = config.default_workers if workers is None else max(1, int(workers))

    def _run(index: int) -> T:
        result = fn(index)
        if on_done:
            on_done()
        return result

    if workers == 1 or count <= 1:
        return [_run(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, range(count)))


def simulate_values(workload: Workload, replicates: int, seed: int, experiment_id: str,
                    workers: Optional[int] = None,
                    on_done: Optional[Callable[[], None]] = None) -> Tuple[np.ndarray, List[Dict[str, object]]]:
    """
    Draw ``replicates`` independent trajectories and evaluate the functional on each.

    :return: (values, per-replicate record dicts)
    """
    def _one(replicate: int) -> Tuple[float, Dict[str, object]]:
        rng = replicate_rng(seed, experiment_id, workload.n, replicate)
        traj = sample_trajectory(workload.spec, workload.n, rng, workload.mark_dim)
        value = workload.functional(traj)
        record = workload.record(traj, value) if workload.record else {'value': value}
        return value, record

    logger.debug(f"simulating {workload.functional.name} n={workload.n} x{replicates}")
    results = map_replicates(_one, replicates, workers, on_done)
    values = np.array([v for v, _ in results], dtype=float)
    return values, [r for _, r in results]


def sample_values(workload: Workload, count: int, rng: np.random.Generator) -> np.ndarray:
    """Functional values on ``count`` trajectories drawn from a single stream."""
    return np.array([
        workload.functional(sample_trajectory(workload.spec, workload.n, rng, workload.mark_dim))
        for _ in range(count)
    ], dtype=float)


def check_grid(grid: Sequence[int]) -> List[int]:
    """
    :raises InvalidGrid: empty, non-positive or not strictly increasing
    """
    sizes = [int(n) for n in grid]
    if not sizes:
        raise InvalidGrid("The n grid is empty")
    if sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidGrid(f"The n grid must be positive and strictly increasing, got {sizes}")
    return sizes


def summarize_grid(build: Callable[[int], Workload], grid: Sequence[int], replicates: int,
                   rng: np.random.Generator, orders=None) -> Dict[int, EmpiricalSummary]:
    """EmpiricalSummary of the functional values for every n, replicates drawn from ``rng``."""
    out: Dict[int, EmpiricalSummary] = {}
    for n in check_grid(grid):
        workload = build(n)
        summary = summarize(sample_values(workload, replicates, rng), orders)
        if summary.degenerate:
            logger.warning(f"{workload.functional.name} is degenerate at n={n} (zero variance)")
        out[n] = summary
    return out
