from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Tuple, TypedDict, Union

import numpy as np

from src.errors import InvalidPerturbation


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HmmSpec:
    """Hidden Markov model (mu, P, Q) over states 0..|S|-1 and symbols 0..|A|-1."""
    num_states: int
    num_symbols: int
    initial: np.ndarray      # mu, shape (|S|,)
    transition: np.ndarray   # P, shape (|S|, |S|)
    emission: np.ndarray     # Q, shape (|S|, |A|)

    def __post_init__(self):
        object.__setattr__(self, 'initial', _frozen_array(self.initial, float))
        object.__setattr__(self, 'transition', _frozen_array(self.transition, float))
        object.__setattr__(self, 'emission', _frozen_array(self.emission, float))

    @classmethod
    def from_arrays(cls, initial, transition, emission) -> 'HmmSpec':
        emission = np.asarray(emission, dtype=float)
        transition = np.asarray(transition, dtype=float)
        num_states = transition.shape[0] if transition.ndim == 2 else len(transition)
        num_symbols = emission.shape[1] if emission.ndim == 2 else 0
        return cls(num_states, num_symbols, initial, transition, emission)

    def with_emission(self, emission) -> 'HmmSpec':
        """Same hidden chain, different emission matrix (and alphabet)."""
        return HmmSpec.from_arrays(self.initial, self.transition, emission)

    def instruction_count(self, n: int) -> int:
        return self.num_states * (n - 1) + 1


@dataclass(frozen=True, eq=False)
class InstructionStack:
    """
    The instruction vector R of length |S|(n-1)+1.

    Entry k holds a (state, symbol) pair plus ``mark_dim`` auxiliary uniform
    variates. Entry 0 starts the chain; entry (i-1)|S| + s + 1 is read at
    step i when the hidden chain sits in state s.
    """
    n: int
    num_states: int
    states: np.ndarray
    symbols: np.ndarray
    marks: np.ndarray  # shape (m, mark_dim), mark_dim may be 0

    def __post_init__(self):
        object.__setattr__(self, 'states', _frozen_array(self.states, np.int64))
        object.__setattr__(self, 'symbols', _frozen_array(self.symbols, np.int64))
        marks = np.asarray(self.marks, dtype=float)
        if marks.ndim == 1:
            marks = marks.reshape(len(self.states), -1)
        object.__setattr__(self, 'marks', _frozen_array(marks, float))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def mark_dim(self) -> int:
        return self.marks.shape[1]

    @property
    def entries(self) -> List[Tuple[int, int]]:
        return list(zip(self.states.tolist(), self.symbols.tolist()))

    def step_of(self, index: int) -> int:
        """Trajectory step (0-based) at which entry ``index`` can be consulted."""
        return 0 if index == 0 else 1 + (index - 1) // self.num_states

    def from_state_of(self, index: int) -> Optional[int]:
        """Hidden state that must be occupied for entry ``index`` to be read (None for entry 0)."""
        return None if index == 0 else (index - 1) % self.num_states


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Hidden path Z and observed sequence X (symbols plus marks) of length n."""
    hidden: np.ndarray
    observed: np.ndarray
    marks: np.ndarray
    consulted: Optional[np.ndarray] = None  # entry index read at each step

    def __len__(self) -> int:
        return len(self.observed)


@dataclass(frozen=True)
class PerturbationSet:
    """Strictly increasing set A of instruction indices to resample."""
    indices: Tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise InvalidPerturbation(f"Negative instruction index in {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidPerturbation(f"Indices must be strictly increasing: {idx}")
        object.__setattr__(self, 'indices', idx)

    @classmethod
    def of(cls, indices: Iterable[int]) -> 'PerturbationSet':
        return cls(tuple(sorted(set(int(i) for i in indices))))

    def __contains__(self, index: int) -> bool:
        return index in self.indices

    def __len__(self) -> int:
        return len(self.indices)

    def union(self, index: int) -> 'PerturbationSet':
        return PerturbationSet.of(self.indices + (index,))


@dataclass(frozen=True)
class MixingConstants:
    K: int
    epsilon: float


@dataclass(frozen=True)
class Functional:
    """
    Deterministic map f from an observed sequence to a real number.

    ``evaluate`` receives a Trajectory and must only read its observed symbols
    and marks; ``lipschitz_constant`` is the Hamming-Lipschitz constant when known.
    """
    name: str
    evaluate: Callable[[Trajectory], float]
    lipschitz_constant: Optional[float] = None

    def __call__(self, trajectory: Trajectory) -> float:
        return float(self.evaluate(trajectory))


class Estimate(NamedTuple):
    value: float
    standard_error: float


@dataclass(frozen=True)
class DeltaMoments:
    """Per-instruction estimates of E|Delta_i h(R)|^r."""
    order: float
    estimates: np.ndarray
    standard_errors: np.ndarray


@dataclass(frozen=True)
class TailCurve:
    thresholds: np.ndarray
    exceedance: np.ndarray
    standard_errors: np.ndarray


@dataclass(frozen=True)
class SteinComponents:
    sigma2: float
    var_T: float
    var_Tprime: float
    sum_abs3: float
    sum_sqrt6: float
    standard_errors: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class SteinEstimate:
    sigma2: float
    var_T: float
    var_Tprime: float
    sum_abs3: float
    sum_sqrt6: float
    wass_bound: float
    kol_bound: float
    standard_errors: Dict[str, float]
    instruction_count: int
    name: str = ''
    n: int = 0


@dataclass(frozen=True)
class SteinSettings:
    """Sample sizes for estimate_stein_bound."""
    sigma_samples: int = 2000
    outer: int = 100
    inner: int = 20
    delta_samples: int = 200


STEIN_FIELDS = ('sigma2', 'var_T', 'var_Tprime', 'sum_abs3', 'sum_sqrt6', 'wass_bound', 'kol_bound')


@dataclass(frozen=True)
class EmpiricalSummary:
    count: int
    mean: float
    variance: float
    central_moments: Dict[float, float]
    d_kolmogorov: Optional[float]  # None when the sample is degenerate
    degenerate: bool = False


@dataclass(frozen=True)
class Workload:
    """Everything needed to simulate one functional at one size n."""
    n: int
    spec: HmmSpec
    functional: Functional
    mark_dim: int = 0
    record: Optional[Callable[[Trajectory, float], Dict[str, object]]] = None


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    functional: str
    n: int
    seed: int
    metric: str
    value: Union[float, str]
    standard_error: Optional[float] = None  # None means the value is exact


class ResultCsvRow(TypedDict):
    experiment: str
    functional: str
    n: int
    seed: int
    metric: str
    value: str
    standard_error: str


@dataclass(frozen=True)
class ComparisonRow:
    """Empirical d_K against the estimated Kolmogorov bound for one (functional, n)."""
    functional: str
    n: int
    empirical_d_K: Optional[float]
    d_K_error: Optional[float]
    kol_bound: Optional[float]
    kol_error: Optional[float]
    dominated: Optional[bool]
    vacuous: bool = False
    note: str = ''
