"""
Two-cell piecewise-constant state measures on a cube [0, side]^d.

The cube is split at half of the first axis. State s puts mass w[s, 0] on the
lower half and w[s, 1] on the upper half, uniformly inside each half. A
position is therefore an HMM symbol (the cell) plus d uniform marks.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.config import config
from src.errors import InvalidMeasure, StateMismatch
from src.models import HmmSpec


@dataclass(frozen=True, eq=False)
class TwoCellMeasures:
    weights: np.ndarray                     # shape (|S|, 2)
    density_bounds: Tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        arr = np.array(self.weights, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, 'weights', arr)
        object.__setattr__(self, 'density_bounds', tuple(float(b) for b in self.density_bounds))
        self.validate()

    @classmethod
    def uniform(cls, num_states: int = 1) -> 'TwoCellMeasures':
        return cls(np.full((num_states, 2), 0.5), (1.0, 1.0))

    @classmethod
    def from_dict(cls, data: dict) -> 'TwoCellMeasures':
        try:
            return cls(data['weights'], tuple(data.get('density_bounds', (0.5, 1.5))))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidMeasure(f"Malformed state measures: {e}") from e

    def to_dict(self) -> dict:
        return {'weights': self.weights.tolist(), 'density_bounds': list(self.density_bounds)}

    @property
    def num_states(self) -> int:
        return self.weights.shape[0]

    def validate(self) -> None:
        """
        Each row is a probability vector and every cell density lies in
        [c_m, c_M] relative to the uniform density, i.e. w in [c_m/2, c_M/2].
        """
        c_min, c_max = self.density_bounds
        if not 0 < c_min <= c_max:
            raise InvalidMeasure(f"Density bounds must satisfy 0 < c_m <= c_M, got {self.density_bounds}")
        if self.weights.ndim != 2 or self.weights.shape[1] != 2 or self.weights.shape[0] < 1:
            raise InvalidMeasure(f"Cell weights must have shape (|S|, 2), got {self.weights.shape}")
        tol = config.stochastic_tol
        if np.any(~(np.abs(self.weights.sum(axis=1) - 1.0) <= tol)):
            raise InvalidMeasure("Cell weights of every state must sum to 1")
        low, high = c_min / 2.0 - tol, c_max / 2.0 + tol
        if np.any(self.weights < low) or np.any(self.weights > high):
            raise InvalidMeasure(
                f"Cell weights {self.weights.tolist()} leave the density band [{c_min}, {c_max}]"
            )

    def cell_spec(self, spec: HmmSpec) -> HmmSpec:
        """The hidden chain of ``spec`` emitting cell indices with these weights."""
        if spec.num_states != self.num_states:
            raise StateMismatch(
                f"Model has {spec.num_states} states but {self.num_states} state measures were given"
            )
        return spec.with_emission(self.weights)


def positions(cells, marks, side: float) -> np.ndarray:
    """
    Map (cell, marks) pairs to points of [0, side]^d.

    :param cells: (n,) cell indices in {0, 1}
    :param marks: (n, d) uniform variates
    """
    u = np.asarray(marks, dtype=float)
    points = u * side
    if points.shape[1]:
        points[:, 0] = (np.asarray(cells, dtype=float) + u[:, 0]) * (side / 2.0)
    return points
