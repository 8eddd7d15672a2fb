"""
Instruction-stack representation of a hidden Markov model.

A trajectory (Z, X) of length n is rebuilt deterministically from a vector R
of |S|(n-1)+1 independent instructions: entry 0 starts the chain and, for
every later step, the chain reads the entry reserved for (step, current state).
Entries that are never read are kept because they matter once R is perturbed.
"""
import json
import logging
import math
from typing import Optional, Tuple, Union

import numpy as np

from src.config import config
from src.errors import (
    BadDimensions,
    ConfigParse,
    IndexOutOfRange,
    LengthMismatch,
    NegativeEntry,
    NonStochasticRow,
    NotMixing,
)
from src.models import HmmSpec, InstructionStack, MixingConstants, PerturbationSet, Trajectory

logger = logging.getLogger(__name__)

# Returned by coupling_length when the hidden chains never re-meet before step n.
NEVER = math.inf


# ---------------------------------------------------------------------------
#  Validation and chain constants
# ---------------------------------------------------------------------------

def validate_spec(spec: HmmSpec) -> None:
    """
    Check shapes, signs and row sums of (mu, P, Q).

    :raises BadDimensions: shapes disagree with num_states / num_symbols
    :raises NegativeEntry: any probability is negative
    :raises NonStochasticRow: a row (or mu) misses 1 by more than the tolerance
    """
    s, a = spec.num_states, spec.num_symbols
    if s < 1 or a < 1:
        raise BadDimensions(f"Need at least one state and one symbol, got |S|={s}, |A|={a}")
    if spec.initial.shape != (s,):
        raise BadDimensions(f"mu has shape {spec.initial.shape}, expected ({s},)")
    if spec.transition.shape != (s, s):
        raise BadDimensions(f"P has shape {spec.transition.shape}, expected ({s}, {s})")
    if spec.emission.shape != (s, a):
        raise BadDimensions(f"Q has shape {spec.emission.shape}, expected ({s}, {a})")

    for label, arr in (('mu', spec.initial), ('P', spec.transition), ('Q', spec.emission)):
        if np.any(arr < 0):
            raise NegativeEntry(f"{label} has a negative entry (min {arr.min()})")

    tol = config.stochastic_tol
    if not abs(spec.initial.sum() - 1.0) <= tol:
        raise NonStochasticRow(f"mu sums to {spec.initial.sum()!r}")
    for label, mat in (('P', spec.transition), ('Q', spec.emission)):
        sums = mat.sum(axis=1)
        bad = np.nonzero(~(np.abs(sums - 1.0) <= tol))[0]
        if bad.size:
            row = int(bad[0])
            raise NonStochasticRow(f"{label} row {row} sums to {sums[row]!r}")


def mixing_constants(spec: HmmSpec, k_max: Optional[int] = None) -> MixingConstants:
    """
    Smallest K <= k_max with every entry of P^K positive, and epsilon = min entry of P^K.

    :raises NotMixing: no such K (periodic or reducible chain)
    """
    validate_spec(spec)
    if k_max is None:
        k_max = config.k_max_factor * spec.num_states ** 2
    power = spec.transition.copy()
    for k in range(1, k_max + 1):
        eps = float(power.min())
        if eps > 0:
            logger.debug(f"mixing constants K={k}, epsilon={eps}")
            return MixingConstants(K=k, epsilon=eps)
        power = power @ spec.transition
    raise NotMixing(f"No power of P up to k_max={k_max} is strictly positive")


def stationary_distribution(transition, tol: Optional[float] = None, max_iter: Optional[int] = None) -> np.ndarray:
    """Stationary vector of P by power iteration (averaged steps, so periodic chains converge too)."""
    tol = config.stationary_tol if tol is None else tol
    max_iter = config.stationary_max_iter if max_iter is None else max_iter
    p = np.asarray(transition, dtype=float)
    lazy = 0.5 * (p + np.eye(p.shape[0]))
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        nxt = pi @ lazy
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= tol:
            return nxt
        pi = nxt
    logger.warning(f"Stationary power iteration stopped after {max_iter} steps")
    return pi


def stationary_spec(transition, emission) -> HmmSpec:
    """HmmSpec whose initial law is the stationary vector of P."""
    pi = stationary_distribution(transition)
    return HmmSpec.from_arrays(pi, transition, emission)


# ---------------------------------------------------------------------------
#  Sampling and the translation map
# ---------------------------------------------------------------------------

def _draw_categorical(cdf_table: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw: out[k] = first j with cdf_table[rows[k], j] > u[k]."""
    out = np.empty(len(u), dtype=np.int64)
    last = cdf_table.shape[1] - 1
    for row in np.unique(rows):
        mask = rows == row
        out[mask] = np.searchsorted(cdf_table[row], u[mask], side='right')
    return np.minimum(out, last)


def sample_instructions(spec: HmmSpec, n: int, rng: np.random.Generator, mark_dim: int = 0) -> InstructionStack:
    """
    Draw the independent instructions R_0..R_{|S|(n-1)}.

    R_0 has law mu(s) Q[s, x]; the entry for (step i, from-state s') has law
    P[s', s] Q[s, x]. Each entry also gets ``mark_dim`` uniform variates.
    """
    if n < 1:
        raise ValueError(f"Trajectory length must be >= 1, got {n}")
    s = spec.num_states
    m = spec.instruction_count(n)

    # Row 0 of the table is mu, row 1 + s' is P[s'].
    start_table = np.cumsum(np.vstack([spec.initial, spec.transition]), axis=1)
    rows = np.zeros(m, dtype=np.int64)
    rows[1:] = 1 + (np.arange(m - 1) % s)

    u_state = rng.random(m)
    u_symbol = rng.random(m)
    marks = rng.random((m, mark_dim))

    states = _draw_categorical(start_table, rows, u_state)
    symbols = _draw_categorical(np.cumsum(spec.emission, axis=1), states, u_symbol)
    return InstructionStack(n=n, num_states=s, states=states, symbols=symbols, marks=marks)


def reconstruct(stack: InstructionStack) -> Trajectory:
    """gamma: rebuild (Z, X) by reading one instruction per step."""
    n, s = stack.n, stack.num_states
    if s == 1:
        consulted = np.arange(n)
    else:
        states = stack.states.tolist()
        z = states[0]
        consulted_list = [0] * n
        for t in range(1, n):
            k = (t - 1) * s + z + 1
            consulted_list[t] = k
            z = states[k]
        consulted = np.array(consulted_list, dtype=np.int64)
    return Trajectory(
        hidden=stack.states[consulted],
        observed=stack.symbols[consulted],
        marks=stack.marks[consulted],
        consulted=consulted,
    )


def sample_trajectory(spec: HmmSpec, n: int, rng: np.random.Generator, mark_dim: int = 0) -> Trajectory:
    return reconstruct(sample_instructions(spec, n, rng, mark_dim))


def sample_emissions(spec: HmmSpec, hidden, rng: np.random.Generator, mark_dim: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Fresh observed symbols and marks given a hidden path."""
    hidden = np.asarray(hidden, dtype=np.int64)
    symbols = _draw_categorical(np.cumsum(spec.emission, axis=1), hidden, rng.random(len(hidden)))
    marks = rng.random((len(hidden), mark_dim))
    return symbols, marks


# ---------------------------------------------------------------------------
#  Perturbations
# ---------------------------------------------------------------------------

def _check_compatible(stack: InstructionStack, fresh: InstructionStack) -> None:
    if (len(stack) != len(fresh) or stack.n != fresh.n
            or stack.num_states != fresh.num_states or stack.mark_dim != fresh.mark_dim):
        raise LengthMismatch(
            f"Instruction stacks differ: {len(stack)} vs {len(fresh)} entries "
            f"(n={stack.n}/{fresh.n}, marks={stack.mark_dim}/{fresh.mark_dim})"
        )


def _check_index(stack: InstructionStack, index: int) -> None:
    if not 0 <= index < len(stack):
        raise IndexOutOfRange(f"Instruction index {index} outside 0..{len(stack) - 1}")


def perturb(stack: InstructionStack, A: PerturbationSet, fresh: InstructionStack) -> InstructionStack:
    """R^A: entries in A come from ``fresh``, all others from ``stack``."""
    _check_compatible(stack, fresh)
    mask = np.zeros(len(stack), dtype=bool)
    if len(A):
        _check_index(stack, A.indices[-1])
        mask[list(A.indices)] = True
    return InstructionStack(
        n=stack.n,
        num_states=stack.num_states,
        states=np.where(mask, fresh.states, stack.states),
        symbols=np.where(mask, fresh.symbols, stack.symbols),
        marks=np.where(mask[:, None], fresh.marks, stack.marks),
    )


def perturbed_trajectory(stack: InstructionStack, base: Trajectory, index: int,
                         fresh: InstructionStack) -> Trajectory:
    """
    reconstruct(perturb(stack, {index}, fresh)) without re-walking the whole path.

    Steps before the one that reads ``index`` are unchanged, and once the two
    hidden chains sit in the same state they read the same entries again.
    """
    _check_compatible(stack, fresh)
    _check_index(stack, index)
    j = stack.step_of(index)
    if base.consulted[j] != index:
        return base

    n, s = stack.n, stack.num_states
    hidden = base.hidden.copy()
    observed = base.observed.copy()
    marks = base.marks.copy()
    consulted = base.consulted.copy()

    hidden[j] = fresh.states[index]
    observed[j] = fresh.symbols[index]
    marks[j] = fresh.marks[index]
    t = j
    while t + 1 < n and hidden[t] != base.hidden[t]:
        k = t * s + int(hidden[t]) + 1
        t += 1
        hidden[t] = stack.states[k]
        observed[t] = stack.symbols[k]
        marks[t] = stack.marks[k]
        consulted[t] = k
    return Trajectory(hidden=hidden, observed=observed, marks=marks, consulted=consulted)


def coupling_length(stack: InstructionStack, i: int, fresh: InstructionStack,
                    base: Optional[Trajectory] = None) -> Union[int, float]:
    """
    Steps s >= 0 until the original and the i-perturbed hidden chains agree.

    :return: 0 when entry i is never read, NEVER (math.inf) when the chains
             do not re-meet before step n
    """
    _check_index(stack, i)
    if base is None:
        base = reconstruct(stack)
    j = stack.step_of(i)
    if base.consulted[j] != i:
        return 0
    other = perturbed_trajectory(stack, base, i, fresh)
    agree = np.nonzero(base.hidden[j:] == other.hidden[j:])[0]
    return int(agree[0]) if agree.size else NEVER


# ---------------------------------------------------------------------------
#  JSON form: {"states", "symbols", "mu", "P", "Q"}
# ---------------------------------------------------------------------------

def spec_to_dict(spec: HmmSpec) -> dict:
    return {
        'states': spec.num_states,
        'symbols': spec.num_symbols,
        'mu': spec.initial.tolist(),
        'P': spec.transition.tolist(),
        'Q': spec.emission.tolist(),
    }


def spec_from_dict(data: dict) -> HmmSpec:
    try:
        spec = HmmSpec(
            num_states=int(data['states']),
            num_symbols=int(data['symbols']),
            initial=data['mu'],
            transition=data['P'],
            emission=data['Q'],
        )
    except KeyError as e:
        raise ConfigParse(f"Model spec is missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"Model spec is malformed: {e}") from e
    validate_spec(spec)
    return spec


def dumps_spec(spec: HmmSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2)


def loads_spec(text: str) -> HmmSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParse(f"Model spec is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigParse("Model spec must be a JSON object")
    return spec_from_dict(data)


def load_spec(path: str) -> HmmSpec:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigParse(f"Could not read model spec {path}: {e}") from e
    return loads_spec(text)


def dump_spec(spec: HmmSpec, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        f.write(dumps_spec(spec))
        f.write('\n')
