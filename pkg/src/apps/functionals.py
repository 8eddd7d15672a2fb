"""
Named functional registry.

Experiment configs select a functional by name plus a parameter object; the
registry turns that into a Workload (the model the functional is simulated
under, the functional itself, the number of marks it needs and the
per-replicate CSV columns).
"""
from typing import Callable, Dict

import numpy as np

from src.apps import germ_grain, occupancy, voronoi
from src.apps.measures import TwoCellMeasures
from src.errors import ConfigParse, UnknownFunctional
from src.models import Functional, HmmSpec, Workload

Builder = Callable[[dict, HmmSpec, int, np.random.Generator], Workload]


def additive_functional(values) -> Functional:
    """f(X) = sum_i values[X_i]."""
    table = np.asarray(values, dtype=float)
    spread = float(table.max() - table.min()) if table.size else 0.0
    return Functional('builtin.additive', lambda t: float(table[t.observed].sum()), spread)


def constant_functional(value: float = 0.0) -> Functional:
    return Functional('builtin.constant', lambda t: float(value), 0.0)


def _measures(params: dict, spec: HmmSpec) -> TwoCellMeasures:
    if 'measures' in params:
        return TwoCellMeasures.from_dict(params['measures'])
    return TwoCellMeasures.uniform(spec.num_states)


def _additive(params: dict, spec: HmmSpec, n: int, rng: np.random.Generator) -> Workload:
    values = params.get('values', list(range(spec.num_symbols)))
    if len(values) != spec.num_symbols:
        raise ConfigParse(f"builtin.additive needs {spec.num_symbols} values, got {len(values)}")
    return Workload(n=n, spec=spec, functional=additive_functional(values))


def _constant(params: dict, spec: HmmSpec, n: int, rng: np.random.Generator) -> Workload:
    return Workload(n=n, spec=spec, functional=constant_functional(float(params.get('value', 0.0))))


def _germ_grain_config(params: dict, spec: HmmSpec, n: int) -> germ_grain.GermGrainConfig:
    kwargs = {}
    if 'grain_volume_range' in params:
        kwargs['grain_volume_range'] = tuple(params['grain_volume_range'])
    if 'point_budget' in params:
        kwargs['point_budget'] = int(params['point_budget'])
    return germ_grain.GermGrainConfig(
        dimension=int(params.get('dimension', 2)), n=n, measures=_measures(params, spec), **kwargs
    )


def _germ_grain(kind: str) -> Builder:
    def _build(params: dict, spec: HmmSpec, n: int, rng: np.random.Generator) -> Workload:
        cfg = _germ_grain_config(params, spec, n)
        grid = germ_grain.coverage_points(cfg, rng)
        functional = (
            germ_grain.coverage_functional(cfg, grid) if kind == 'f_V' else germ_grain.isolation_functional(cfg)
        )
        return Workload(
            n=n,
            spec=cfg.measures.cell_spec(spec),
            functional=functional,
            mark_dim=cfg.dimension,
            record=germ_grain.replicate_record(cfg, grid),
        )
    return _build


def _voronoi(params: dict, spec: HmmSpec, n: int, rng: np.random.Generator) -> Workload:
    dimension = int(params.get('dimension', 1))
    region = params.get('region', {'kind': 'box', 'lo': [0.0] * dimension, 'hi': [0.5] + [1.0] * (dimension - 1)})
    kwargs = {}
    if 'point_budget' in params:
        kwargs['point_budget'] = int(params['point_budget'])
    if 'method' in params:
        kwargs['method'] = str(params['method'])
    cfg = voronoi.VoronoiConfig(
        dimension=dimension,
        n=n,
        measures=_measures(params, spec),
        region=voronoi.RegionPredicate.from_dict(region),
        **kwargs,
    )
    return voronoi.voronoi_workload(cfg, spec, rng)


def _occupancy(params: dict, spec: HmmSpec, n: int, rng: np.random.Generator) -> Workload:
    cfg = occupancy.OccupancyConfig(
        alpha=float(params.get('alpha', 1.0)),
        n=n,
        fractions=tuple(params.get('fractions', (1.0,))),
    )
    return occupancy.occupancy_workload(cfg, spec)


FUNCTIONALS: Dict[str, Builder] = {
    'builtin.additive': _additive,
    'builtin.constant': _constant,
    'germ_grain.f_V': _germ_grain('f_V'),
    'germ_grain.f_I': _germ_grain('f_I'),
    'voronoi.phi': _voronoi,
    'occupancy.W': _occupancy,
}


def build_workload(name: str, params: dict, spec: HmmSpec, n: int, rng: np.random.Generator) -> Workload:
    """
    :raises UnknownFunctional: name not in the registry
    :raises ConfigParse: malformed parameters
    """
    builder = FUNCTIONALS.get(name)
    if builder is None:
        raise UnknownFunctional(f"Unknown functional '{name}'. Available: {', '.join(sorted(FUNCTIONALS))}")
    try:
        return builder(params, spec, n, rng)
    except (KeyError, TypeError) as e:
        raise ConfigParse(f"Bad parameters for {name}: {e}") from e
