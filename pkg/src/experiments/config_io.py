"""
Experiment configuration: JSON in, validated ExperimentConfig out.

A config names the experiment kind, the model (a path to a model JSON file,
relative to the config, or an inline object), the functional and its
parameters, the n grid, the replicate count, the master seed and the output
directory. A run manifest is accepted as well: its "config" object is the
fully resolved config of that run.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

from src.apps.functionals import FUNCTIONALS
from src.config import config
from src.core.hmm import load_spec, spec_from_dict, spec_to_dict
from src.core.simulate import check_grid
from src.errors import ConfigParse, InsufficientSamples, UnknownFunctional
from src.models import HmmSpec, SteinSettings

logger = logging.getLogger(__name__)

KINDS = ('clt', 'stein-bound', 'tail', 'moments', 'var-lower')


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    experiment_id: str
    kind: str
    model: HmmSpec
    functional: str
    functional_params: dict
    grid: Tuple[int, ...]
    replicates: int
    seed: int
    output: str
    workers: Optional[int] = None
    stein: SteinSettings = field(default_factory=SteinSettings)
    tail_steps: int = 8
    moment_orders: Tuple[float, ...] = config.moment_orders
    lower_outer: int = 20
    lower_inner: int = 10


def _require(data: dict, key: str):
    if key not in data:
        raise ConfigParse(f"Config is missing required field '{key}'")
    return data[key]


def _int(value, label: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigParse(f"'{label}' must be an integer, got {value!r}")
    return value


def parse_config(data: dict, base_dir: str = '.') -> ExperimentConfig:
    """
    Validate a decoded JSON config.

    :param base_dir: directory that relative model paths are resolved against
    :raises ConfigParse: missing or malformed fields
    :raises UnknownFunctional: functional name not registered
    """
    if not isinstance(data, dict):
        raise ConfigParse("Config must be a JSON object")
    if 'config' in data and 'kind' not in data:
        data = data['config']

    kind = _require(data, 'kind')
    if kind not in KINDS:
        raise ConfigParse(f"Unknown experiment kind '{kind}', expected one of {', '.join(KINDS)}")

    model = _require(data, 'model')
    if isinstance(model, str):
        spec = load_spec(model if os.path.isabs(model) else os.path.join(base_dir, model))
    elif isinstance(model, dict):
        spec = spec_from_dict(model)
    else:
        raise ConfigParse("'model' must be a path or an object")

    functional = data.get('functional', {'name': 'builtin.constant'} if kind == 'tail' else None)
    if functional is None:
        raise ConfigParse(f"A '{kind}' experiment needs a 'functional'")
    if isinstance(functional, str):
        functional = {'name': functional}
    params = dict(functional)
    name = params.pop('name', None)
    if name not in FUNCTIONALS:
        raise UnknownFunctional(f"Unknown functional '{name}'. Available: {', '.join(sorted(FUNCTIONALS))}")

    seed = _int(_require(data, 'seed'), 'seed')
    replicates = _int(_require(data, 'replicates'), 'replicates')
    if replicates < 2:
        raise InsufficientSamples(f"'replicates' must be >= 2, got {replicates}")
    grid = tuple(check_grid([_int(n, 'grid') for n in _require(data, 'grid')]))

    workers = data.get('workers')
    stein = data.get('stein', {})
    lower = data.get('lower', {})
    try:
        return ExperimentConfig(
            experiment_id=str(data.get('id', f"{kind}-{name}")),
            kind=kind,
            model=spec,
            functional=name,
            functional_params=params,
            grid=grid,
            replicates=replicates,
            seed=seed,
            output=str(_require(data, 'output')),
            workers=None if workers is None else _int(workers, 'workers'),
            stein=SteinSettings(**stein),
            tail_steps=_int(data.get('tail_steps', 8), 'tail_steps'),
            moment_orders=tuple(float(r) for r in data.get('moment_orders', config.moment_orders)),
            lower_outer=_int(lower.get('outer', 20), 'lower.outer'),
            lower_inner=_int(lower.get('inner', 10), 'lower.inner'),
        )
    except TypeError as e:
        raise ConfigParse(f"Malformed config: {e}") from e


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigParse(f"Could not read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigParse(f"Config {path} is not valid JSON: {e}") from e
    logger.debug(f"loaded config {path}")
    return parse_config(data, os.path.dirname(os.path.abspath(path)))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config with the model inlined; parse_config(config_to_dict(c)) rebuilds c."""
    return {
        'id': cfg.experiment_id,
        'kind': cfg.kind,
        'model': spec_to_dict(cfg.model),
        'functional': {'name': cfg.functional, **cfg.functional_params},
        'grid': list(cfg.grid),
        'replicates': cfg.replicates,
        'seed': cfg.seed,
        'output': cfg.output,
        'workers': cfg.workers,
        'stein': {
            'sigma_samples': cfg.stein.sigma_samples,
            'outer': cfg.stein.outer,
            'inner': cfg.stein.inner,
            'delta_samples': cfg.stein.delta_samples,
        },
        'tail_steps': cfg.tail_steps,
        'moment_orders': list(cfg.moment_orders),
        'lower': {'outer': cfg.lower_outer, 'inner': cfg.lower_inner},
    }
