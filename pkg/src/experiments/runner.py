"""
Experiment runner.

run() executes one ExperimentConfig and writes, into the output directory:
  results.csv     one ResultRow per metric (standard error or "exact")
  replicates.csv  per-replicate values with the functional's own columns
  stein.csv       flat SteinEstimate rows (stein-bound runs only)
  manifest.json   the resolved config and the package version

Every random stream is derived from (seed, experiment id, n, replicate), so
the files are byte-identical across reruns and worker counts. Rows with
n = 0 are grid-level fits.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from src import __version__
from src.apps.functionals import build_workload
from src.core.hmm import coupling_length, mixing_constants, reconstruct, sample_instructions
from src.core.perturb import (
    estimate_moment_bound,
    estimate_stein_bound,
    sample_deltas,
    variance_lower_bound,
)
from src.core.simulate import map_replicates, replicate_rng, simulate_values
from src.core.stats import (
    fit_exp_rate,
    fit_log_slope,
    kolmogorov_error,
    summarize,
    tail_curve,
    variance_error,
)
from src.errors import ConfigParse, MissingRun, NonPositiveValue, TooFewPoints, ZeroVariance
from src.experiments.config_io import ExperimentConfig, config_to_dict
from src.models import STEIN_FIELDS, ComparisonRow, ResultRow, SteinEstimate, Workload
from src.utils.helpers import ensure_dir, read_results, write_csv, write_json, write_results

logger = logging.getLogger(__name__)

# (label, total) -> callback invoked once per finished unit of work
ProgressFactory = Callable[[str, int], Callable[[], None]]


@dataclass
class RunResult:
    output_dir: str
    rows: List[ResultRow] = field(default_factory=list)
    replicates: List[Dict[str, object]] = field(default_factory=list)
    stein: List[SteinEstimate] = field(default_factory=list)


# ---------------------------------------------------------------------------
#  Shared helpers
# ---------------------------------------------------------------------------

def _noop() -> None:
    pass


def _tick(progress: Optional[ProgressFactory], label: str, total: int) -> Callable[[], None]:
    return progress(label, total) if progress else _noop


def _workload(cfg: ExperimentConfig, n: int) -> Workload:
    setup_rng = replicate_rng(cfg.seed, f"{cfg.experiment_id}/setup", n)
    return build_workload(cfg.functional, cfg.functional_params, cfg.model, n, setup_rng)


def _row(cfg: ExperimentConfig, n: int, metric: str, value, standard_error: Optional[float] = None) -> ResultRow:
    return ResultRow(cfg.experiment_id, cfg.functional, n, cfg.seed, metric, value, standard_error)


def _order_label(r: float) -> str:
    return f"{r:g}"


def _simulate(cfg: ExperimentConfig, workload: Workload, progress: Optional[ProgressFactory],
              out: RunResult) -> np.ndarray:
    advance = _tick(progress, f"{cfg.functional} n={workload.n}", cfg.replicates)
    values, records = simulate_values(workload, cfg.replicates, cfg.seed, cfg.experiment_id, cfg.workers, advance)
    for replicate, record in enumerate(records):
        out.replicates.append({'n': workload.n, 'replicate': replicate, **record})
    return values


# ---------------------------------------------------------------------------
#  Experiment kinds
# ---------------------------------------------------------------------------

def _run_clt(cfg: ExperimentConfig, progress: Optional[ProgressFactory], out: RunResult) -> None:
    """Two summary rows per n: the variance and d_K (or a degenerate flag)."""
    for n in cfg.grid:
        values = _simulate(cfg, _workload(cfg, n), progress, out)
        summary = summarize(values, cfg.moment_orders)
        out.rows.append(_row(cfg, n, 'variance', summary.variance, variance_error(values)))
        if summary.degenerate:
            logger.warning(f"{cfg.functional} is degenerate at n={n}; d_K not computed")
            out.rows.append(_row(cfg, n, 'degenerate', 1))
        else:
            out.rows.append(_row(cfg, n, 'd_K', summary.d_kolmogorov, kolmogorov_error(summary.count)))
        logger.info(f"[{cfg.experiment_id}] n={n} var={summary.variance:.4g} d_K={summary.d_kolmogorov}")


def _run_stein(cfg: ExperimentConfig, progress: Optional[ProgressFactory], out: RunResult) -> None:
    advance = _tick(progress, f"{cfg.functional} bounds", len(cfg.grid))
    for n in cfg.grid:
        workload = _workload(cfg, n)
        rng = replicate_rng(cfg.seed, f"{cfg.experiment_id}/stein", n)
        try:
            est = estimate_stein_bound(
                workload.spec, workload.functional, n, rng,
                sigma_samples=cfg.stein.sigma_samples, outer=cfg.stein.outer,
                inner=cfg.stein.inner, delta_samples=cfg.stein.delta_samples,
                mark_dim=workload.mark_dim,
            )
        except ZeroVariance as e:
            logger.warning(f"[{cfg.experiment_id}] n={n}: {e}")
            out.rows.append(_row(cfg, n, 'zero_variance', 1))
            advance()
            continue
        out.stein.append(est)
        for name in STEIN_FIELDS:
            out.rows.append(_row(cfg, n, name, getattr(est, name), est.standard_errors.get(name, 0.0)))
        if est.kol_bound >= 1:
            logger.warning(f"[{cfg.experiment_id}] n={n}: Kolmogorov bound {est.kol_bound:.3g} is vacuous")
        logger.info(f"[{cfg.experiment_id}] n={n} wass={est.wass_bound:.4g} kol={est.kol_bound:.4g}")
        advance()


def _run_tail(cfg: ExperimentConfig, progress: Optional[ProgressFactory], out: RunResult) -> None:
    """
    Coupling time after a single-entry perturbation: P(s >= tK) for t = 1..T
    against (1 - epsilon)^t, plus the fitted geometric decay rate.
    """
    spec = cfg.model
    mix = mixing_constants(spec)
    steps = np.arange(1, cfg.tail_steps + 1)
    thresholds = steps * mix.K
    for n in cfg.grid:
        last = n - 1 - int(thresholds[-1])
        if last < 1:
            raise ConfigParse(f"n={n} is too short for {cfg.tail_steps} tail steps of K={mix.K}")

        def _one(replicate: int, n=n, last=last) -> Tuple[int, float]:
            rng = replicate_rng(cfg.seed, cfg.experiment_id, n, replicate)
            stack = sample_instructions(spec, n, rng)
            fresh = sample_instructions(spec, n, rng)
            base = reconstruct(stack)
            index = int(base.consulted[int(rng.integers(1, last + 1))])
            return index, coupling_length(stack, index, fresh, base)

        advance = _tick(progress, f"coupling n={n}", cfg.replicates)
        results = map_replicates(_one, cfg.replicates, cfg.workers, advance)
        lengths = np.array([s for _, s in results], dtype=float)
        for replicate, (index, s) in enumerate(results):
            out.replicates.append({'n': n, 'replicate': replicate, 'index': index, 'coupling': s})

        # tail_curve counts |s| >= threshold
        curve = tail_curve(lengths, thresholds)
        out.rows.append(_row(cfg, n, 'K', mix.K))
        out.rows.append(_row(cfg, n, 'epsilon', mix.epsilon))
        for t, p, se in zip(steps, curve.exceedance, curve.standard_errors):
            out.rows.append(_row(cfg, n, f"exceedance_t{t}", float(p), float(se)))
            out.rows.append(_row(cfg, n, f"bound_t{t}", (1.0 - mix.epsilon) ** int(t)))
        positive = [(float(t), float(p)) for t, p in zip(steps, curve.exceedance) if p > 0]
        try:
            rate, _, rate_se = fit_exp_rate(positive)
            out.rows.append(_row(cfg, n, 'tail_slope', rate, rate_se))
        except (TooFewPoints, NonPositiveValue) as e:
            logger.warning(f"[{cfg.experiment_id}] n={n}: no tail slope ({e})")
        if mix.epsilon < 1:
            out.rows.append(_row(cfg, n, 'bound_slope', math.log(1.0 - mix.epsilon)))


def _run_moments(cfg: ExperimentConfig, progress: Optional[ProgressFactory], out: RunResult) -> None:
    """Central moments per n, their log-log growth over the grid and the Efron-Stein moment bounds."""
    moments: Dict[float, List[Tuple[int, float]]] = {r: [] for r in cfg.moment_orders}
    for n in cfg.grid:
        workload = _workload(cfg, n)
        values = _simulate(cfg, workload, progress, out)
        centred = np.abs(values - values.mean())
        for r in cfg.moment_orders:
            powered = centred ** r
            value = float(powered.mean())
            moments[r].append((n, value))
            out.rows.append(_row(cfg, n, f"central_moment_r{_order_label(r)}", value,
                                 float(powered.std(ddof=1) / math.sqrt(len(values)))))

        rng = replicate_rng(cfg.seed, f"{cfg.experiment_id}/deltas", n)
        deltas = sample_deltas(workload.spec, workload.functional, n, cfg.stein.delta_samples, rng, workload.mark_dim)
        per_row = 0.5 * (deltas ** 2).sum(axis=1)
        out.rows.append(_row(cfg, n, 'efron_stein_sum', float(per_row.mean()),
                             float(per_row.std(ddof=1) / math.sqrt(len(per_row)))))
        for r in cfg.moment_orders:
            bound = estimate_moment_bound(deltas, r, rng)
            out.rows.append(_row(cfg, n, f"es_bound_r{_order_label(r)}", bound.value, bound.standard_error))

    for r, points in moments.items():
        try:
            slope, _, slope_se = fit_log_slope(points)
        except (TooFewPoints, NonPositiveValue) as e:
            logger.warning(f"[{cfg.experiment_id}] no growth fit for r={r:g} ({e})")
            continue
        out.rows.append(_row(cfg, 0, f"slope_r{_order_label(r)}", slope, slope_se))


def _run_var_lower(cfg: ExperimentConfig, progress: Optional[ProgressFactory], out: RunResult) -> None:
    for n in cfg.grid:
        workload = _workload(cfg, n)
        values = _simulate(cfg, workload, progress, out)
        variance, variance_se = float(values.var(ddof=1)), variance_error(values)
        rng = replicate_rng(cfg.seed, f"{cfg.experiment_id}/lower", n)
        lower = variance_lower_bound(workload.spec, workload.functional, n, cfg.lower_outer, cfg.lower_inner,
                                     rng, workload.mark_dim)
        slack = 3.0 * math.hypot(lower.standard_error, variance_se)
        out.rows.append(_row(cfg, n, 'variance', variance, variance_se))
        out.rows.append(_row(cfg, n, 'var_lower', lower.value, lower.standard_error))
        out.rows.append(_row(cfg, n, 'dominated', int(lower.value <= variance + slack)))


RUNNERS = {
    'clt': _run_clt,
    'stein-bound': _run_stein,
    'tail': _run_tail,
    'moments': _run_moments,
    'var-lower': _run_var_lower,
}


# ---------------------------------------------------------------------------
#  Public entry points
# ---------------------------------------------------------------------------

def _sort_key(row: ResultRow):
    return row.experiment, row.functional, row.n, row.metric


def run(cfg: ExperimentConfig, progress: Optional[ProgressFactory] = None, write: bool = True) -> RunResult:
    """Execute ``cfg`` and (by default) write its result files."""
    logger.info(f"Running {cfg.kind} experiment '{cfg.experiment_id}' on {cfg.functional} (grid {list(cfg.grid)})")
    out = RunResult(output_dir=cfg.output)
    RUNNERS[cfg.kind](cfg, progress, out)
    out.rows.sort(key=_sort_key)
    out.replicates.sort(key=lambda r: (r['n'], r['replicate']))
    out.stein.sort(key=lambda s: s.n)
    if write:
        write_outputs(cfg, out)
    return out


def _stein_csv_rows(estimates: Iterable[SteinEstimate]) -> List[Dict[str, object]]:
    rows = []
    for est in estimates:
        row: Dict[str, object] = {'name': est.name, 'n': est.n, 'instruction_count': est.instruction_count}
        for name in STEIN_FIELDS:
            row[name] = getattr(est, name)
            row[f"{name}_stderr"] = est.standard_errors.get(name, 0.0)
        rows.append(row)
    return rows


def write_outputs(cfg: ExperimentConfig, out: RunResult) -> List[str]:
    directory = ensure_dir(cfg.output)
    files = ['results.csv']
    write_results(os.path.join(directory, 'results.csv'), out.rows)

    if out.replicates:
        columns = list(dict.fromkeys(k for r in out.replicates for k in r))
        write_csv(os.path.join(directory, 'replicates.csv'), columns, out.replicates)
        files.append('replicates.csv')

    if out.stein:
        columns = ['name', 'n', 'instruction_count']
        for name in STEIN_FIELDS:
            columns += [name, f"{name}_stderr"]
        write_csv(os.path.join(directory, 'stein.csv'), columns, _stein_csv_rows(out.stein))
        files.append('stein.csv')

    files.append('manifest.json')
    write_json(os.path.join(directory, 'manifest.json'), {
        'version': __version__,
        'config': config_to_dict(cfg),
        'files': files,
        'rows': len(out.rows),
    })
    logger.info(f"Wrote {len(out.rows)} result rows to {directory}")
    return files


def compare_bound_vs_empirical(rows: Iterable[ResultRow]) -> List[ComparisonRow]:
    """
    Pair clt d_K rows with stein-bound kol_bound rows of the same (functional, n).

    A pair is dominated when d_K <= kol_bound + 3 combined standard errors and
    vacuous when the bound is at least 1. Degenerate functionals are reported
    with a ZeroVariance note.

    :raises MissingRun: no (functional, n) has both kinds of rows
    """
    empirical: Dict[Tuple[str, int], ResultRow] = {}
    bounds: Dict[Tuple[str, int], ResultRow] = {}
    for row in rows:
        key = (row.functional, row.n)
        if row.metric in ('d_K', 'degenerate'):
            empirical[key] = row
        elif row.metric in ('kol_bound', 'zero_variance'):
            bounds[key] = row

    keys = sorted(set(empirical) & set(bounds))
    if not keys:
        raise MissingRun("Comparison needs a clt run and a stein-bound run for the same functional and n")

    report = []
    for functional, n in keys:
        emp, bound = empirical[(functional, n)], bounds[(functional, n)]
        if emp.metric == 'degenerate' or bound.metric == 'zero_variance':
            report.append(ComparisonRow(functional, n, None, None, None, None, None, note='ZeroVariance'))
            continue
        d_k, kol = float(emp.value), float(bound.value)
        d_err, kol_err = emp.standard_error or 0.0, bound.standard_error or 0.0
        vacuous = kol >= 1.0
        report.append(ComparisonRow(
            functional=functional,
            n=n,
            empirical_d_K=d_k,
            d_K_error=d_err,
            kol_bound=kol,
            kol_error=kol_err,
            dominated=d_k <= kol + 3.0 * math.hypot(d_err, kol_err),
            vacuous=vacuous,
            note='vacuous' if vacuous else '',
        ))
    return report


def compare_runs(run_a: str, run_b: str) -> List[ComparisonRow]:
    """compare_bound_vs_empirical over the results of two run directories."""
    rows = []
    for directory in (run_a, run_b):
        path = os.path.join(directory, 'results.csv')
        if not os.path.isfile(path):
            raise MissingRun(f"No results.csv in {directory}")
        rows.extend(read_results(path))
    return compare_bound_vs_empirical(rows)
