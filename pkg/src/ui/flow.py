"""
Command flow controller for stein-hmm.

Owns the per-command orchestration: path checks, config loading, running
with live progress, and rendering of the results.

main.py is the thin entry point that owns one-time setup (environment,
logging, argument parsing, exit codes) and delegates each command here.
"""
import dataclasses
import os
from typing import Optional

from rich.panel import Panel

from src.errors import ConfigParse, MissingRun
from src.experiments.config_io import ExperimentConfig, load_config
from src.experiments.runner import compare_runs, run
from src.ui.cli import (
    console,
    display_comparison,
    display_config_summary,
    display_results,
    run_progress,
    spinner,
)
from src.utils.validators import validate_config_path, validate_run_dir


# ---------------------------------------------------------------------------
#  Shared helpers
# ---------------------------------------------------------------------------

def _load(path: str) -> ExperimentConfig:
    ok, err = validate_config_path(path)
    if not ok:
        raise ConfigParse(err)
    return load_config(path.strip().strip('"').strip("'"))


def _summary(cfg: ExperimentConfig) -> dict:
    return {
        'id': cfg.experiment_id,
        'kind': cfg.kind,
        'functional': cfg.functional,
        'model': f"|S|={cfg.model.num_states}, |A|={cfg.model.num_symbols}",
        'grid': ", ".join(str(n) for n in cfg.grid),
        'replicates': cfg.replicates,
        'seed': cfg.seed,
        'output': cfg.output,
    }


# ---------------------------------------------------------------------------
#  Commands
# ---------------------------------------------------------------------------

def run_command(path: str, workers: Optional[int] = None, output: Optional[str] = None) -> None:
    """Load, run and report one experiment config (or manifest)."""
    cfg = _load(path)
    if workers is not None:
        cfg = dataclasses.replace(cfg, workers=workers)
    if output is not None:
        cfg = dataclasses.replace(cfg, output=output)
    display_config_summary(_summary(cfg))

    with run_progress() as progress:
        result = run(cfg, progress=progress)

    display_results(result.rows, title=f"{cfg.kind}: {cfg.experiment_id}")
    console.print(f"[green]✓ Wrote results to[/green] {os.path.abspath(result.output_dir)}")


def validate_command(path: str) -> None:
    """Parse the config and its model without running anything."""
    with spinner("Validating config..."):
        cfg = _load(path)
    display_config_summary(_summary(cfg))
    console.print("[green]✓ Config is valid[/green]")


def compare_command(run_a: str, run_b: str) -> None:
    for directory in (run_a, run_b):
        ok, err = validate_run_dir(directory)
        if not ok:
            raise MissingRun(err)
    rows = compare_runs(run_a, run_b)
    display_comparison(rows)
    exceeded = [r for r in rows if r.dominated is False]
    if exceeded:
        console.print(Panel(
            "\n".join(f"{r.functional} n={r.n}: d_K {r.empirical_d_K:.4g} > bound {r.kol_bound:.4g}" for r in exceeded),
            title="Bound exceeded", border_style="yellow",
        ))
