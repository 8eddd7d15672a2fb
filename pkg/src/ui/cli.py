from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List

from rich.console import Console
from rich.panel import Panel
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)
from rich.table import Table

from src.models import ComparisonRow, ResultRow
from src.utils.helpers import format_metric

# Global console instance for UI rendering
console = Console()


def make_advance(progress: Progress, task_id: TaskID) -> Callable[[], None]:
    """Callback that moves one Rich task forward by one unit (safe from worker threads)."""
    def advance() -> None:
        progress.advance(task_id)
    return advance


@contextmanager
def run_progress() -> Iterator[Callable[[str, int], Callable[[], None]]]:
    """
    Live progress display for one run.

    Yields a factory (label, total) -> advance callback; each call adds a bar.
    """
    progress = Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        TimeRemainingColumn(),
        console=console,
        transient=False,
    )
    with progress:
        def factory(label: str, total: int) -> Callable[[], None]:
            return make_advance(progress, progress.add_task(f"[cyan]{label}", total=total))
        yield factory


@contextmanager
def spinner(message: str):
    """Context manager: spinner + elapsed time."""
    progress = Progress(
        SpinnerColumn(),
        TextColumn(message),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    )
    with progress as p:
        p.add_task("", total=None)
        yield p


def display_error(title: str, message: str) -> None:
    console.print(Panel(f"[red]{message}[/red]", title=f"✗ {title}", border_style="red"))


def display_results(rows: List[ResultRow], title: str = "Results") -> None:
    """One table row per metric; grid-level fits (n = 0) are shown as 'grid'."""
    table = Table(title=title, show_header=True, header_style="bold magenta")
    table.add_column("n", justify="right", style="dim")
    table.add_column("Functional", style="cyan")
    table.add_column("Metric", style="green")
    table.add_column("Value ± s.e.", justify="right")

    for r in rows:
        table.add_row(
            str(r.n) if r.n else "grid",
            r.functional,
            r.metric,
            format_metric(r.value, r.standard_error, rich=True),
        )
    console.print(table)


def display_comparison(rows: List[ComparisonRow]) -> None:
    table = Table(title="Bound vs empirical d_K", show_header=True, header_style="bold magenta")
    table.add_column("Functional", style="cyan")
    table.add_column("n", justify="right", style="dim")
    table.add_column("Empirical d_K", justify="right")
    table.add_column("Kolmogorov bound", justify="right")
    table.add_column("Status", justify="center")

    for r in rows:
        if r.dominated is None:
            status = f"[yellow]⚠ {r.note}[/yellow]"
            empirical = bound = "—"
        else:
            empirical = format_metric(r.empirical_d_K, r.d_K_error)
            bound = format_metric(r.kol_bound, r.kol_error)
            if r.vacuous:
                status = "[yellow]✓ vacuous[/yellow]"
            elif r.dominated:
                status = "[green]✓ dominated[/green]"
            else:
                status = "[red]✗ exceeded[/red]"
        table.add_row(r.functional, str(r.n), empirical, bound, status)
    console.print(table)


def display_config_summary(summary: Dict[str, object]) -> None:
    lines = "\n".join(f"[bold]{key}:[/bold] {value}" for key, value in summary.items())
    console.print(Panel.fit(lines, title="Config", border_style="blue"))
