import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv
from rich.logging import RichHandler
from rich.panel import Panel

from src import __version__
from src.config import config
from src.errors import ConfigError
from src.ui.cli import console, display_error
from src.ui.flow import compare_command, run_command, validate_command


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='stein-hmm',
        description='Seeded experiments for normal approximation of HMM functionals.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--log-level', default=None, help='Overrides STEIN_HMM_LOG_LEVEL (default INFO)')
    sub = parser.add_subparsers(dest='command', required=True)

    run_p = sub.add_parser('run', help='Run an experiment config (or re-run a manifest)')
    run_p.add_argument('config_path')
    run_p.add_argument('--workers', type=int, default=None, help='Replicate threads (overrides config and env)')
    run_p.add_argument('--output', default=None, help='Output directory (overrides config)')

    validate_p = sub.add_parser('validate', help='Check a config and its model spec')
    validate_p.add_argument('config_path')

    compare_p = sub.add_parser('compare', help='Compare a clt run with a stein-bound run')
    compare_p.add_argument('run_a')
    compare_p.add_argument('run_b')
    return parser


def _env_workers() -> Optional[int]:
    raw = os.getenv('STEIN_HMM_WORKERS')
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        logging.getLogger(__name__).warning(f"Ignoring STEIN_HMM_WORKERS={raw!r} (not an integer)")
        return None


def setup_logging(level: Optional[str]) -> None:
    level = (level or os.getenv('STEIN_HMM_LOG_LEVEL') or config.log_level).upper()
    logging.basicConfig(
        level=level,
        format='%(message)s',
        datefmt='[%X]',
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    console.print(Panel.fit(f"[bold blue]stein-hmm[/bold blue] [dim]{__version__}[/dim]"))

    try:
        if args.command == 'run':
            workers = args.workers if args.workers is not None else _env_workers()
            run_command(args.config_path, workers=workers, output=args.output)
        elif args.command == 'validate':
            validate_command(args.config_path)
        elif args.command == 'compare':
            compare_command(args.run_a, args.run_b)
    except ConfigError as e:
        display_error(type(e).__name__, str(e))
        return config.exit_config_error
    except Exception as e:
        logging.getLogger(__name__).debug("Unhandled error", exc_info=True)
        display_error(type(e).__name__, str(e))
        return config.exit_runtime_error

    console.print("[bold green]Done![/bold green]")
    return 0


if __name__ == '__main__':
    try:
        sys.exit(main())
    except (KeyboardInterrupt, EOFError):
        console.print("\n[yellow]⚠ Operation cancelled by user.[/yellow]")
        sys.exit(130)
