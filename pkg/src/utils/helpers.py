import csv
import json
import math
import os
from typing import Dict, Iterable, List, Optional, Sequence, Union

from src.errors import ConfigParse
from src.models import ResultCsvRow, ResultRow

RESULT_FIELDS = ('experiment', 'functional', 'n', 'seed', 'metric', 'value', 'standard_error')
EXACT = 'exact'


def format_value(value: Union[float, int, str, bool, None]) -> str:
    """
    Stable text form for CSV cells.

    Floats use repr (shortest round-trip form), so rerunning with the same
    seed gives byte-identical files.
    """
    if value is None:
        return ''
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, (int, str)):
        return str(value)
    value = float(value)
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return repr(value)


def parse_value(text: str) -> Union[float, str]:
    try:
        return float(text)
    except ValueError:
        return text


def result_to_csv(row: ResultRow) -> ResultCsvRow:
    return ResultCsvRow(
        experiment=row.experiment,
        functional=row.functional,
        n=row.n,
        seed=row.seed,
        metric=row.metric,
        value=format_value(row.value),
        standard_error=EXACT if row.standard_error is None else format_value(row.standard_error),
    )


def write_csv(path: str, fieldnames: Sequence[str], rows: Iterable[Dict[str, object]]) -> None:
    """RFC 4180 CSV with a header row and CRLF line endings."""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator='\r\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_value(v) if not isinstance(v, str) else v for k, v in row.items()})


def write_results(path: str, rows: Iterable[ResultRow]) -> None:
    write_csv(path, RESULT_FIELDS, (result_to_csv(r) for r in rows))


def read_results(path: str) -> List[ResultRow]:
    """
    Parse a results.csv written by write_results.

    :raises ConfigParse: unreadable file or missing columns
    """
    try:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            reader = csv.DictReader(f)
            missing = set(RESULT_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise ConfigParse(f"{path} lacks columns: {', '.join(sorted(missing))}")
            return [
                ResultRow(
                    experiment=r['experiment'],
                    functional=r['functional'],
                    n=int(r['n']),
                    seed=int(r['seed']),
                    metric=r['metric'],
                    value=parse_value(r['value']),
                    standard_error=None if r['standard_error'] == EXACT else float(r['standard_error']),
                )
                for r in reader
            ]
    except OSError as e:
        raise ConfigParse(f"Could not read results {path}: {e}") from e
    except ValueError as e:
        raise ConfigParse(f"Malformed results file {path}: {e}") from e


def write_json(path: str, data: dict) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(data, indent=2, sort_keys=True))
        f.write('\n')


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def format_metric(value: Union[float, str], standard_error: Optional[float], *, rich: bool = False) -> str:
    """
    Human-readable 'value ± error' for console tables.

    :param rich: style exact values for Rich console output
    """
    if isinstance(value, str):
        return value
    text = f"{value:.4g}"
    if standard_error is None:
        return f"{text} [dim](exact)[/dim]" if rich else f"{text} (exact)"
    return f"{text} ± {standard_error:.2g}"
