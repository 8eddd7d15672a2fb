import os
from typing import Optional, Tuple

RUN_FILES = ('results.csv', 'manifest.json')


def validate_config_path(path: str) -> Tuple[bool, Optional[str]]:
    """
    Validate an experiment config (or manifest) path before parsing it.

    :param path: User-supplied path
    :return: (ok, error_message). error_message is None when ok.
    """
    if not path or not path.strip():
        return False, "Config path is empty"

    path = path.strip().strip('"').strip("'")

    if not os.path.exists(path):
        return False, f"Config file not found: {path}"

    if not os.path.isfile(path):
        return False, f"Config path is not a file: {path}"

    if not os.access(path, os.R_OK):
        return False, f"Config file is not readable: {path}"

    try:
        with open(path, 'r', encoding='utf-8', errors='replace') as f:
            head = f.read(512)
    except OSError as e:
        return False, f"Could not read config file: {e}"

    if not head.strip():
        return False, "Config file is empty"

    if not head.lstrip().startswith('{'):
        return False, "Config file does not look like a JSON object"

    return True, None


def validate_run_dir(path: str) -> Tuple[bool, Optional[str]]:
    """
    Check that ``path`` is the output directory of a finished run.

    :return: (ok, error_message). error_message is None when ok.
    """
    if not path or not path.strip():
        return False, "Run directory is empty"

    path = path.strip().strip('"').strip("'")

    if not os.path.isdir(path):
        return False, f"Run directory not found: {path}"

    missing = [name for name in RUN_FILES if not os.path.isfile(os.path.join(path, name))]
    if missing:
        return False, f"Run directory {path} lacks {', '.join(missing)}"

    return True, None
