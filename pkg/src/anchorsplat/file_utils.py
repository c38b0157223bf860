import csv
import json
import logging
from pathlib import Path
from typing import IO, Any, Dict, List, Optional, Sequence, Union

import yaml

from anchorsplat.errors import FileMissingError, InvalidConfigFile

logger = logging.getLogger(__name__)


def load_yaml(text: Union[bytes, IO[bytes], str, IO[str]]) -> Any:
    """Load YAML (or JSON, which is a subset) from stream."""
    return yaml.safe_load(text)


def ensure_dir(abs_filepath: Path):
    """
    Ensure parent directory exists.
    """
    path_obj = abs_filepath.parent
    path_obj.mkdir(parents=True, exist_ok=True)


def read_config_file(path: Path) -> Dict[str, Any]:
    """
    Reads a YAML or JSON document from path
    """
    logger.debug(f'Read config {path}')
    try:
        with open(path, 'r') as f:
            data = load_yaml(f)
    except FileNotFoundError:
        raise FileMissingError(path=path)
    except yaml.MarkedYAMLError as e:
        raise InvalidConfigFile(path=path, error=e)
    return data if data is not None else {}


def write_json(abs_filepath: Path, json_data: Any):
    """
    Writes json document to path, keys sorted so reruns are byte-identical
    """
    logger.debug(f'Write json {abs_filepath}')
    ensure_dir(abs_filepath)
    with open(abs_filepath, 'w') as f:
        json.dump(json_data, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(path: Path) -> Any:
    """
    Reads json document from path
    """
    logger.debug(f'Read json {path}')
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError:
        raise FileMissingError(path=path)


def write_csv(abs_filepath: Path, rows: Sequence[Dict[str, Any]], fieldnames: Optional[List[str]] = None):
    """
    Writes list of flat dicts as CSV with header
    """
    logger.debug(f'Write csv {abs_filepath}')
    ensure_dir(abs_filepath)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(abs_filepath, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv(path: Path) -> List[Dict[str, str]]:
    logger.debug(f'Read csv {path}')
    try:
        with open(path, 'r', newline='') as f:
            return list(csv.DictReader(f))
    except FileNotFoundError:
        raise FileMissingError(path=path)


def write_bytes(abs_filepath: Path, payload: bytes):
    logger.debug(f'Write {len(payload)} bytes to {abs_filepath}')
    ensure_dir(abs_filepath)
    abs_filepath.write_bytes(payload)


def read_bytes(path: Path) -> bytes:
    logger.debug(f'Read bytes {path}')
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise FileMissingError(path=path)
