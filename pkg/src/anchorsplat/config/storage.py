import logging
from pathlib import Path
from typing import Any, Dict, Optional

import pydantic

from anchorsplat.config.run_config import RunConfig
from anchorsplat.errors import InvalidConfigValues
from anchorsplat.validate import validate_config_file

logger = logging.getLogger(__name__)


def _describe(error: pydantic.ValidationError) -> str:
    return '; '.join(f'{".".join(str(part) for part in e["loc"])}: {e["msg"]}' for e in error.errors())


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build the run configuration from an optional JSON/YAML file plus top-level overrides (seed, threads).

    File content is checked against the config schema before pydantic parses it.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        data = validate_config_file(path)
        logger.debug(f'Loaded config from {path}')

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    try:
        return RunConfig.parse_obj(data)
    except pydantic.ValidationError as e:
        raise InvalidConfigValues(path=path, reason=_describe(e))
