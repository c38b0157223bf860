import functools
import json
from pathlib import Path
from typing import Any, Dict, List

import jsonschema
from jsonschema.exceptions import ValidationError as JsonSchemaValidationError

from anchorsplat.errors import (
    AnchorSplatException,
    InconsistentManifestError,
    JsonSchemaError,
    ValidationError,
)
from anchorsplat.file_utils import read_config_file
from anchorsplat.paths import Paths


class JsonSchemas:
    @staticmethod
    @functools.lru_cache()
    def manifest() -> Dict[str, Any]:
        """Return schema for scene manifests."""
        with Paths.manifest_schema_file().open('r') as f:
            return json.load(f)

    @staticmethod
    @functools.lru_cache()
    def config() -> Dict[str, Any]:
        """Return schema of run configuration files."""
        with Paths.config_schema_file().open('r') as f:
            return json.load(f)

    @staticmethod
    @functools.lru_cache()
    def report() -> Dict[str, Any]:
        """Return schema of metrics reports."""
        with Paths.report_schema_file().open('r') as f:
            return json.load(f)


def _validate_data(data: Any, schema: Dict[str, Any]):
    """Validate document against schema."""
    jsonschema.validate(data, schema)


def validate_document(data: Any, schema: Dict[str, Any], path: Path):
    """Validate an already loaded document, reporting errors against its file."""
    try:
        _validate_data(data, schema)
    except JsonSchemaValidationError as e:
        raise JsonSchemaError(path=path, error=e)


def validate_config_file(path: Path) -> Dict[str, Any]:
    """Check run configuration file against schema and return its content."""
    data = read_config_file(path)
    validate_document(data, JsonSchemas.config(), path)
    return data


def validate_report(report: Dict[str, Any], path: Path):
    validate_document(report, JsonSchemas.report(), path)


def validate_scene_dir(scene_dir: Path) -> List[ValidationError]:
    """Check a scene directory: manifest schema, referenced files, depth coverage."""
    from anchorsplat.pipeline.manifest import load_scene

    manifest_path = Paths.manifest_file(scene_dir)
    try:
        scene = load_scene(scene_dir)
    except ValidationError as e:
        return [e]
    except AnchorSplatException as e:
        return [InconsistentManifestError(path=manifest_path, message=str(e))]

    return list(scene.warnings)

