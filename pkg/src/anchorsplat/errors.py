import functools
import os
import signal
import sys
from abc import ABC
from enum import Enum
from pathlib import Path
from typing import Any, Callable, ClassVar, Dict, List, Optional

from jsonschema.exceptions import ValidationError as JsonSchemaValidationError
from yaml.error import MarkedYAMLError

from anchorsplat.print import echo_error


class AnchorSplatException(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidDepthError(AnchorSplatException):
    """Depth handed to back-projection is not strictly positive."""

    def __init__(self, depth: float):
        super().__init__(f'Depth must be positive, got {depth}')


class NumericError(AnchorSplatException):
    """Non-finite number reached a geometric operation."""

    def __init__(self, what: str):
        super().__init__(f'Non-finite value in {what}')


class InvalidCameraError(AnchorSplatException):
    """Camera parameters violate the pinhole model invariants."""

    def __init__(self, reason: str):
        super().__init__(f'Invalid camera: {reason}')


class InvalidBoundsError(AnchorSplatException):
    """Clipping bounds or percentiles are malformed."""

    def __init__(self, reason: str):
        super().__init__(f'Invalid clip bounds: {reason}')


class EmptyAnchorError(AnchorSplatException):
    """No point survived clipping, so no anchor can be placed."""

    def __init__(self, source_count: int):
        super().__init__(f'No anchors could be placed: 0 of {source_count} back-projected points survived clipping')


class InvalidBudgetError(AnchorSplatException):
    """Farthest point sampling asked for more points than available."""

    def __init__(self, k: int, available: int):
        super().__init__(f'Cannot sample {k} points from a cloud of {available}')


class ContractError(AnchorSplatException):
    """Shapes or values handed across a module boundary are inconsistent."""

    def __init__(self, message: str):
        super().__init__(message)


class PreconditionError(AnchorSplatException):
    """Operation called before the state it depends on was produced."""

    def __init__(self, message: str):
        super().__init__(message)


class NonFiniteAttributeError(AnchorSplatException):
    """A Gaussian with a NaN/Inf attribute was handed to the rasterizer."""

    gaussian_id: int

    def __init__(self, gaussian_id: int, attribute: str):
        self.gaussian_id = gaussian_id
        super().__init__(f'Gaussian {gaussian_id} has a non-finite {attribute}')


class TrainingDivergenceError(AnchorSplatException):
    """Loss or activations became NaN during optimization."""

    step: int
    trace: List[Dict[str, Any]]

    def __init__(self, *, stage: str, step: int, trace: List[Dict[str, Any]], detail: str = 'loss is not finite'):
        self.step = step
        self.trace = trace
        last = trace[-1] if trace else {}
        super().__init__(f'{stage} diverged at step {step}: {detail} (last recorded terms: {last})')


class UndefinedMetricError(AnchorSplatException):
    """Metric requested over an empty pixel mask."""

    def __init__(self, metric: str):
        super().__init__(f'{metric} is undefined: no valid pixels in mask')


class PlyFormatError(AnchorSplatException):
    """PLY payload does not match the Gaussian scene layout."""

    def __init__(self, element: str, reason: str):
        super().__init__(f'Malformed PLY ({element}): {reason}')


class CheckpointFormatError(AnchorSplatException):
    """Checkpoint container is corrupt or of another kind."""

    def __init__(self, path: Optional[Path], reason: str):
        where = f' {path}' if path is not None else ''
        super().__init__(f'Invalid checkpoint{where}: {reason}')


class MissingCheckpointError(AnchorSplatException):
    """Feed-forward path requested without a trained checkpoint."""

    def __init__(self, what: str):
        super().__init__(f'A {what} checkpoint is required for this command. Run: asplat train')


class EmptySplitError(AnchorSplatException):
    """Scene has no view in the requested split."""

    def __init__(self, scene_name: str, split: str):
        super().__init__(f'Scene {scene_name} has no {split} views')


class UnknownPresetError(AnchorSplatException):
    """Scene generator preset is not known."""

    def __init__(self, preset: str, known: List[str]):
        super().__init__(f'Unknown scene preset {preset}, expected one of {", ".join(known)}')


class ValidationErrorSeverity(Enum):
    WARNING = 'WARNING'
    ERROR = 'ERROR'


class ValidationError(AnchorSplatException, ABC):
    """Abstract error raised while validating input files."""

    severity: ClassVar[ValidationErrorSeverity] = ValidationErrorSeverity.ERROR

    def __eq__(self, o: object) -> bool:
        if not isinstance(o, type(self)):
            return False

        return str(self) == str(o)

    def __hash__(self) -> int:
        return hash((type(self).__name__, str(self)))


def _relative(path: Path) -> Path:
    try:
        return path.relative_to(Path.cwd())
    except ValueError:
        return path  # Use relative path when possible


class FileMissingError(ValidationError):
    """File that should exist didn't."""

    def __init__(self, *, path: Path):
        super().__init__(f'File missing - {_relative(path)}')


class InvalidConfigFile(ValidationError):
    """YAML/JSON syntax error."""

    def __init__(self, *, path: Path, error: MarkedYAMLError):
        mark = error.problem_mark.line if error.problem_mark is not None else '?'
        super().__init__(f'Invalid config file - {error.problem}\n  on line {mark}\n  in {_relative(path)}')


class InvalidConfigValues(ValidationError):
    """Config file passes the schema but its values contradict each other."""

    def __init__(self, *, path: Optional[Path], reason: str):
        where = f'\n  in {_relative(path)}' if path is not None else ''
        super().__init__(f'Invalid config values - {reason}{where}')


class JsonSchemaError(ValidationError):
    def __init__(self, *, path: Path, error: JsonSchemaValidationError):
        error_path = '.'.join(str(p) for p in error.path)
        super().__init__(f'{error.message}\n  for path {error_path}\n  in {_relative(path)}')


class InvalidViewFileError(ValidationError):
    """Image or depth file referenced by a manifest cannot be decoded."""

    def __init__(self, *, path: Path, reason: str):
        super().__init__(f'Cannot read {_relative(path)}: {reason}')


class InconsistentManifestError(ValidationError):
    """Manifest is schema-valid but semantically inconsistent."""

    def __init__(self, *, path: Path, message: str):
        super().__init__(f'{message}\n  in {_relative(path)}')


class NoValidDepthWarning(ValidationError):
    severity = ValidationErrorSeverity.WARNING

    def __init__(self, *, view_name: str):
        super().__init__(f'View {view_name} has no valid depth pixel and contributes no anchors')


def handle_exception(f: Callable):
    """Print exception and exit with error code."""

    @functools.wraps(f)
    def wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except AnchorSplatException as e:
            echo_error(str(e))
            sys.exit(1)
        except Exception:
            echo_error('Internal error occurred', exc_info=True)
            sys.exit(1)

    return wrapped


def handle_interrupt(f: Callable):
    """Exit app on keyboard interrupt."""

    @functools.wraps(f)
    def wrapped(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except KeyboardInterrupt:
            os._exit(128 + signal.SIGINT)

    return wrapped
