import logging
from pathlib import Path
from typing import Any, Dict, List

import pydantic

from anchorsplat.errors import (
    EmptySplitError,
    FileMissingError,
    InconsistentManifestError,
    NoValidDepthWarning,
    ValidationError,
)
from anchorsplat.file_utils import read_config_file
from anchorsplat.geometry.cameras import CameraView, Extrinsics, Intrinsics
from anchorsplat.imaging import read_depth, read_png
from anchorsplat.paths import Paths
from anchorsplat.validate import JsonSchemas, validate_document

logger = logging.getLogger(__name__)

INPUT_SPLIT = 'input'
NOVEL_SPLIT = 'novel'


class LoadedScene:
    """Scene directory content: posed views split into input and novel sets."""

    name: str
    units: str
    depth_provenance: str
    views: List[CameraView]
    warnings: List[ValidationError]
    generator: Dict[str, Any]

    def __init__(
        self,
        *,
        name: str,
        units: str,
        depth_provenance: str,
        views: List[CameraView],
        warnings: List[ValidationError],
        generator: Dict[str, Any],
    ):
        self.name = name
        self.units = units
        self.depth_provenance = depth_provenance
        self.views = views
        self.warnings = warnings
        self.generator = generator

    @property
    def input_views(self) -> List[CameraView]:
        return [v for v in self.views if v.split == INPUT_SPLIT]

    @property
    def novel_views(self) -> List[CameraView]:
        return [v for v in self.views if v.split == NOVEL_SPLIT]

    def split(self, split: str) -> List[CameraView]:
        views = self.views if split == 'all' else [v for v in self.views if v.split == split]
        if not views:
            raise EmptySplitError(self.name, split)
        return views

    def __repr__(self) -> str:
        return f'LoadedScene({self.name}, {len(self.input_views)} input, {len(self.novel_views)} novel)'


def _extrinsics(entry: Dict[str, Any]) -> Extrinsics:
    rows = entry['R']
    R = [rows[0:3], rows[3:6], rows[6:9]]
    if entry.get('convention', 'camera-to-world') == 'world-to-camera':
        return Extrinsics.from_world_to_camera(R, entry['T'])
    return Extrinsics(R=R, T=entry['T'])


def _load_view(scene_dir: Path, manifest_path: Path, entry: Dict[str, Any]) -> CameraView:
    image_path = scene_dir / entry['image']
    depth_path = scene_dir / entry['depth']
    for path in (image_path, depth_path):
        if not path.exists():
            raise FileMissingError(path=path)

    try:
        return CameraView(
            image=read_png(image_path),
            depth=read_depth(depth_path),
            intrinsics=Intrinsics(**entry['intrinsics']),
            extrinsics=_extrinsics(entry['extrinsics']),
            name=entry['name'],
            split=entry['split'],
        )
    except pydantic.ValidationError as e:
        raise InconsistentManifestError(path=manifest_path, message=f'View {entry["name"]}: {e}')


def load_scene(scene_dir: Path) -> LoadedScene:
    """Read and check scene.json, then every image and depth map it references."""
    manifest_path = Paths.manifest_file(scene_dir)
    data = read_config_file(manifest_path)
    validate_document(data, JsonSchemas.manifest(), manifest_path)

    names = [entry['name'] for entry in data['views']]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise InconsistentManifestError(path=manifest_path, message=f'Duplicate view names: {", ".join(duplicates)}')
    if not any(entry['split'] == INPUT_SPLIT for entry in data['views']):
        raise InconsistentManifestError(path=manifest_path, message='Scene needs at least one input view')

    views = [_load_view(scene_dir, manifest_path, entry) for entry in data['views']]
    warnings: List[ValidationError] = [
        NoValidDepthWarning(view_name=v.name) for v in views if v.split == INPUT_SPLIT and not v.has_valid_depth
    ]
    scene = LoadedScene(
        name=data['name'],
        units=data['units'],
        depth_provenance=data['depth_provenance'],
        views=views,
        warnings=warnings,
        generator=data.get('generator', {}),
    )
    logger.debug(f'Loaded {scene} from {scene_dir}')
    return scene
