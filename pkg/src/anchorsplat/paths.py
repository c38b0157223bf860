from enum import Enum
from importlib import resources as importlib_resources
from pathlib import Path

import anchorsplat.schemas


class Paths:
    @staticmethod
    def dotenv_file() -> Path:
        return Path.cwd() / PresetFileName.DOTENV.value

    @staticmethod
    def manifest_file(scene_dir: Path) -> Path:
        return scene_dir / PresetFileName.MANIFEST.value

    @staticmethod
    def images_dir(scene_dir: Path) -> Path:
        return scene_dir / SystemDirectory.IMAGES.value

    @staticmethod
    def depths_dir(scene_dir: Path) -> Path:
        return scene_dir / SystemDirectory.DEPTHS.value

    @staticmethod
    def decoder_checkpoint(out_dir: Path) -> Path:
        return out_dir / PresetFileName.DECODER_CHECKPOINT.value

    @staticmethod
    def refiner_checkpoint(out_dir: Path) -> Path:
        return out_dir / PresetFileName.REFINER_CHECKPOINT.value

    @staticmethod
    def stage_trace(out_dir: Path, stage: str) -> Path:
        return out_dir / f'{stage}{FileExtension.TRACE_CSV.value}'

    @staticmethod
    def reproducibility_file(out_dir: Path) -> Path:
        return out_dir / PresetFileName.REPRODUCIBILITY.value

    @staticmethod
    def rendered_image(out_dir: Path, view_name: str) -> Path:
        return out_dir / f'{view_name}{FileExtension.PNG.value}'

    @staticmethod
    def rendered_depth(out_dir: Path, view_name: str) -> Path:
        return out_dir / f'{view_name}{FileExtension.DEPTH_PFM.value}'

    @staticmethod
    def timing_file(out_dir: Path) -> Path:
        return out_dir / PresetFileName.TIMING.value

    @staticmethod
    def tiles_file(out_dir: Path, view_name: str) -> Path:
        return out_dir / f'{view_name}{FileExtension.TILES_JSON.value}'

    @staticmethod
    def scene_ply(out_dir: Path) -> Path:
        return out_dir / PresetFileName.SCENE_PLY.value

    @staticmethod
    def anchors_ply(out_dir: Path) -> Path:
        return out_dir / PresetFileName.ANCHORS_PLY.value

    @staticmethod
    def features_file(out_dir: Path) -> Path:
        return out_dir / f'anchors{FileExtension.FEATURES.value}'

    @staticmethod
    def report_file(out_dir: Path) -> Path:
        return out_dir / PresetFileName.REPORT.value

    @staticmethod
    def ablation_table(out_dir: Path, axis: str, extension: str) -> Path:
        return out_dir / f'ablation_{axis}{extension}'

    @staticmethod
    def manifest_schema_file() -> Path:
        with importlib_resources.path(anchorsplat.schemas, PresetFileName.MANIFEST_SCHEMA.value) as path:
            return path

    @staticmethod
    def config_schema_file() -> Path:
        with importlib_resources.path(anchorsplat.schemas, PresetFileName.CONFIG_SCHEMA.value) as path:
            return path

    @staticmethod
    def report_schema_file() -> Path:
        with importlib_resources.path(anchorsplat.schemas, PresetFileName.REPORT_SCHEMA.value) as path:
            return path


class FileExtension(Enum):
    """
    Enumeration with all available file extensions
    """

    PNG = '.png'
    PFM = '.pfm'
    DEPTH_PFM = '.depth.pfm'
    RAW_DEPTH = '.f32'
    PLY = '.ply'
    ANCHOR_SIDECAR = '.anchors.json'
    FEATURES = '.features.bin'
    TRACE_CSV = '_trace.csv'
    TILES_JSON = '.tiles.json'
    JSON = '.json'
    CSV = '.csv'


class PresetFileName(Enum):
    """Enumeration with all available preset file names."""

    MANIFEST = 'scene.json'
    DOTENV = '.env'
    DECODER_CHECKPOINT = 'decoder.aspl'
    REFINER_CHECKPOINT = 'refiner.aspl'
    REPRODUCIBILITY = 'reproducibility.json'
    TIMING = 'timing.json'
    REPORT = 'report.json'
    SCENE_PLY = 'scene.ply'
    ANCHORS_PLY = 'anchors.ply'
    MANIFEST_SCHEMA = 'scene.schema.json'
    CONFIG_SCHEMA = 'config.schema.json'
    REPORT_SCHEMA = 'report.schema.json'


class SystemDirectory(Enum):
    IMAGES = 'images'
    DEPTHS = 'depth'
