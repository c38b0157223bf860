import pytest

from anchorsplat.pipeline.manifest import load_scene
from anchorsplat.pipeline.synthetic import gen_scene
from anchorsplat.pipeline.training import train
from anchorsplat.utils.runtime import configure_threads
from tests.anchorsplat.helpers import tiny_config


@pytest.fixture(scope='session')
def scene_dir(tmp_path_factory):
    """Generated scene shared by the whole session; tests must not modify it."""
    out_dir = tmp_path_factory.mktemp('scenes') / 'textured-planes'
    gen_scene('textured-planes', out_dir, seed=3, views=4, novel=1, width=32, height=24)
    return out_dir


@pytest.fixture
def loaded_scene(scene_dir):
    return load_scene(scene_dir)


@pytest.fixture(autouse=True)
def single_worker():
    configure_threads(1)
    yield
    configure_threads(1)


@pytest.fixture(scope='session')
def trained_dir(tmp_path_factory, scene_dir):
    """Both training stages run once with the tiny config; tests must not modify the directory."""
    out_dir = tmp_path_factory.mktemp('trained')
    train([load_scene(scene_dir)], tiny_config(), out_dir)
    return out_dir
