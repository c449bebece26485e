import json
import subprocess
import sys

import pytest

from segtrainer import TrainSpec, read_manifest
from segtrainer.train import train_2d, train_3d

GEN_2D = (
    "from aok.synthgen import gen_seg_corpus_2d; "
    "gen_seg_corpus_2d({out!r}, n_images=60, size=(64, 64), spacing=0.35, "
    "k_folds=3, seed=0, include_empty=6)"
)
GEN_3D = (
    "from aok.synthgen import gen_seg_corpus_3d; "
    "gen_seg_corpus_3d({out!r}, n_volumes=24, size=(20, 36, 36), spacing=0.5, "
    "k_folds=3, seed=0)"
)


def _gen_corpus(template, out_dir):
    subprocess.run(
        [sys.executable, "-c", template.format(out=str(out_dir))], check=True
    )
    return out_dir / "manifest.json"


@pytest.fixture(scope="session")
def corpus2d(tmp_path_factory):
    return _gen_corpus(GEN_2D, tmp_path_factory.mktemp("corpus2d"))


@pytest.fixture(scope="session")
def corpus3d(tmp_path_factory):
    return _gen_corpus(GEN_3D, tmp_path_factory.mktemp("corpus3d"))


@pytest.fixture(scope="session")
def result2d(corpus2d, tmp_path_factory):
    out = tmp_path_factory.mktemp("train2d")
    spec = TrainSpec(task="Seg2D", epochs=20, batch=8, lr=1e-3, k_folds=3,
                     base_channels=16, seed=0)
    return train_2d(read_manifest(str(corpus2d)), spec, str(out))


@pytest.fixture(scope="session")
def spec3d():
    return TrainSpec(task="Seg3D", epochs=28, batch=4, lr=1e-3, k_folds=3,
                     base_channels=12, seed=0)


@pytest.fixture(scope="session")
def result3d_slicewise(corpus3d, spec3d, tmp_path_factory):
    out = tmp_path_factory.mktemp("train3d_a")
    return train_3d(read_manifest(str(corpus3d)), spec3d, str(out),
                    variant="slicewise")


@pytest.fixture(scope="session")
def result3d_context(corpus3d, spec3d, tmp_path_factory):
    out = tmp_path_factory.mktemp("train3d_b")
    return train_3d(read_manifest(str(corpus3d)), spec3d, str(out),
                    variant="context")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
