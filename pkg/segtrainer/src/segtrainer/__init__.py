"""Toy segmentation trainer for the synthetic blob corpora.

Talks to the measurement toolkit purely through files: manifests,
PGM masks, raw volumes. See formats, models, train.
"""

from .formats import Manifest, read_manifest, write_manifest
from .train import TrainSpec, hard_dice, train_2d, train_3d

__all__ = [
    "Manifest",
    "read_manifest",
    "write_manifest",
    "TrainSpec",
    "hard_dice",
    "train_2d",
    "train_3d",
]
