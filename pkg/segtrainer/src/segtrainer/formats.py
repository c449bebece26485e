"""Readers and writers for the shared corpus formats.

The trainer talks to the measurement toolkit only through files:
P5 PGM images and 2D masks with a JSON spacing sidecar, raw uint8
volumes with a dims+spacing sidecar, and a JSON manifest listing
image / ground-truth / prediction paths per case.  The writers here
produce byte-compatible files so predictions drop straight into the
toolkit's dice and geometry commands.
"""

import dataclasses
import json
import os

import numpy as np


class FormatError(ValueError):
    pass


def _sidecar(path):
    return str(path) + ".json"


def _read_sidecar(path, want_dims):
    sc = _sidecar(path)
    if not os.path.exists(sc):
        raise FormatError(f"{path}: sidecar {sc} not found")
    with open(sc, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    spacing = meta.get("spacing_mm")
    if spacing is None:
        raise FormatError(f"{sc}: needs spacing_mm")
    if want_dims:
        dims = meta.get("dims")
        if dims is None or len(dims) != 3:
            raise FormatError(f"{sc}: needs dims [nx, ny, nz]")
        return tuple(int(d) for d in dims), tuple(float(s) for s in spacing)
    return None, tuple(float(s) for s in spacing)


def _read_pgm(path):
    with open(path, "rb") as fh:
        def tok():
            while True:
                line = fh.readline()
                if not line:
                    raise FormatError(f"{path}: truncated PGM header")
                line = line.split(b"#", 1)[0]
                for t in line.split():
                    yield t
        it = tok()
        if next(it) != b"P5":
            raise FormatError(f"{path}: not a P5 PGM")
        nx, ny, maxval = int(next(it)), int(next(it)), int(next(it))
        if maxval != 255:
            raise FormatError(f"{path}: maxval {maxval} unsupported")
        payload = fh.read()
    if len(payload) != nx * ny:
        raise FormatError(f"{path}: payload/header size mismatch")
    return np.frombuffer(payload, dtype=np.uint8).reshape(ny, nx)


def read_image_2d(path):
    """PGM intensity image -> (float32 [row, col] in [0, 1], (sx, sy))."""
    _, spacing = _read_sidecar(path, want_dims=False)
    return _read_pgm(path).astype(np.float32) / 255.0, spacing


def read_mask_2d(path):
    _, spacing = _read_sidecar(path, want_dims=False)
    return _read_pgm(path) != 0, spacing


def write_mask_2d(path, mask, spacing):
    mask = np.asarray(mask)
    ny, nx = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(np.where(mask, 255, 0).astype(np.uint8).tobytes())
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        json.dump({"spacing_mm": [float(s) for s in spacing]}, fh, sort_keys=True)
        fh.write("\n")


def _read_raw(path):
    (nx, ny, nz), spacing = _read_sidecar(path, want_dims=True)
    with open(path, "rb") as fh:
        payload = fh.read()
    if len(payload) != nx * ny * nz:
        raise FormatError(f"{path}: payload does not match dims")
    return np.frombuffer(payload, dtype=np.uint8).reshape(nz, ny, nx), spacing


def read_image_3d(path):
    """Raw intensity volume -> (float32 [slice, row, col] in [0, 1], spacing)."""
    arr, spacing = _read_raw(path)
    return arr.astype(np.float32) / 255.0, spacing


def read_mask_3d(path):
    arr, spacing = _read_raw(path)
    return arr != 0, spacing


def write_mask_3d(path, mask, spacing):
    mask = np.asarray(mask)
    nz, ny, nx = mask.shape
    with open(path, "wb") as fh:
        fh.write(np.where(mask, 1, 0).astype(np.uint8).tobytes())
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        json.dump(
            {"dims": [nx, ny, nz], "spacing_mm": [float(s) for s in spacing]},
            fh,
            sort_keys=True,
        )
        fh.write("\n")


@dataclasses.dataclass(frozen=True)
class Case:
    case_id: str
    image: str
    mask_gt: str
    split: str
    mask_pred: str | None = None


@dataclasses.dataclass(frozen=True)
class Manifest:
    cases: tuple
    base_dir: str = "."

    def resolve(self, rel):
        return os.path.normpath(os.path.join(self.base_dir, rel))

    def splits(self):
        return tuple(sorted({c.split for c in self.cases}))

    def by_split(self, split):
        return tuple(c for c in self.cases if c.split == split)


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "cases" not in doc:
        raise FormatError(f"{path}: needs a cases list")
    cases = []
    for i, block in enumerate(doc["cases"]):
        for key in ("case_id", "image", "mask_gt", "split"):
            if key not in block:
                raise FormatError(f"{path}: case {i} needs {key}")
        cases.append(
            Case(
                case_id=str(block["case_id"]),
                image=str(block["image"]),
                mask_gt=str(block["mask_gt"]),
                split=str(block["split"]),
                mask_pred=block.get("mask_pred"),
            )
        )
    return Manifest(cases=tuple(cases), base_dir=os.path.dirname(os.path.abspath(path)))


def write_manifest(path, manifest):
    doc = {"cases": []}
    for c in manifest.cases:
        block = {
            "case_id": c.case_id,
            "image": c.image,
            "mask_gt": c.mask_gt,
            "split": c.split,
        }
        if c.mask_pred is not None:
            block["mask_pred"] = c.mask_pred
        doc["cases"].append(block)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
