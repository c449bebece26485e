"""Fold-wise training for the 2D and 3D blob corpora.

Folds come from the manifest's split labels; every case gets a
prediction from the model that held it out, written back in the shared
mask formats next to a prediction manifest the measurement toolkit can
evaluate directly.  Folds run sequentially by default or in worker
processes with n_jobs > 1; per-fold seeding makes the two paths agree.
"""

import dataclasses
import io as _stdio
import json
import math
import os

import numpy as np
import torch
import torch.nn.functional as F

from . import formats
from .models import SliceContextNet, UNet2D, seg_loss


class SegTrainError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class TrainSpec:
    task: str  # "Seg2D" or "Seg3D"
    epochs: int = 20
    batch: int = 8
    lr: float = 1e-3
    k_folds: int = 15
    image_size: tuple | None = None
    augment: bool = True
    scheduler_patience: int = 3
    scheduler_factor: float = 0.5
    variant: str = "context"  # 3D only: "slicewise" or "context"
    base_channels: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("Seg2D", "Seg3D"):
            raise SegTrainError(f"unknown task {self.task!r}")
        if self.k_folds < 2:
            raise SegTrainError("k_folds must be at least 2")
        if self.lr <= 0:
            raise SegTrainError("lr must be positive")
        if self.epochs < 1 or self.batch < 1:
            raise SegTrainError("epochs and batch must be positive")
        if self.variant not in ("slicewise", "context"):
            raise SegTrainError(f"unknown variant {self.variant!r}")


def spec_from_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    known = {f.name for f in dataclasses.fields(TrainSpec)}
    extra = set(doc) - known
    if extra:
        raise SegTrainError(f"unknown spec keys: {sorted(extra)}")
    if "image_size" in doc and doc["image_size"] is not None:
        doc["image_size"] = tuple(doc["image_size"])
    return TrainSpec(**doc)


def hard_dice(a, b):
    """2|A n B| / (|A| + |B|), with the both-empty case defined as 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return 2.0 * np.logical_and(a, b).sum() / denom


def _augment_2d(img, msk, gen):
    if torch.rand((), generator=gen).item() < 0.5:
        img, msk = torch.flip(img, [-1]), torch.flip(msk, [-1])
    if torch.rand((), generator=gen).item() < 0.5:
        img, msk = torch.flip(img, [-2]), torch.flip(msk, [-2])
    k = int(torch.randint(0, 4, (), generator=gen))
    if k:
        img, msk = torch.rot90(img, k, (-2, -1)), torch.rot90(msk, k, (-2, -1))
    if torch.rand((), generator=gen).item() < 0.25:
        kernel = img.new_tensor([1.0, 2.0, 1.0])
        kernel = (kernel[:, None] * kernel[None, :]) / 16.0
        kernel = kernel.expand(img.shape[1], 1, 3, 3)
        img = F.conv2d(img, kernel, padding=1, groups=img.shape[1])
    return img, msk


def _augment_3d(img, msk, gen):
    for ax in (-1, -2):
        if torch.rand((), generator=gen).item() < 0.5:
            img, msk = torch.flip(img, [ax]), torch.flip(msk, [ax])
    if torch.rand((), generator=gen).item() < 0.3:
        img, msk = torch.flip(img, [-3]), torch.flip(msk, [-3])
    if torch.rand((), generator=gen).item() < 0.3:
        # small in-plane rotation, same field for image and mask
        theta = (torch.rand((), generator=gen).item() - 0.5) * (math.pi / 6)
        b, _, z, h, w = img.shape
        mat = img.new_tensor(
            [[math.cos(theta), -math.sin(theta), 0.0],
             [math.sin(theta), math.cos(theta), 0.0]]
        ).expand(b * z, 2, 3)
        grid = F.affine_grid(mat, (b * z, 1, h, w), align_corners=False)

        def warp(t, mode):
            flat = t.permute(0, 2, 1, 3, 4).reshape(b * z, 1, h, w)
            out = F.grid_sample(flat, grid, mode=mode, padding_mode="zeros",
                                align_corners=False)
            return out.reshape(b, z, 1, h, w).permute(0, 2, 1, 3, 4)

        img = warp(img, "bilinear")
        msk = (warp(msk, "nearest") > 0.5).float()
    if torch.rand((), generator=gen).item() < 0.3:
        # anisotropy: pretend the stack was acquired at half z-resolution
        z = img.shape[2]
        coarse = F.interpolate(img, size=(max(1, z // 2),) + img.shape[-2:],
                               mode="nearest")
        img = F.interpolate(coarse, size=(z,) + img.shape[-2:], mode="nearest")
    return img, msk


def _train_network(model, images, masks, spec, gen, augment_fn, batch):
    opt = torch.optim.Adam(model.parameters(), lr=spec.lr)
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=spec.scheduler_factor, patience=spec.scheduler_patience
    )
    n = images.shape[0]
    last_loss = float("nan")
    for _ in range(spec.epochs):
        order = torch.randperm(n, generator=gen)
        losses = []
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            img, msk = images[idx], masks[idx]
            if spec.augment:
                img, msk = augment_fn(img, msk, gen)
            opt.zero_grad()
            loss, dice_term = seg_loss(model(img), msk)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 2.0)
            opt.step()
            # track the dice term alone so the soft/hard gap stays a
            # dice-vs-dice comparison
            losses.append(dice_term.item())
        last_loss = float(np.mean(losses))
        sched.step(last_loss)
    return last_loss


def _predict_2d(model, img_np, chunk=16):
    """img_np (n, h, w) float -> bool masks, threshold 0.5."""
    model.eval()
    out = []
    with torch.no_grad():
        for start in range(0, img_np.shape[0], chunk):
            batch = torch.from_numpy(img_np[start:start + chunk]).unsqueeze(1)
            prob = torch.sigmoid(model(batch))[:, 0]
            out.append((prob > 0.5).numpy())
    return np.concatenate(out, axis=0)


def _predict_volume(model, vol, variant):
    model.eval()
    with torch.no_grad():
        if variant == "slicewise":
            return _predict_2d(model, vol)
        t = torch.from_numpy(vol)[None, None]
        prob = torch.sigmoid(model(t))[0, 0]
        return (prob > 0.5).numpy()


def _load_corpus(manifest, is_3d, expected_size=None):
    if not manifest.cases:
        raise SegTrainError("manifest lists no cases")
    read_img = formats.read_image_3d if is_3d else formats.read_image_2d
    read_msk = formats.read_mask_3d if is_3d else formats.read_mask_2d
    images, masks, spacings = {}, {}, {}
    for c in manifest.cases:
        img, sp = read_img(manifest.resolve(c.image))
        msk, _ = read_msk(manifest.resolve(c.mask_gt))
        if img.shape != msk.shape:
            raise SegTrainError(f"{c.case_id}: image/mask shape mismatch")
        images[c.case_id], masks[c.case_id], spacings[c.case_id] = img, msk, sp
    shapes = {im.shape for im in images.values()}
    if len(shapes) != 1:
        raise SegTrainError(f"corpus mixes shapes: {sorted(shapes)}")
    # image_size pins the array shape: (h, w) for 2D, (z, y, x) for 3D
    shape = next(iter(shapes))
    if expected_size is not None and tuple(expected_size) != shape:
        raise SegTrainError(
            f"corpus shape {shape} does not match spec image_size "
            f"{tuple(expected_size)}"
        )
    return images, masks, spacings


def _fold_worker(manifest, spec, out_dir, split, fi, is_3d, variant):
    """Train one fold and write its held-out predictions.

    Self-contained (loads the corpus itself) so it can run in a worker
    process; per-fold seeding keeps results identical either way.
    """
    torch.set_num_threads(max(1, torch.get_num_threads()))
    images, masks, spacings = _load_corpus(manifest, is_3d, spec.image_size)
    held = manifest.by_split(split)
    train_cases = [c for c in manifest.cases if c.split != split]
    if not train_cases:
        raise SegTrainError(f"fold {split} leaves no training cases")

    torch.manual_seed(spec.seed * 1000 + fi)
    gen = torch.Generator().manual_seed(spec.seed * 1000 + fi)

    if not is_3d or variant == "slicewise":
        model = UNet2D(base=spec.base_channels)
        stack = np.concatenate if is_3d else np.stack
        timg = torch.from_numpy(
            stack([images[c.case_id] for c in train_cases])
        ).unsqueeze(1)
        tmsk = torch.from_numpy(
            stack([masks[c.case_id] for c in train_cases]).astype(np.float32)
        ).unsqueeze(1)
        # for volumes, batch counts volumes: a slice step sees as many
        # slices as a volume step, and batches mix empty and blob slices
        nz = next(iter(images.values())).shape[0] if is_3d else 1
        last_soft = _train_network(model, timg, tmsk, spec, gen, _augment_2d,
                                   batch=spec.batch * nz)
    else:
        model = SliceContextNet(base=spec.base_channels)
        timg = torch.from_numpy(
            np.stack([images[c.case_id] for c in train_cases])
        ).unsqueeze(1)
        tmsk = torch.from_numpy(
            np.stack([masks[c.case_id] for c in train_cases]).astype(np.float32)
        ).unsqueeze(1)
        last_soft = _train_network(model, timg, tmsk, spec, gen, _augment_3d,
                                   batch=spec.batch)

    # monitor the soft-loss vs hard-dice gap on one training case
    sample = train_cases[0].case_id
    if is_3d:
        train_hard = hard_dice(
            _predict_volume(model, images[sample], variant), masks[sample]
        )
    else:
        train_hard = hard_dice(
            _predict_2d(model, images[sample][None])[0], masks[sample]
        )
    gap = abs((1.0 - last_soft) - train_hard)

    per_case, pred_rel = {}, {}
    for c in held:
        if is_3d:
            pred = _predict_volume(model, images[c.case_id], variant)
            rel = f"pred/{c.case_id}.raw"
            formats.write_mask_3d(os.path.join(out_dir, rel), pred,
                                  spacings[c.case_id])
        else:
            pred = _predict_2d(model, images[c.case_id][None])[0]
            rel = f"pred/{c.case_id}.pgm"
            formats.write_mask_2d(os.path.join(out_dir, rel), pred,
                                  spacings[c.case_id])
        pred_rel[c.case_id] = rel
        per_case[c.case_id] = hard_dice(pred, masks[c.case_id])

    buf = _stdio.BytesIO()
    torch.save(model.state_dict(), buf)
    return split, per_case, pred_rel, gap, buf.getvalue()


@dataclasses.dataclass
class TrainResult:
    spec: TrainSpec
    per_case: dict  # case_id -> held-out dice
    fold_models: dict  # split -> trained model
    pred_manifest: str
    summary_path: str

    @property
    def mean_dice(self):
        return float(np.mean(list(self.per_case.values())))


def _run_folds(manifest, spec, out_dir, is_3d, variant, n_jobs):
    if not manifest.cases:
        raise SegTrainError("manifest lists no cases")
    splits = manifest.splits()
    if len(splits) != spec.k_folds:
        raise SegTrainError(
            f"manifest has {len(splits)} folds, spec.k_folds is {spec.k_folds}"
        )
    os.makedirs(os.path.join(out_dir, "pred"), exist_ok=True)
    jobs = [(manifest, spec, out_dir, split, fi, is_3d, variant)
            for fi, split in enumerate(splits)]
    if n_jobs > 1:
        import concurrent.futures as cf
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with cf.ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as ex:
            outcomes = list(ex.map(_fold_worker_star, jobs))
    else:
        outcomes = [_fold_worker(*job) for job in jobs]

    per_case, pred_rel, fold_models, gaps = {}, {}, {}, []
    for split, pc, pr, gap, state in outcomes:
        per_case.update(pc)
        pred_rel.update(pr)
        gaps.append(gap)
        model = (SliceContextNet(base=spec.base_channels)
                 if is_3d and variant == "context"
                 else UNet2D(base=spec.base_channels))
        model.load_state_dict(torch.load(_stdio.BytesIO(state), weights_only=True))
        model.eval()
        fold_models[split] = model

    cases = tuple(
        formats.Case(
            case_id=c.case_id,
            image=os.path.relpath(manifest.resolve(c.image), out_dir),
            mask_gt=os.path.relpath(manifest.resolve(c.mask_gt), out_dir),
            split=c.split,
            mask_pred=pred_rel[c.case_id],
        )
        for c in manifest.cases
    )
    pred_path = os.path.join(out_dir, "pred_manifest.json")
    formats.write_manifest(pred_path,
                           formats.Manifest(cases=cases, base_dir=out_dir))

    os.makedirs(os.path.join(out_dir, "models"), exist_ok=True)
    for split, model in fold_models.items():
        torch.save(model.state_dict(),
                   os.path.join(out_dir, "models", f"{split}.pt"))

    summary = {
        "task": spec.task,
        "variant": "2d" if not is_3d else variant,
        "epochs": spec.epochs,
        "mean_dice": float(np.mean(list(per_case.values()))),
        "per_case": {k: float(v) for k, v in sorted(per_case.items())},
        "soft_hard_gap": float(np.mean(gaps)),
    }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return TrainResult(spec, per_case, fold_models, pred_path, summary_path)


def _fold_worker_star(args):
    return _fold_worker(*args)


def train_2d(manifest, spec, out_dir, n_jobs=1):
    """Fold-wise 2D training; returns held-out dice per case."""
    if spec.task != "Seg2D":
        raise SegTrainError("train_2d needs a Seg2D spec")
    return _run_folds(manifest, spec, out_dir, is_3d=False, variant="2d",
                      n_jobs=n_jobs)


def train_3d(manifest, spec, out_dir, variant=None, n_jobs=1):
    """3D training, either slice-wise 2D or the slice-encoder/3D-decoder net."""
    if spec.task != "Seg3D":
        raise SegTrainError("train_3d needs a Seg3D spec")
    variant = variant or spec.variant
    if variant not in ("slicewise", "context"):
        raise SegTrainError(f"unknown variant {variant!r}")
    return _run_folds(manifest, spec, out_dir, is_3d=True, variant=variant,
                      n_jobs=n_jobs)
