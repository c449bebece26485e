"""seg-train command line entry point."""

import argparse
import sys

from . import formats
from .train import SegTrainError, spec_from_json, train_2d, train_3d


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="seg-train",
        description="Train fold-wise segmentation models on a blob corpus",
    )
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--spec", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--parallel", type=int, default=1, metavar="N",
                        help="train up to N folds in worker processes")
    args = parser.parse_args(argv)

    try:
        spec = spec_from_json(args.spec)
        manifest = formats.read_manifest(args.manifest)
        if spec.task == "Seg2D":
            result = train_2d(manifest, spec, args.out, n_jobs=args.parallel)
        else:
            result = train_3d(manifest, spec, args.out, n_jobs=args.parallel)
    except (SegTrainError, formats.FormatError, OSError, ValueError) as exc:
        print(f"seg-train: {exc}", file=sys.stderr)
        return 2
    print(
        f"{len(result.per_case)} cases, held-out mean dice "
        f"{result.mean_dice:.4f} -> {result.pred_manifest}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
