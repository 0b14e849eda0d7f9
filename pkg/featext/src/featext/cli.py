"""Command line: images in, GZFG feature files out.

Input is either a directory of images (the file stem becomes the
stimulus id) or a dataset manifest in the consumer's JSON format, whose
`stimuli[].image` paths are resolved relative to the manifest.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .export import VARIANTS, ExportJob, export

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def collect_images(args):
    if args.manifest:
        root = Path(args.manifest).parent
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        pairs = []
        for entry in manifest["stimuli"]:
            if not entry.get("image"):
                continue
            path = Path(entry["image"])
            pairs.append((entry["id"], path if path.is_absolute() else root / path))
        return pairs
    images = Path(args.images)
    return [
        (f.stem, f) for f in sorted(images.iterdir()) if f.suffix.lower() in IMAGE_SUFFIXES
    ]


def main(argv=None):
    p = argparse.ArgumentParser(prog="featext", description=__doc__)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--images", help="directory of stimulus images")
    src.add_argument("--manifest", help="dataset manifest JSON")
    p.add_argument("--out", required=True, help="output directory for .gzfg files")
    p.add_argument("--variant", choices=VARIANTS, default="upsampled")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--weights", default="", help="optional backbone state-dict path")
    p.add_argument("--json", action="store_true")
    args = p.parse_args(argv)
    pairs = collect_images(args)
    if not pairs:
        print("error: no images found", file=sys.stderr)
        return 2
    job = ExportJob(
        images=pairs, out_dir=args.out, variant=args.variant, seed=args.seed,
        dim=args.dim, depth=args.depth, batch=args.batch, state_dict=args.weights,
    )
    result = export(job)
    for sid, reason in result.failed:
        print(f"error: {sid}: {reason}", file=sys.stderr)
    print(f"wrote {len(result.written)} feature files to {args.out}", file=sys.stderr)
    if args.json:
        print(json.dumps({"written": len(result.written), "failed": len(result.failed)}))
    return 0 if not result.failed else 1


if __name__ == "__main__":
    sys.exit(main())
