import argparse
import logging
import sys
from pathlib import Path

from .encoders import EncoderLoadError
from .export import ExportManifest, export


def build_parser():
    parser = argparse.ArgumentParser(prog="embexport",
                                     description="Export an image folder to embedding files")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode a class-per-directory folder")
    p.add_argument("--root", required=True, help="folder with one subdirectory per class")
    p.add_argument("--normal-class", required=True)
    p.add_argument("--base-encoder", required=True, help="e.g. hist8, patchproj32, torchvision:resnet18")
    p.add_argument("--aux-encoder", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--role", choices=("target", "source"), default="target")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        manifest = ExportManifest(
            root=Path(args.root),
            normal_class=args.normal_class,
            base_encoder=args.base_encoder,
            aux_encoder=args.aux_encoder,
            out_dir=Path(args.out),
            role=args.role,
        ).discover()
        record = export(manifest)
    except EncoderLoadError as exc:
        print(f"encoder error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    print(f"exported {record['n_exported']} images to {args.out} "
          f"({len(record['skipped_ids'])} skipped)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
