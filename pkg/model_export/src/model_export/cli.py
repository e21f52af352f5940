"""CLI for the one-shot export workflow."""
from __future__ import annotations

import argparse
import os
import sys

from .embeddings import precompute_embeddings
from .errors import ExportError
from .exporter import export_models


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="peace-model-export",
        description="Export checkpoints to portable graphs and embedding tables")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export the three graphs + manifest")
    p.add_argument("--variant", default="clipseg")
    p.add_argument("--out", required=True)

    p = sub.add_parser("precompute", help="write the vocabulary embedding table")
    p.add_argument("--variant", default="clipseg")
    p.add_argument("--vocab", required=True, help="vocabulary/targets JSON")
    p.add_argument("--out", required=True, help="table file path")
    p.add_argument("--manifest", help="manifest.json from a prior export to update")

    p = sub.add_parser("all", help="export graphs, then precompute the table")
    p.add_argument("--variant", default="clipseg")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="output directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "export":
            manifest = export_models(args.variant, args.out)
            print(f"exported {args.variant}: embed_dim={manifest.embed_dim} -> {args.out}")
        elif args.command == "precompute":
            words, matrix = precompute_embeddings(
                args.vocab, args.variant, args.out, manifest_path=args.manifest)
            print(f"wrote {len(words)} x {matrix.shape[1]} table -> {args.out}")
        else:
            export_models(args.variant, args.out)
            table = os.path.join(args.out, "vocab_embeddings.peac")
            words, matrix = precompute_embeddings(
                args.vocab, args.variant, table,
                manifest_path=os.path.join(args.out, "manifest.json"))
            print(f"bundle complete: {len(words)} words, dim {matrix.shape[1]} -> {args.out}")
        return 0
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
