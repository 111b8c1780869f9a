"""Command line: turn a prepared-input dump into a feature file.

    embed-export --prepared prep.jsonl --encoder hashed --dim 64 \
        --vocab vocab.txt --out features.tfea
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

from .encoders import resolve_encoder
from .export import export_features
from .prepared import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Export contextual features for prepared TOWE inputs",
    )
    parser.add_argument("--prepared", required=True, help="towe-prepared JSONL dump")
    parser.add_argument("--encoder", default="hashed",
                        help="hashed, sentinel, or hf:<model-name-or-path>")
    parser.add_argument("--dim", type=int, default=64,
                        help="feature dimension (hashed/sentinel encoders)")
    parser.add_argument("--seed", type=int, default=0, help="hashed encoder seed")
    parser.add_argument("--layer", type=int, default=-1,
                        help="hidden-state layer for hf: encoders (-1 = last)")
    parser.add_argument("--vocab", default=None,
                        help="vocabulary file the encoder expects; its checksum must "
                             "match the one recorded in the prepared dump")
    parser.add_argument("--out", required=True, help="output .tfea path")
    parser.add_argument("--manifest", default=None,
                        help="manifest path (default: <out>.manifest.json)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        expect = None
        if args.vocab is not None:
            expect = hashlib.sha256(Path(args.vocab).read_bytes()).hexdigest()
        encoder = resolve_encoder(args.encoder, dim=args.dim, seed=args.seed,
                                  layer=args.layer)
        manifest = export_features(
            args.prepared, encoder, args.out,
            expect_vocab_sha256=expect, manifest_path=args.manifest,
        )
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {manifest.examples} examples "
          f"(dim {manifest.hidden_dim}, encoder {manifest.encoder}) -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
