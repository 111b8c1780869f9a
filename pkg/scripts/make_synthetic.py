#!/usr/bin/env python3
"""Generate a synthetic TOWE corpus (JSONL splits + vocabulary file).

Usage:
    python scripts/make_synthetic.py --corpus subword --sentences 2000 --out data/subword
    python scripts/make_synthetic.py --corpus coref --sentences 400 --out data/coref
"""

import argparse

from towe.synthetic import coreference_corpus, subword_sharing_corpus, write_corpus

GENERATORS = {"subword": subword_sharing_corpus, "coref": coreference_corpus}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", choices=sorted(GENERATORS), required=True)
    ap.add_argument("--sentences", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="output directory")
    args = ap.parse_args()

    data = GENERATORS[args.corpus](n_sentences=args.sentences, seed=args.seed)
    write_corpus(data, args.out)
    print(f"{args.corpus}: train={len(data.train)} dev={len(data.dev)} "
          f"test={len(data.test)} vocab={len(data.vocab)} -> {args.out}")


if __name__ == "__main__":
    main()
