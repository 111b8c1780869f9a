#!/usr/bin/env python3
"""Train SA / S / S+mask models on the coreference corpus and print the
variant comparison (mean F1 over seeds, pairwise deltas).

The three variants answer: does appending the aspect after the sentence
help (SA vs S), and how much aspect information does the sentence encoding
retain (S vs S with the aspect masked)?

Usage:
    python scripts/run_ablation.py --sentences 300 --seeds 1,2,3,4,5
"""

import argparse

from towe.encoding import encode_dataset
from towe.evaluate import ablation_report, as_percent
from towe.model import Hyperparameters
from towe.subword import WordpieceTokenizer
from towe.synthetic import coreference_corpus
from towe.train import TrainConfig, evaluate_model, train_one

SETUPS = [("SA", "SA", False), ("S", "S", False), ("S+mask", "S", True)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sentences", type=int, default=300)
    ap.add_argument("--seeds", default="1,2,3,4,5")
    ap.add_argument("--hidden-dim", type=int, default=24)
    ap.add_argument("--max-epochs", type=int, default=12)
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]

    data = coreference_corpus(n_sentences=args.sentences, seed=0)
    tokenizer = WordpieceTokenizer(data.vocab)
    hp = Hyperparameters(vocab_size=len(data.vocab),
                         embed_dim=args.hidden_dim, hidden_dim=args.hidden_dim)

    runs = {}
    for name, variant, mask in SETUPS:
        train_pairs = encode_dataset(data.train, tokenizer, variant, mask=mask)
        dev_pairs = encode_dataset(data.dev, tokenizer, variant, mask=mask)
        test_pairs = encode_dataset(data.test, tokenizer, variant, mask=mask)
        scores = []
        for seed in seeds:
            config = TrainConfig(max_epochs=args.max_epochs, patience=2,
                                 eval_every=2, seeds=(seed,))
            params, _ = train_one(train_pairs, dev_pairs, hp, config, seed=seed)
            f1 = evaluate_model(test_pairs, params, hp).f1
            scores.append(f1)
            print(f"{name} seed {seed}: test F1 {as_percent(f1):.2f}")
        runs[name] = scores

    print()
    print(ablation_report(runs).format_table())


if __name__ == "__main__":
    main()
