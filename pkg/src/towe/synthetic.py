"""Synthetic TOWE corpora with controllable difficulty.

Two generators, both returning train/dev/test splits plus a WordPiece
vocabulary that tokenizes every word deterministically:

* ``subword_sharing_corpus`` - every sentence holds two adjective+noun pairs;
  the queried aspect decides which adjective is the opinion.  Opinion words
  share the ``##ly`` suffix piece, and dev/test adjective stems never occur
  in training, so labeling them hinges on the shared suffix rather than the
  stem embedding.

* ``coreference_corpus`` - two nouns, then a pronoun clause offering two
  candidate opinions.  The correct candidate depends only on the queried
  noun's class, which is readable from its suffix piece (``##board`` vs
  ``##ware``).  Sentence-only input is ambiguous whenever the two nouns
  disagree in class, and masking the aspect hides the class entirely, which
  is what the aspect-input ablations measure.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import Dataset, SentenceExample, save_dataset
from .subword import Vocabulary, save_vocab

_CONSONANTS = "bdfglmnprstvz"
_VOWELS = "aeiou"

# Pronounceable 4-letter stems, deterministic order, pairwise distinct and
# prefix-free (all the same length, alphabet disjoint from the word lists
# below).
_STEMS = [
    c1 + v1 + c2 + v2
    for c1, v1, c2, v2 in itertools.product(_CONSONANTS, _VOWELS, _CONSONANTS, _VOWELS)
]

ASPECT_STEMS = ["surf", "snow", "key", "skate", "wake", "chalk", "spring", "sail"]
WARE_STEMS = ["soft", "hard", "glass", "silver", "stone", "flat", "iron", "wood"]

FILLERS = ["the", "and", "was", "so", "quite", "near", "while", "but", "a"]
MID_WORDS = ["and", "while", "but"]

TRAIN_ADJ = _STEMS[0:30]
DEV_ADJ = _STEMS[30:40]
TEST_ADJ = _STEMS[40:50]
COREF_ADJ = _STEMS[50:66]


@dataclass(frozen=True)
class SyntheticData:
    train: Dataset
    dev: Dataset
    test: Dataset
    vocab: Vocabulary

    def split(self, name: str) -> Dataset:
        return {"train": self.train, "dev": self.dev, "test": self.test}[name]


def _split_counts(n: int) -> tuple[int, int, int]:
    n_dev = max(1, n // 10)
    n_test = max(1, n // 10)
    return n - n_dev - n_test, n_dev, n_test


def subword_sharing_corpus(n_sentences: int = 2000, seed: int = 0) -> SyntheticData:
    """Sentences of the form ``... ADJ1 NOUN1 and ADJ2 NOUN2 ...``.

    The aspect is one of the two nouns; the gold opinion is the adjective
    directly before it.  Adjectives are stem+"ly", nouns are stem+"board".
    Dev and test draw their adjective stems from pools disjoint from
    training, so their stem embeddings are never updated.
    """
    rng = random.Random(seed)
    n_train, n_dev, n_test = _split_counts(n_sentences)
    plan = [("train", n_train, TRAIN_ADJ), ("dev", n_dev, DEV_ADJ), ("test", n_test, TEST_ADJ)]

    datasets = {}
    for split, count, adj_pool in plan:
        examples = []
        for i in range(count):
            adj1, adj2 = rng.sample(adj_pool, 2)
            noun1, noun2 = rng.sample(ASPECT_STEMS, 2)
            prefix = rng.sample(FILLERS, rng.randint(0, 2))
            mid = rng.choice(MID_WORDS)
            suffix = rng.sample(FILLERS, rng.randint(0, 1))
            words = [
                *prefix,
                adj1 + "ly", noun1 + "board",
                mid,
                adj2 + "ly", noun2 + "board",
                *suffix,
            ]
            base = len(prefix)
            queried = rng.randrange(2)
            noun_pos = base + 1 if queried == 0 else base + 4
            adj_pos = noun_pos - 1
            examples.append(
                SentenceExample(
                    id=f"{split}-{i:05d}",
                    words=tuple(words),
                    aspect_span=(noun_pos, noun_pos),
                    opinion_spans=((adj_pos, adj_pos),),
                )
            )
        datasets[split] = Dataset(examples=tuple(examples), split=split)

    pieces = (
        FILLERS
        + ASPECT_STEMS
        + ["##board", "##ly"]
        + TRAIN_ADJ
        + DEV_ADJ
        + TEST_ADJ
    )
    vocab = Vocabulary.with_specials(pieces)
    return SyntheticData(train=datasets["train"], dev=datasets["dev"],
                         test=datasets["test"], vocab=vocab)


def coreference_corpus(n_sentences: int = 400, seed: int = 0) -> SyntheticData:
    """Sentences like ``the NOUN1 and the NOUN2 , it was ADJ1 but ADJ2``.

    Every sentence yields two examples, one per noun.  The pronoun clause
    holds two candidate opinions; the gold one is the first candidate when
    the queried noun is a "board" word and the second when it is a "ware"
    word.  Only the queried noun's suffix class carries that information.
    """
    rng = random.Random(seed)
    nouns = [s + "board" for s in ASPECT_STEMS] + [s + "ware" for s in WARE_STEMS]
    n_train, n_dev, n_test = _split_counts(n_sentences)
    plan = [("train", n_train), ("dev", n_dev), ("test", n_test)]

    datasets = {}
    for split, count in plan:
        examples = []
        for i in range(count):
            noun1, noun2 = rng.sample(nouns, 2)
            adj1, adj2 = rng.sample(COREF_ADJ, 2)
            mid = rng.choice(MID_WORDS)
            verb = rng.choice(["was", "felt", "looked"])
            words = [
                "the", noun1, mid, "the", noun2,
                "so", "it", verb, adj1 + "ly", "not", adj2 + "ly",
            ]
            for which, noun_pos in (("a", 1), ("b", 4)):
                noun = words[noun_pos]
                gold_pos = 8 if noun.endswith("board") else 10
                examples.append(
                    SentenceExample(
                        id=f"{split}-{i:05d}{which}",
                        words=tuple(words),
                        aspect_span=(noun_pos, noun_pos),
                        opinion_spans=((gold_pos, gold_pos),),
                    )
                )
        datasets[split] = Dataset(examples=tuple(examples), split=split)

    pieces = (
        FILLERS
        + ["felt", "looked", "it", "not"]
        + ASPECT_STEMS
        + WARE_STEMS
        + ["##board", "##ware", "##ly"]
        + COREF_ADJ
    )
    vocab = Vocabulary.with_specials(pieces)
    return SyntheticData(train=datasets["train"], dev=datasets["dev"],
                         test=datasets["test"], vocab=vocab)


def write_corpus(data: SyntheticData, out_dir: str | Path) -> None:
    """Write train/dev/test JSONL files and the vocabulary file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for split in ("train", "dev", "test"):
        save_dataset(data.split(split), out_dir / f"{split}.jsonl")
    save_vocab(data.vocab, out_dir / "vocab.txt")
