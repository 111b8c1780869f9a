"""Model-ready input construction.

Two input variants exist.  The sentence variant ``S`` is

    [CLS] piece_1 ... piece_n [SEP]

and the sentence-aspect variant ``SA`` appends the aspect's pieces once more,

    [CLS] piece_1 ... piece_n [SEP] aspect_piece_1 ... aspect_piece_k [SEP]

with the tail carrying segment id 1 and never contributing to the loss.
Word labels sit on each word's first piece; all other positions are SKIP and
excluded from the loss via the mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import LABEL_TO_ID, Span, WordLabel
from .errors import EncodingError
from .subword import BpeTokenizer, Tokenization, Vocabulary, WordpieceTokenizer

# Marker for positions excluded from the loss; never a softmax class.
SKIP = -1

DEFAULT_WINDOW = 50
DEFAULT_MAX_LEN = 256

VARIANTS = ("S", "SA")


@dataclass(frozen=True)
class EncodedInput:
    """Per-position model input.  All index pairs are inclusive and absolute."""

    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    position_ids: tuple[int, ...]
    label_ids: tuple[int, ...]
    loss_mask: tuple[bool, ...]
    sentence_region: Span
    aspect_piece_span: Span
    variant: str

    def __post_init__(self) -> None:
        n = len(self.token_ids)
        for name in ("segment_ids", "position_ids", "label_ids", "loss_mask"):
            if len(getattr(self, name)) != n:
                raise EncodingError(f"{name} length differs from token_ids length {n}")
        if self.variant not in VARIANTS:
            raise EncodingError(f"unknown variant {self.variant!r}")

    def __len__(self) -> int:
        return len(self.token_ids)


def project_labels_to_pieces(
    word_labels: Sequence[WordLabel],
    tok: Tokenization,
) -> tuple[list[int], list[bool]]:
    """Move word labels onto first pieces.

    Returns per-piece label ids and a loss mask: a word's first piece carries
    the word's label id with mask True, every other piece carries SKIP with
    mask False.
    """
    if len(word_labels) != tok.n_words:
        raise EncodingError(
            f"{len(word_labels)} labels for {tok.n_words} words"
        )
    label_ids = []
    loss_mask = []
    for word_idx, first in zip(tok.word_index, tok.is_first):
        if first:
            label_ids.append(LABEL_TO_ID[word_labels[word_idx]])
            loss_mask.append(True)
        else:
            label_ids.append(SKIP)
            loss_mask.append(False)
    return label_ids, loss_mask


def relative_position_ids(tok: Tokenization, window: int = DEFAULT_WINDOW) -> list[int]:
    """Signed offset of each piece to the nearest aspect piece, clipped to [-window, window]."""
    start, end = tok.aspect_piece_span
    offsets = []
    for i in range(tok.n_pieces):
        if i < start:
            off = i - start
        elif i > end:
            off = i - end
        else:
            off = 0
        offsets.append(max(-window, min(window, off)))
    return offsets


def _check_length(n: int, max_len: int) -> None:
    if n > max_len:
        raise EncodingError(f"encoded input of {n} positions exceeds the cap of {max_len}")


def format_sentence_input(
    tok: Tokenization,
    vocab: Vocabulary,
    word_labels: Sequence[WordLabel],
    *,
    window: int = DEFAULT_WINDOW,
    max_len: int = DEFAULT_MAX_LEN,
) -> EncodedInput:
    """Variant S: [CLS] pieces [SEP] with labels projected to first pieces."""
    label_ids, loss_mask = project_labels_to_pieces(word_labels, tok)
    positions = relative_position_ids(tok, window)
    n = tok.n_pieces + 2
    _check_length(n, max_len)
    token_ids = [vocab.cls_id, *(vocab.id_of(p) for p in tok.pieces), vocab.sep_id]
    a_start, a_end = tok.aspect_piece_span
    return EncodedInput(
        token_ids=tuple(token_ids),
        segment_ids=(0,) * n,
        position_ids=(0, *positions, 0),
        label_ids=(SKIP, *label_ids, SKIP),
        loss_mask=(False, *loss_mask, False),
        sentence_region=(1, tok.n_pieces),
        aspect_piece_span=(a_start + 1, a_end + 1),
        variant="S",
    )


def format_sentence_aspect_input(
    tok: Tokenization,
    vocab: Vocabulary,
    word_labels: Sequence[WordLabel],
    *,
    window: int = DEFAULT_WINDOW,
    max_len: int = DEFAULT_MAX_LEN,
) -> EncodedInput:
    """Variant SA: [CLS] pieces [SEP] aspect-pieces [SEP].

    The appended aspect tail only reinforces the aspect representation: it
    carries segment id 1, position id 0, SKIP labels, and a False loss mask.
    """
    base = format_sentence_input(tok, vocab, word_labels, window=window, max_len=max_len)
    tail_pieces = tok.aspect_pieces()
    n = len(base) + len(tail_pieces) + 1
    _check_length(n, max_len)
    tail_ids = [vocab.id_of(p) for p in tail_pieces] + [vocab.sep_id]
    k = len(tail_ids)
    return EncodedInput(
        token_ids=base.token_ids + tuple(tail_ids),
        segment_ids=base.segment_ids + (1,) * k,
        position_ids=base.position_ids + (0,) * k,
        label_ids=base.label_ids + (SKIP,) * k,
        loss_mask=base.loss_mask + (False,) * k,
        sentence_region=base.sentence_region,
        aspect_piece_span=base.aspect_piece_span,
        variant="SA",
    )


def mask_aspect(enc: EncodedInput, vocab: Vocabulary) -> EncodedInput:
    """Replace the aspect's token ids inside the sentence region with [MASK].

    The SA tail, if present, is left untouched; every non-token field is
    carried over unchanged.  Idempotent.
    """
    start, end = enc.aspect_piece_span
    token_ids = list(enc.token_ids)
    for i in range(start, end + 1):
        token_ids[i] = vocab.mask_id
    return replace(enc, token_ids=tuple(token_ids))


def make_encoder(variant: str):
    if variant == "S":
        return format_sentence_input
    if variant == "SA":
        return format_sentence_aspect_input
    raise EncodingError(f"unknown variant {variant!r}")


def encode_example(
    example,
    tokenizer: WordpieceTokenizer | BpeTokenizer,
    variant: str,
    *,
    window: int = DEFAULT_WINDOW,
    max_len: int = DEFAULT_MAX_LEN,
    mask: bool = False,
) -> EncodedInput:
    """Tokenize one SentenceExample and format it for the given variant."""
    from .corpus import derive_word_labels
    from .subword import tokenize_sentence

    tok = tokenize_sentence(example.words, tokenizer, example.aspect_span)
    labels = derive_word_labels(example)
    enc = make_encoder(variant)(tok, tokenizer.vocab, labels, window=window, max_len=max_len)
    if mask:
        enc = mask_aspect(enc, tokenizer.vocab)
    return enc


def encode_dataset(
    examples: Iterable,
    tokenizer: WordpieceTokenizer | BpeTokenizer,
    variant: str,
    *,
    window: int = DEFAULT_WINDOW,
    max_len: int = DEFAULT_MAX_LEN,
    mask: bool = False,
) -> list[tuple[object, EncodedInput]]:
    """Encode every example, returning (example, encoding) pairs."""
    return [
        (ex, encode_example(ex, tokenizer, variant, window=window, max_len=max_len, mask=mask))
        for ex in examples
    ]


def dump_encoded(
    pairs: Sequence[tuple[object, EncodedInput]],
    path: str | Path,
    *,
    vocab_sha256: str,
    tokenizer_name: str,
    variant: str,
    window: int = DEFAULT_WINDOW,
) -> None:
    """Write a prepared-input dump: a header line, then one record per example.

    The header records the vocabulary checksum so downstream consumers (such
    as a feature exporter) can refuse inputs prepared with a different
    vocabulary.
    """
    header = {
        "format": "towe-prepared",
        "version": 1,
        "variant": variant,
        "tokenizer": tokenizer_name,
        "window": window,
        "vocab_sha256": vocab_sha256,
    }
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header) + "\n")
        for example, enc in pairs:
            record = {
                "id": example.id,
                "token_ids": list(enc.token_ids),
                "segment_ids": list(enc.segment_ids),
                "position_ids": list(enc.position_ids),
                "label_ids": list(enc.label_ids),
                "loss_mask": [int(m) for m in enc.loss_mask],
                "sentence_region": list(enc.sentence_region),
                "aspect_piece_span": list(enc.aspect_piece_span),
                "variant": enc.variant,
            }
            handle.write(json.dumps(record) + "\n")
