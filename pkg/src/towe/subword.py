"""Subword tokenization: WordPiece (greedy longest match) and byte-pair encoding.

Both tokenizers share the ``##`` continuation convention: a word's first
piece is bare, every later piece is prefixed with ``##``.  Stripping the
prefix and concatenating therefore recovers the word, unless the word
collapsed to the unknown token.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Span
from .errors import VocabError

CONTINUATION_PREFIX = "##"

CLS, SEP, PAD, UNK, MASK = "[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)

# Words longer than this never match and become [UNK] outright.
MAX_WORD_CHARS = 100


@dataclass(frozen=True)
class Vocabulary:
    """Ordered piece inventory; a piece's list position is its id."""

    pieces: tuple[str, ...]
    continuation_prefix: str = CONTINUATION_PREFIX
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = {}
        for i, piece in enumerate(self.pieces):
            if piece in index:
                raise VocabError(f"duplicate piece {piece!r} at ids {index[piece]} and {i}")
            index[piece] = i
        for special in SPECIAL_TOKENS:
            if special not in index:
                raise VocabError(f"vocabulary is missing special token {special}")
        object.__setattr__(self, "_index", index)

    @classmethod
    def with_specials(cls, pieces: Iterable[str]) -> "Vocabulary":
        """Specials first (ids 0..4), then the given pieces in order, deduplicated."""
        out = list(SPECIAL_TOKENS)
        seen = set(out)
        for piece in pieces:
            if piece not in seen:
                out.append(piece)
                seen.add(piece)
        return cls(pieces=tuple(out))

    def __len__(self) -> int:
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self._index

    def id_of(self, piece: str) -> int:
        try:
            return self._index[piece]
        except KeyError:
            raise VocabError(f"piece {piece!r} not in vocabulary") from None

    @property
    def pad_id(self) -> int:
        return self._index[PAD]

    @property
    def unk_id(self) -> int:
        return self._index[UNK]

    @property
    def cls_id(self) -> int:
        return self._index[CLS]

    @property
    def sep_id(self) -> int:
        return self._index[SEP]

    @property
    def mask_id(self) -> int:
        return self._index[MASK]


def load_vocab(path: str | Path) -> Vocabulary:
    """Read a vocabulary file: one piece per line, 0-based line number = id."""
    path = Path(path)
    pieces = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle):
            piece = line.rstrip("\n")
            if not piece:
                raise VocabError(f"{path}: line {line_no}: empty piece")
            if piece in seen:
                raise VocabError(
                    f"{path}: line {line_no}: duplicate piece {piece!r} "
                    f"(first at line {seen[piece]})"
                )
            seen[piece] = line_no
            pieces.append(piece)
    return Vocabulary(pieces=tuple(pieces))


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for piece in vocab.pieces:
            handle.write(piece + "\n")


def wordpiece_tokenize(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first decomposition of one word.

    At each position the longest vocabulary prefix is taken (pieces after the
    first carry the ``##`` prefix).  If at any position no prefix matches,
    the whole word becomes ``[UNK]``.
    """
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = vocab.continuation_prefix + candidate
            if candidate in vocab:
                match = candidate
                break
            end -= 1
        if match is None:
            return [UNK]
        pieces.append(match)
        start = end
    return pieces


@dataclass(frozen=True)
class MergeTable:
    """Ordered BPE merges; the list position of a pair is its rank."""

    merges: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        seen = set()
        for pair in self.merges:
            if pair in seen:
                raise VocabError(f"duplicate merge pair {pair!r}")
            seen.add(pair)

    def __len__(self) -> int:
        return len(self.merges)

    def rank_of(self) -> dict[tuple[str, str], int]:
        return {pair: rank for rank, pair in enumerate(self.merges)}


def merged_symbol(left: str, right: str) -> str:
    """Concatenate a merge pair, dropping the right symbol's continuation prefix."""
    return left + right.removeprefix(CONTINUATION_PREFIX)


def word_to_symbols(word: str) -> list[str]:
    """Initial BPE symbols of a word: bare first character, ##-prefixed rest."""
    return [c if i == 0 else CONTINUATION_PREFIX + c for i, c in enumerate(word)]


def _apply_merge(symbols: list[str], pair: tuple[str, str]) -> list[str]:
    """Fuse every non-overlapping occurrence of pair, scanning left to right."""
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == pair:
            out.append(merged_symbol(*pair))
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def train_bpe(
    corpus: Mapping[str, int] | Iterable[tuple[str, int]],
    num_merges: int,
) -> tuple[MergeTable, Vocabulary]:
    """Learn a merge table from word frequencies.

    Each round counts adjacent symbol pairs over the whole corpus (weighted
    by word frequency), merges the most frequent pair everywhere, and records
    it.  Ties are broken by taking the lexicographically smallest pair, so
    training is deterministic.  Stops early once no pair occurs or the
    requested number of merges is reached.

    Returns the merge table and a vocabulary of special tokens, the initial
    characters (continuation-prefixed in non-initial position), and the
    merged symbols in merge order.
    """
    corpus = dict(corpus)
    if not corpus:
        raise VocabError("cannot train BPE on an empty corpus")
    if num_merges < 0:
        raise VocabError(f"num_merges must be >= 0, got {num_merges}")
    for word, freq in corpus.items():
        if not word or freq <= 0:
            raise VocabError(f"bad corpus entry {word!r}: {freq}")

    words = [(word_to_symbols(word), freq) for word, freq in sorted(corpus.items())]
    alphabet = sorted({sym for symbols, _ in words for sym in symbols})

    merges: list[tuple[str, str]] = []
    merged_set: set[tuple[str, str]] = set()
    for _ in range(num_merges):
        counts: Counter[tuple[str, str]] = Counter()
        for symbols, freq in words:
            for a, b in zip(symbols, symbols[1:]):
                counts[(a, b)] += freq
        candidates = [(pair, n) for pair, n in counts.items() if pair not in merged_set]
        if not candidates:
            break
        best = min(candidates, key=lambda item: (-item[1], item[0]))[0]
        merges.append(best)
        merged_set.add(best)
        words = [(_apply_merge(symbols, best), freq) for symbols, freq in words]

    vocab = Vocabulary.with_specials(alphabet + [merged_symbol(*p) for p in merges])
    return MergeTable(merges=tuple(merges)), vocab


def bpe_tokenize(word: str, merges: MergeTable, vocab: Vocabulary) -> list[str]:
    """Deterministic BPE inference on one word.

    Starting from the character symbols, repeatedly applies the lowest-rank
    merge whose pair occurs, until none applies.  A word containing a symbol
    never seen in training (absent from the vocabulary, including a known
    character in an unseen word position) becomes ``[UNK]`` as a whole.
    """
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    symbols = word_to_symbols(word)
    if any(sym not in vocab for sym in symbols):
        return [UNK]
    ranks = merges.rank_of()
    while len(symbols) > 1:
        ranked = [
            (ranks[pair], pair)
            for pair in set(zip(symbols, symbols[1:]))
            if pair in ranks
        ]
        if not ranked:
            break
        _, pair = min(ranked)
        symbols = _apply_merge(symbols, pair)
    return symbols


def load_merges(path: str | Path) -> MergeTable:
    """Read a merge file: one merge per line, two space-separated symbols."""
    path = Path(path)
    merges = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle):
            line = line.rstrip("\n")
            parts = line.split(" ")
            if len(parts) != 2 or not all(parts):
                raise VocabError(
                    f"{path}: line {line_no}: expected two space-separated symbols, got {line!r}"
                )
            pair = (parts[0], parts[1])
            if pair in merges:
                raise VocabError(f"{path}: line {line_no}: duplicate merge {line!r}")
            merges.append(pair)
    return MergeTable(merges=tuple(merges))


def save_merges(merges: MergeTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for left, right in merges.merges:
            handle.write(f"{left} {right}\n")


@dataclass(frozen=True)
class Tokenization:
    """A sentence's pieces with word alignment.

    ``word_index[i]`` is the source word of piece i, ``is_first[i]`` flags
    the word's first piece, ``aspect_piece_span`` is the inclusive piece span
    covering the aspect words.
    """

    pieces: tuple[str, ...]
    word_index: tuple[int, ...]
    is_first: tuple[bool, ...]
    aspect_piece_span: Span

    def __post_init__(self) -> None:
        n = len(self.pieces)
        if len(self.word_index) != n or len(self.is_first) != n:
            raise ValueError("pieces, word_index and is_first must have equal length")

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    @property
    def n_words(self) -> int:
        return self.word_index[-1] + 1 if self.word_index else 0

    def aspect_pieces(self) -> tuple[str, ...]:
        start, end = self.aspect_piece_span
        return self.pieces[start : end + 1]


class WordpieceTokenizer:
    """Bundles a vocabulary with greedy WordPiece matching."""

    name = "wordpiece"

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def tokenize_word(self, word: str) -> list[str]:
        return wordpiece_tokenize(word, self.vocab)


class BpeTokenizer:
    """Bundles a merge table and vocabulary for BPE inference."""

    name = "bpe"

    def __init__(self, merges: MergeTable, vocab: Vocabulary):
        self.merges = merges
        self.vocab = vocab

    def tokenize_word(self, word: str) -> list[str]:
        return bpe_tokenize(word, self.merges, self.vocab)


def tokenize_sentence(
    words: list[str] | tuple[str, ...],
    tokenizer: WordpieceTokenizer | BpeTokenizer,
    aspect_span: Span,
) -> Tokenization:
    """Tokenize each word in order, tracking alignment and the aspect's pieces."""
    start, end = aspect_span
    if not (0 <= start <= end < len(words)):
        raise ValueError(f"aspect span {aspect_span} out of range for {len(words)} words")
    pieces: list[str] = []
    word_index: list[int] = []
    is_first: list[bool] = []
    word_starts: list[int] = []
    word_ends: list[int] = []
    for j, word in enumerate(words):
        word_pieces = tokenizer.tokenize_word(word)
        word_starts.append(len(pieces))
        pieces.extend(word_pieces)
        word_ends.append(len(pieces) - 1)
        word_index.extend([j] * len(word_pieces))
        is_first.extend([True] + [False] * (len(word_pieces) - 1))
    return Tokenization(
        pieces=tuple(pieces),
        word_index=tuple(word_index),
        is_first=tuple(is_first),
        aspect_piece_span=(word_starts[start], word_ends[end]),
    )
