"""Dataset schema, JSONL loading, and word-level IOB tag derivation.

An example is a pre-tokenized sentence, an inclusive word span marking the
aspect (the target the opinion is about), and zero or more inclusive word
spans marking the gold opinion words.  Sentences with several aspects appear
as several examples, one per aspect.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import CorpusError

SPLITS = ("train", "dev", "test")

Span = tuple[int, int]


class WordLabel(str, enum.Enum):
    """IOB tag of a single word: Beginning, Inside, or Outside an opinion span."""

    B = "B"
    I = "I"
    O = "O"


# Fixed label indexing used by the classifier; SKIP marks positions excluded
# from the loss and is never a class.
LABEL_TO_ID = {WordLabel.B: 0, WordLabel.I: 1, WordLabel.O: 2}
ID_TO_LABEL = {i: lab for lab, i in LABEL_TO_ID.items()}
NUM_LABELS = 3


def _check_span(span: Span, n_words: int, what: str, example_id: str) -> None:
    start, end = span
    if not (0 <= start <= end < n_words):
        raise CorpusError(
            f"example {example_id!r}: {what} span {list(span)} out of range "
            f"for {n_words}-word sentence"
        )


@dataclass(frozen=True)
class SentenceExample:
    """One (sentence, aspect) pair with its gold opinion spans.

    Spans are inclusive (start, end) word-index pairs.  Opinion spans must be
    sorted, pairwise non-overlapping, and disjoint from the aspect span.
    """

    id: str
    words: tuple[str, ...]
    aspect_span: Span
    opinion_spans: tuple[Span, ...] = ()

    def __post_init__(self) -> None:
        if not self.words:
            raise CorpusError(f"example {self.id!r}: empty sentence")
        n = len(self.words)
        _check_span(self.aspect_span, n, "aspect", self.id)
        prev_end = -1
        for span in self.opinion_spans:
            _check_span(span, n, "opinion", self.id)
            if span[0] <= prev_end:
                raise CorpusError(
                    f"example {self.id!r}: opinion spans must be sorted and "
                    f"non-overlapping, got {[list(s) for s in self.opinion_spans]}"
                )
            prev_end = span[1]
            if span[0] <= self.aspect_span[1] and self.aspect_span[0] <= span[1]:
                raise CorpusError(
                    f"example {self.id!r}: opinion span {list(span)} overlaps "
                    f"aspect span {list(self.aspect_span)}"
                )

    @property
    def n_words(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class Dataset:
    examples: tuple[SentenceExample, ...]
    split: str

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r}, expected one of {SPLITS}")
        seen: set[str] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise CorpusError(f"duplicate example id {ex.id!r} in split {self.split!r}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def _span_from_json(value, example_id: str, what: str) -> Span:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise CorpusError(
            f"example {example_id!r}: {what} must be a two-element integer array, got {value!r}"
        )
    return (value[0], value[1])


def example_from_record(record: dict, line_no: int | None = None) -> SentenceExample:
    """Build a SentenceExample from one decoded JSONL record."""
    where = f"line {line_no}: " if line_no is not None else ""
    if not isinstance(record, dict):
        raise CorpusError(f"{where}record is not a JSON object")
    try:
        example_id = record["id"]
        words = record["words"]
        aspect = record["aspect"]
    except KeyError as exc:
        raise CorpusError(f"{where}missing key {exc.args[0]!r}") from None
    if not isinstance(example_id, str):
        raise CorpusError(f"{where}'id' must be a string")
    if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
        raise CorpusError(f"example {example_id!r}: 'words' must be an array of strings")
    opinions = record.get("opinions", [])
    if not isinstance(opinions, list):
        raise CorpusError(f"example {example_id!r}: 'opinions' must be an array")
    return SentenceExample(
        id=example_id,
        words=tuple(words),
        aspect_span=_span_from_json(aspect, example_id, "aspect"),
        opinion_spans=tuple(_span_from_json(o, example_id, "opinion") for o in opinions),
    )


def load_dataset(path: str | Path, split: str) -> Dataset:
    """Load a JSONL dataset file: one record per line, UTF-8.

    Record keys: ``id`` (string), ``words`` (array of strings), ``aspect``
    (inclusive [start, end]), ``opinions`` (array of inclusive [start, end];
    may be omitted for unlabeled prediction input).  Blank or non-JSON lines
    are rejected.
    """
    path = Path(path)
    examples = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, 1):
            line = line.rstrip("\n")
            if not line.strip():
                raise CorpusError(f"{path}: line {line_no}: blank line in dataset file")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {line_no}: invalid JSON ({exc.msg})") from None
            examples.append(example_from_record(record, line_no))
    return Dataset(examples=tuple(examples), split=split)


def save_dataset(dataset: Iterable[SentenceExample], path: str | Path) -> None:
    """Write examples in the JSONL schema read by load_dataset."""
    with open(path, "w", encoding="utf-8") as handle:
        for ex in dataset:
            record = {
                "id": ex.id,
                "words": list(ex.words),
                "aspect": list(ex.aspect_span),
                "opinions": [list(s) for s in ex.opinion_spans],
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def derive_word_labels(example: SentenceExample) -> list[WordLabel]:
    """IOB tags per word: B at each opinion-span start, I strictly inside, O elsewhere."""
    labels = [WordLabel.O] * example.n_words
    for start, end in example.opinion_spans:
        labels[start] = WordLabel.B
        for j in range(start + 1, end + 1):
            labels[j] = WordLabel.I
    return labels


def _parse_tagged_column(column: str, line_no: int, path: Path) -> tuple[list[str], list[str]]:
    """Split a 'word\\TAG word\\TAG ...' column into words and tags."""
    words, tags = [], []
    for token in column.split():
        word, sep, tag = token.rpartition("\\")
        if not sep or tag not in ("B", "I", "O"):
            raise CorpusError(
                f"{path}: line {line_no}: cannot parse tagged token {token!r} "
                "(expected word\\B, word\\I or word\\O)"
            )
        words.append(word)
        tags.append(tag)
    return words, tags


def _tags_to_spans(tags: list[str]) -> list[Span]:
    spans: list[Span] = []
    for j, tag in enumerate(tags):
        if tag == "B":
            spans.append((j, j))
        elif tag == "I":
            if spans and spans[-1][1] == j - 1:
                spans[-1] = (spans[-1][0], j)
            else:
                spans.append((j, j))
    return spans


def convert_legacy_tsv(path: str | Path, split: str = "train") -> Dataset:
    """Convert the public tab-separated distribution format to a Dataset.

    Each record has three tab-separated columns: the plain sentence, the
    per-word target column ('word\\B word\\I word\\O ...'), and the per-word
    opinion column in the same tag-suffixed form.  One aspect per record.
    """
    path = Path(path)
    examples = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            columns = line.split("\t")
            if len(columns) != 3:
                raise CorpusError(
                    f"{path}: line {line_no}: expected 3 tab-separated columns, "
                    f"got {len(columns)}"
                )
            sentence, target_col, opinion_col = columns
            words = sentence.split()
            t_words, t_tags = _parse_tagged_column(target_col, line_no, path)
            o_words, o_tags = _parse_tagged_column(opinion_col, line_no, path)
            if t_words != words or o_words != words:
                raise CorpusError(
                    f"{path}: line {line_no}: tagged columns do not match the sentence column"
                )
            target_spans = _tags_to_spans(t_tags)
            if len(target_spans) != 1:
                raise CorpusError(
                    f"{path}: line {line_no}: expected exactly one target span, "
                    f"found {len(target_spans)}"
                )
            examples.append(
                SentenceExample(
                    id=f"{split}-{line_no}",
                    words=tuple(words),
                    aspect_span=target_spans[0],
                    opinion_spans=tuple(_tags_to_spans(o_tags)),
                )
            )
    return Dataset(examples=tuple(examples), split=split)
