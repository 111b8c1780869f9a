import json

import pytest

from towe.corpus import SentenceExample
from towe.subword import Vocabulary, WordpieceTokenizer

# Pieces needed to tokenize both showcase sentences exactly as printed:
# "Such an awesome surfboard" and "A great snowboard which holds edges well
# when riding on snow".
TABLE_PIECES = [
    "such", "an", "awesome", "surf", "snow", "##board", "great", "a",
    "A", "which", "holds", "edges", "well", "when", "riding", "on",
]


@pytest.fixture(scope="session")
def table_vocab() -> Vocabulary:
    return Vocabulary.with_specials(TABLE_PIECES)


@pytest.fixture(scope="session")
def table_tokenizer(table_vocab) -> WordpieceTokenizer:
    return WordpieceTokenizer(table_vocab)


@pytest.fixture(scope="session")
def surfboard_example() -> SentenceExample:
    return SentenceExample(
        id="e1",
        words=("such", "an", "awesome", "surfboard"),
        aspect_span=(3, 3),
        opinion_spans=((2, 2),),
    )


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
    return path
