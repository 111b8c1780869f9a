import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from towe.corpus import WordLabel, derive_word_labels
from towe.encoding import (
    SKIP,
    dump_encoded,
    encode_example,
    format_sentence_aspect_input,
    format_sentence_input,
    mask_aspect,
    project_labels_to_pieces,
    relative_position_ids,
)
from towe.errors import EncodingError
from towe.subword import Tokenization, Vocabulary, WordpieceTokenizer, tokenize_sentence

O, B, I = WordLabel.O, WordLabel.B, WordLabel.I


@pytest.fixture(scope="module")
def showcase(table_tokenizer):
    tok = tokenize_sentence(["such", "an", "awesome", "surfboard"], table_tokenizer, (3, 3))
    return tok, [O, O, B, O]


def test_sentence_input_structure(showcase, table_vocab):
    tok, labels = showcase
    enc = format_sentence_input(tok, table_vocab, labels)
    assert len(enc) == 7
    assert enc.variant == "S"
    assert enc.token_ids[0] == table_vocab.cls_id
    assert enc.token_ids[-1] == table_vocab.sep_id
    assert enc.token_ids.count(table_vocab.sep_id) == 1
    assert set(enc.segment_ids) == {0}
    assert enc.sentence_region == (1, 5)
    assert enc.aspect_piece_span == (4, 5)
    pieces = [table_vocab.pieces[i] for i in enc.token_ids[1:6]]
    assert pieces == ["such", "an", "awesome", "surf", "##board"]


def test_sentence_aspect_input_structure(showcase, table_vocab):
    tok, labels = showcase
    enc = format_sentence_aspect_input(tok, table_vocab, labels)
    assert len(enc) == 10
    assert enc.variant == "SA"
    assert enc.token_ids.count(table_vocab.sep_id) == 2
    tail = [table_vocab.pieces[i] for i in enc.token_ids[7:9]]
    assert tail == ["surf", "##board"]
    assert enc.segment_ids == (0,) * 7 + (1,) * 3
    assert enc.loss_mask[7:] == (False, False, False)
    assert enc.label_ids[7:] == (SKIP, SKIP, SKIP)


def test_single_word_sentence_length(table_vocab, table_tokenizer):
    tok = tokenize_sentence(["awesome"], table_tokenizer, (0, 0))
    enc = format_sentence_input(tok, table_vocab, [O])
    assert len(enc) == 3
    enc_sa = format_sentence_aspect_input(tok, table_vocab, [O])
    assert len(enc_sa) == 5  # one aspect piece + [SEP]


def test_loss_mask_sits_on_first_pieces(showcase, table_vocab):
    tok, labels = showcase
    enc = format_sentence_input(tok, table_vocab, labels)
    assert enc.loss_mask == (False, True, True, True, True, False, False)
    assert enc.label_ids[1:5] == (2, 2, 0, 2)  # O O B O
    assert enc.label_ids[5] == SKIP


def test_project_labels_multi_piece_word():
    tok = Tokenization(
        pieces=("aa", "bb", "cc", "dd", "##ee"),
        word_index=(0, 1, 2, 3, 3),
        is_first=(True, True, True, True, False),
        aspect_piece_span=(3, 4),
    )
    label_ids, loss_mask = project_labels_to_pieces([O, O, B, O], tok)
    assert label_ids == [2, 2, 0, 2, SKIP]
    assert loss_mask == [True, True, True, True, False]


def test_project_labels_identity_when_single_piece():
    tok = Tokenization(pieces=("x", "y"), word_index=(0, 1), is_first=(True, True),
                       aspect_piece_span=(0, 0))
    label_ids, loss_mask = project_labels_to_pieces([B, I], tok)
    assert label_ids == [0, 1]
    assert loss_mask == [True, True]


def test_project_labels_three_piece_word():
    tok = Tokenization(
        pieces=("x", "##y", "##z"),
        word_index=(0, 0, 0),
        is_first=(True, False, False),
        aspect_piece_span=(0, 2),
    )
    label_ids, loss_mask = project_labels_to_pieces([I], tok)
    assert label_ids == [1, SKIP, SKIP]
    assert loss_mask == [True, False, False]


def test_relative_positions():
    tok = Tokenization(
        pieces=tuple("abcdefgh"),
        word_index=tuple(range(8)),
        is_first=(True,) * 8,
        aspect_piece_span=(3, 4),
    )
    assert relative_position_ids(tok, window=50) == [-3, -2, -1, 0, 0, 1, 2, 3]
    assert relative_position_ids(tok, window=2) == [-2, -2, -1, 0, 0, 1, 2, 2]


def test_relative_positions_clip_far_piece():
    n = 60
    tok = Tokenization(
        pieces=tuple(f"p{i}" for i in range(n)),
        word_index=tuple(range(n)),
        is_first=(True,) * n,
        aspect_piece_span=(0, 0),
    )
    ids = relative_position_ids(tok, window=50)
    assert ids[57] == 50  # distance 57 clips to the window
    assert ids[0] == 0


def test_mask_aspect_masks_only_sentence_aspect(showcase, table_vocab):
    tok, labels = showcase
    enc = format_sentence_aspect_input(tok, table_vocab, labels)
    masked = mask_aspect(enc, table_vocab)
    assert masked.token_ids[4] == masked.token_ids[5] == table_vocab.mask_id
    # everything else unchanged, including the aspect tail
    for i, (a, b) in enumerate(zip(enc.token_ids, masked.token_ids)):
        if i not in (4, 5):
            assert a == b
    assert masked.segment_ids == enc.segment_ids
    assert masked.label_ids == enc.label_ids
    assert masked.loss_mask == enc.loss_mask


def test_mask_aspect_idempotent(showcase, table_vocab):
    tok, labels = showcase
    enc = format_sentence_input(tok, table_vocab, labels)
    once = mask_aspect(enc, table_vocab)
    assert mask_aspect(once, table_vocab) == once


def test_length_cap_rejects_long_input(table_vocab, table_tokenizer):
    tok = tokenize_sentence(["an"] * 20, table_tokenizer, (0, 0))
    with pytest.raises(EncodingError, match="exceeds"):
        format_sentence_input(tok, table_vocab, [O] * 20, max_len=10)


words_strategy = st.lists(
    st.sampled_from(["such", "an", "awesome", "surfboard", "snowboard", "great", "zzz"]),
    min_size=1, max_size=10,
)


@given(words_strategy, st.data())
def test_structural_properties_both_variants(words, data):
    vocab = Vocabulary.with_specials(
        ["such", "an", "awesome", "surf", "snow", "##board", "great"]
    )
    start = data.draw(st.integers(0, len(words) - 1))
    end = data.draw(st.integers(start, len(words) - 1))
    tok = tokenize_sentence(words, WordpieceTokenizer(vocab), (start, end))
    labels = [data.draw(st.sampled_from([O, B, I])) for _ in words]

    enc_s = format_sentence_input(tok, vocab, labels)
    enc_sa = format_sentence_aspect_input(tok, vocab, labels)

    lo, hi = tok.aspect_piece_span
    n_aspect = hi - lo + 1
    assert len(enc_sa) == len(enc_s) + n_aspect + 1
    assert sum(enc_s.loss_mask) == len(words)
    assert sum(enc_sa.loss_mask) == len(words)
    # stripping specials and the tail recovers the piece sequence
    s_lo, s_hi = enc_s.sentence_region
    assert tuple(vocab.pieces[i] for i in enc_s.token_ids[s_lo : s_hi + 1]) == tok.pieces
    assert tuple(vocab.pieces[i] for i in enc_sa.token_ids[s_lo : s_hi + 1]) == tok.pieces


def test_dump_encoded_mirrors_fields(tmp_path, table_tokenizer, surfboard_example):
    enc = encode_example(surfboard_example, table_tokenizer, "SA")
    out = tmp_path / "prep.jsonl"
    dump_encoded([(surfboard_example, enc)], out, vocab_sha256="ab" * 32,
                 tokenizer_name="wordpiece", variant="SA")
    lines = out.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["format"] == "towe-prepared"
    assert header["vocab_sha256"] == "ab" * 32
    record = json.loads(lines[1])
    assert record["id"] == "e1"
    assert record["token_ids"] == list(enc.token_ids)
    assert record["loss_mask"] == [int(m) for m in enc.loss_mask]
    assert record["variant"] == "SA"
