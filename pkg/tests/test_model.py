import struct

import numpy as np
import pytest

from towe.corpus import SentenceExample
from towe.encoding import EncodedInput, SKIP, encode_example
from towe.errors import CheckpointError, ToweError
from towe.model import (
    Hyperparameters,
    Parameters,
    backward,
    features_for,
    finite_difference_check,
    forward,
    hyperparameters_from_checkpoint,
    init_parameters,
    load_checkpoint,
    load_external_features,
    predict_word_labels,
    save_checkpoint,
    sequence_loss,
)
from towe.subword import Vocabulary, WordpieceTokenizer

VOCAB = Vocabulary.with_specials(list("abcdefgh"))
TOKENIZER = WordpieceTokenizer(VOCAB)


def small_hp(**overrides) -> Hyperparameters:
    base = dict(vocab_size=len(VOCAB), embed_dim=5, hidden_dim=5, window=3, seed=3)
    base.update(overrides)
    return Hyperparameters(**base)


def random_example(rng: np.random.Generator, max_words: int = 6) -> SentenceExample:
    n = int(rng.integers(1, max_words + 1))
    words = [str(VOCAB.pieces[5 + int(rng.integers(0, 8))]) for _ in range(n)]
    a = int(rng.integers(0, n))
    free = [j for j in range(n) if j != a]
    opinions = ()
    if free and rng.random() < 0.8:
        j = int(rng.choice(free))
        opinions = ((j, j),)
    return SentenceExample(id=f"r{rng.integers(1e9)}", words=tuple(words),
                           aspect_span=(a, a), opinion_spans=opinions)


def random_encoding(rng, variant="S", **hp_overrides):
    hp = small_hp(**hp_overrides)
    ex = random_example(rng)
    enc = encode_example(ex, TOKENIZER, variant, window=hp.window)
    return ex, enc, hp


def test_init_deterministic():
    a = init_parameters(small_hp(seed=11))
    b = init_parameters(small_hp(seed=11))
    for (_, x), (_, y) in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)


def test_init_seed_changes_weights():
    a = init_parameters(small_hp(seed=1))
    b = init_parameters(small_hp(seed=2))
    assert not np.array_equal(a.token_emb, b.token_emb)


def test_init_forget_gate_bias_is_one():
    params = init_parameters(small_hp())
    h = 5
    assert np.array_equal(params.fwd_b[h : 2 * h], np.ones(h))
    assert np.array_equal(params.bwd_b[h : 2 * h], np.ones(h))
    assert np.array_equal(params.fwd_b[:h], np.zeros(h))
    assert np.array_equal(params.out_b, np.zeros(3))


def test_probability_rows_normalized():
    rng = np.random.default_rng(0)
    for _ in range(10):
        _, enc, hp = random_encoding(rng, variant="SA")
        trace = forward(enc, init_parameters(hp), hp)
        assert trace.probs.shape == (len(enc), 3)
        np.testing.assert_allclose(trace.probs.sum(axis=1), 1.0, atol=1e-6)
        assert (trace.probs > 0).all() and (trace.probs < 1).all()


def test_zero_classifier_gives_uniform_probs():
    rng = np.random.default_rng(1)
    _, enc, hp = random_encoding(rng)
    params = init_parameters(hp)
    params.out_w[:] = 0.0
    params.out_b[:] = 0.0
    trace = forward(enc, params, hp)
    np.testing.assert_allclose(trace.probs, 1.0 / 3.0, atol=1e-12)
    k = sum(enc.loss_mask)
    if k:
        assert abs(sequence_loss(trace, enc) - np.log(3.0)) < 1e-9


def test_reversed_input_swaps_directions():
    # With identical weights in both directions, the forward states of x match
    # the backward states of reversed(x), read in reverse.
    rng = np.random.default_rng(7)
    hp = small_hp()
    params = init_parameters(hp)
    params.bwd_wx[:] = params.fwd_wx
    params.bwd_wh[:] = params.fwd_wh
    params.bwd_b[:] = params.fwd_b
    ids = [int(rng.integers(0, len(VOCAB))) for _ in range(4)]

    def enc_for(token_ids):
        n = len(token_ids)
        return EncodedInput(
            token_ids=tuple(token_ids), segment_ids=(0,) * n, position_ids=(0,) * n,
            label_ids=(SKIP,) * n, loss_mask=(False,) * n,
            sentence_region=(1, n - 2), aspect_piece_span=(1, 1), variant="S",
        )

    t_fwd = forward(enc_for(ids), params, hp)
    t_rev = forward(enc_for(ids[::-1]), params, hp)
    np.testing.assert_allclose(t_fwd.fwd.h, t_rev.bwd.h[::-1], atol=1e-12)
    np.testing.assert_allclose(t_fwd.bwd.h, t_rev.fwd.h[::-1], atol=1e-12)


def test_all_masks_false_gives_zero_gradients():
    rng = np.random.default_rng(2)
    _, enc, hp = random_encoding(rng)
    enc = EncodedInput(
        token_ids=enc.token_ids, segment_ids=enc.segment_ids,
        position_ids=enc.position_ids, label_ids=(SKIP,) * len(enc),
        loss_mask=(False,) * len(enc), sentence_region=enc.sentence_region,
        aspect_piece_span=enc.aspect_piece_span, variant=enc.variant,
    )
    params = init_parameters(hp)
    grads = backward(forward(enc, params, hp), enc, params, hp)
    for _, arr in grads.arrays():
        assert np.array_equal(arr, np.zeros_like(arr))
    assert sequence_loss(forward(enc, params, hp), enc) == 0.0


def test_single_labeled_position_logit_gradient():
    # With one labeled position, the classifier bias gradient is exactly
    # probs - one_hot(label) at that position.
    hp = small_hp()
    params = init_parameters(hp)
    enc = EncodedInput(
        token_ids=(VOCAB.cls_id, 6, 7, VOCAB.sep_id),
        segment_ids=(0,) * 4, position_ids=(0,) * 4,
        label_ids=(SKIP, 0, SKIP, SKIP), loss_mask=(False, True, False, False),
        sentence_region=(1, 2), aspect_piece_span=(2, 2), variant="S",
    )
    trace = forward(enc, params, hp)
    grads = backward(trace, enc, params, hp)
    expected = trace.probs[1].copy()
    expected[0] -= 1.0
    np.testing.assert_allclose(grads.out_b, expected, atol=1e-12)


@pytest.mark.parametrize("variant,use_position,use_segment", [
    ("S", False, False),
    ("SA", False, False),
    ("SA", True, True),
])
def test_finite_difference_small_instances(variant, use_position, use_segment):
    rng = np.random.default_rng(42)
    for _ in range(3):
        _, enc, hp = random_encoding(rng, variant=variant,
                                     use_position=use_position, use_segment=use_segment)
        params = init_parameters(hp)
        assert finite_difference_check(enc, params, hp, 1e-5) < 1e-4


def test_finite_difference_zero_mask_returns_zero():
    hp = small_hp()
    params = init_parameters(hp)
    enc = EncodedInput(
        token_ids=(VOCAB.cls_id, 5, VOCAB.sep_id),
        segment_ids=(0,) * 3, position_ids=(0,) * 3,
        label_ids=(SKIP,) * 3, loss_mask=(False,) * 3,
        sentence_region=(1, 1), aspect_piece_span=(1, 1), variant="S",
    )
    assert finite_difference_check(enc, params, hp, 1e-5) == 0.0


def test_forward_deterministic_across_calls():
    rng = np.random.default_rng(4)
    _, enc, hp = random_encoding(rng)
    params = init_parameters(hp)
    a = forward(enc, params, hp)
    b = forward(enc, params, hp)
    assert np.array_equal(a.logits, b.logits)


def test_predict_word_labels_length():
    rng = np.random.default_rng(5)
    ex, enc, hp = random_encoding(rng, variant="SA")
    labels = predict_word_labels(enc, init_parameters(hp), hp)
    assert len(labels) == ex.n_words


def test_external_features_mode():
    rng = np.random.default_rng(6)
    ex, enc, hp = random_encoding(rng, feature_mode="external_features")
    feats = rng.normal(size=(len(enc), hp.embed_dim))
    trace = forward(enc, init_parameters(hp), hp, feats)
    assert trace.probs.shape == (len(enc), 3)
    with pytest.raises(ToweError, match="no features"):
        forward(enc, init_parameters(hp), hp, None)
    with pytest.raises(ToweError, match="shape"):
        forward(enc, init_parameters(hp), hp, feats[:, :-1])


def test_external_features_gradcheck():
    rng = np.random.default_rng(8)
    _, enc, hp = random_encoding(rng, feature_mode="external_features")
    feats = rng.normal(size=(len(enc), hp.embed_dim))
    params = init_parameters(hp)
    assert finite_difference_check(enc, params, hp, 1e-5, features=feats) < 1e-4


def test_checkpoint_round_trip(tmp_path):
    params = init_parameters(small_hp(seed=9))
    path = tmp_path / "m.towe"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    for (_, a), (_, b) in zip(params.arrays(), loaded.arrays()):
        assert np.array_equal(a, b)
    hp = hyperparameters_from_checkpoint(loaded)
    assert hp.vocab_size == len(VOCAB)
    assert hp.embed_dim == 5 and hp.hidden_dim == 5 and hp.window == 3


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "m.towe"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    params = init_parameters(small_hp())
    path = tmp_path / "m.towe"
    save_checkpoint(params, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def _feature_file_bytes(entries, version=1):
    blob = b"TFEA" + struct.pack("<II", version, len(entries))
    for example_id, mat in entries:
        raw = example_id.encode("utf-8")
        blob += struct.pack("<H", len(raw)) + raw
        blob += struct.pack("<II", mat.shape[0], mat.shape[1])
        blob += np.ascontiguousarray(mat, dtype="<f4").tobytes()
    return blob


def test_load_external_features_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    entries = [(f"ex{i}", rng.normal(size=(4 + i, 6)).astype(np.float32)) for i in range(3)]
    path = tmp_path / "f.tfea"
    path.write_bytes(_feature_file_bytes(entries))
    feats = load_external_features(path)
    assert set(feats) == {"ex0", "ex1", "ex2"}
    for example_id, mat in entries:
        np.testing.assert_allclose(feats[example_id], mat.astype(np.float64))


def test_load_external_features_bad_magic(tmp_path):
    path = tmp_path / "f.tfea"
    path.write_bytes(b"XXXX" + struct.pack("<II", 1, 0))
    with pytest.raises(CheckpointError, match="magic"):
        load_external_features(path)


def test_load_external_features_mixed_dims(tmp_path):
    rng = np.random.default_rng(11)
    entries = [("a", rng.normal(size=(3, 4)).astype(np.float32)),
               ("b", rng.normal(size=(3, 5)).astype(np.float32))]
    path = tmp_path / "f.tfea"
    path.write_bytes(_feature_file_bytes(entries))
    with pytest.raises(CheckpointError, match="dimension"):
        load_external_features(path)


def test_features_for_missing_id():
    rng = np.random.default_rng(12)
    ex, enc, hp = random_encoding(rng, feature_mode="external_features")
    with pytest.raises(ToweError, match="no external features"):
        features_for({}, ex.id, enc, hp)
    bad = {ex.id: rng.normal(size=(len(enc) + 1, hp.embed_dim))}
    with pytest.raises(ToweError, match="rows"):
        features_for(bad, ex.id, enc, hp)
