"""Trainable sequence labeler: embeddings -> BiLSTM -> per-position softmax.

Everything is plain numpy in double precision, with analytic gradients
written out by hand and a finite-difference harness to keep them honest.
Token features come either from a learned embedding table or from an
external per-example feature file (pretrained contextual vectors).

LSTM gate weights are stacked along the first axis in the fixed order
(input, forget, cell candidate, output), h rows each, so serialized
parameters are portable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from .corpus import ID_TO_LABEL, NUM_LABELS, WordLabel
from .encoding import EncodedInput
from .errors import CheckpointError, ToweError

FEATURE_MODES = ("learned_embeddings", "external_features")

CHECKPOINT_MAGIC = b"TOWE"
CHECKPOINT_VERSION = 1
FEATURES_MAGIC = b"TFEA"
FEATURES_VERSION = 1


@dataclass(frozen=True)
class Hyperparameters:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 64
    window: int = 50
    use_position: bool = False
    use_segment: bool = False
    feature_mode: str = "learned_embeddings"
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("vocab_size", "embed_dim", "hidden_dim"):
            if getattr(self, name) <= 0:
                raise ToweError(f"{name} must be positive")
        if self.window < 0:
            raise ToweError("window must be >= 0")
        if self.feature_mode not in FEATURE_MODES:
            raise ToweError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}"
            )


@dataclass
class Parameters:
    """All trainable arrays.  Doubles as the container for their gradients."""

    token_emb: np.ndarray      # (vocab, d)
    position_emb: np.ndarray   # (2*window+1, d)
    segment_emb: np.ndarray    # (2, d)
    fwd_wx: np.ndarray         # (4h, d)
    fwd_wh: np.ndarray         # (4h, h)
    fwd_b: np.ndarray          # (4h,)
    bwd_wx: np.ndarray
    bwd_wh: np.ndarray
    bwd_b: np.ndarray
    out_w: np.ndarray          # (NUM_LABELS, 2h)
    out_b: np.ndarray          # (NUM_LABELS,)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def copy(self) -> "Parameters":
        return Parameters(**{name: arr.copy() for name, arr in self.arrays()})

    @classmethod
    def zeros_like(cls, other: "Parameters") -> "Parameters":
        return cls(**{name: np.zeros_like(arr) for name, arr in other.arrays()})

    def all_finite(self) -> bool:
        return all(np.isfinite(arr).all() for _, arr in self.arrays())


def _xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    scale = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-scale, scale, size=(rows, cols))


def init_parameters(hp: Hyperparameters) -> Parameters:
    """Deterministic init: uniform Xavier weights, zero biases, forget bias 1."""
    rng = np.random.default_rng(hp.seed)
    d, h = hp.embed_dim, hp.hidden_dim
    token_emb = _xavier(rng, hp.vocab_size, d)
    position_emb = _xavier(rng, 2 * hp.window + 1, d)
    segment_emb = _xavier(rng, 2, d)
    fwd_wx = _xavier(rng, 4 * h, d)
    fwd_wh = _xavier(rng, 4 * h, h)
    bwd_wx = _xavier(rng, 4 * h, d)
    bwd_wh = _xavier(rng, 4 * h, h)
    out_w = _xavier(rng, NUM_LABELS, 2 * h)
    fwd_b = np.zeros(4 * h)
    fwd_b[h : 2 * h] = 1.0
    bwd_b = fwd_b.copy()
    return Parameters(
        token_emb=token_emb,
        position_emb=position_emb,
        segment_emb=segment_emb,
        fwd_wx=fwd_wx,
        fwd_wh=fwd_wh,
        fwd_b=fwd_b,
        bwd_wx=bwd_wx,
        bwd_wh=bwd_wh,
        bwd_b=bwd_b,
        out_w=out_w,
        out_b=np.zeros(NUM_LABELS),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DirectionTrace:
    """Gate and state activations of one LSTM direction, indexed by position."""

    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


@dataclass
class ForwardTrace:
    x: np.ndarray             # (n, d) summed input vectors
    fwd: DirectionTrace
    bwd: DirectionTrace
    logits: np.ndarray        # (n, NUM_LABELS)
    log_probs: np.ndarray
    probs: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


def _lstm_pass(
    x: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
    order: range,
) -> DirectionTrace:
    n = x.shape[0]
    h_dim = wh.shape[1]
    zx = x @ wx.T
    tr = DirectionTrace(*(np.zeros((n, h_dim), dtype=x.dtype) for _ in range(7)))
    h_prev = np.zeros(h_dim, dtype=x.dtype)
    c_prev = np.zeros(h_dim, dtype=x.dtype)
    for t in order:
        z = zx[t] + wh @ h_prev + b
        i = _sigmoid(z[:h_dim])
        f = _sigmoid(z[h_dim : 2 * h_dim])
        g = np.tanh(z[2 * h_dim : 3 * h_dim])
        o = _sigmoid(z[3 * h_dim :])
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        tr.i[t], tr.f[t], tr.g[t], tr.o[t] = i, f, g, o
        tr.c[t], tr.tanh_c[t], tr.h[t] = c, tanh_c, h
        h_prev, c_prev = h, c
    return tr


def build_inputs(
    enc: EncodedInput,
    params: Parameters,
    hp: Hyperparameters,
    features: np.ndarray | None = None,
) -> np.ndarray:
    """Per-position input vectors: token (or external) + optional extras."""
    n = len(enc)
    dtype = params.token_emb.dtype
    if hp.feature_mode == "external_features":
        if features is None:
            raise ToweError("feature_mode is external_features but no features were given")
        features = np.asarray(features, dtype=dtype)
        if features.shape != (n, hp.embed_dim):
            raise ToweError(
                f"feature matrix shape {features.shape} does not match "
                f"({n}, {hp.embed_dim})"
            )
        x = features.copy()
    else:
        ids = np.asarray(enc.token_ids)
        if ids.min() < 0 or ids.max() >= hp.vocab_size:
            raise ToweError("token id out of range for the embedding table")
        x = params.token_emb[ids].copy()
    if hp.use_position:
        pos = np.asarray(enc.position_ids) + hp.window
        if pos.min() < 0 or pos.max() > 2 * hp.window:
            raise ToweError("position id out of range for the position table")
        x += params.position_emb[pos]
    if hp.use_segment:
        x += params.segment_emb[np.asarray(enc.segment_ids)]
    return x


def forward(
    enc: EncodedInput,
    params: Parameters,
    hp: Hyperparameters,
    features: np.ndarray | None = None,
) -> ForwardTrace:
    """Full forward pass; the returned trace carries everything backward() needs."""
    x = build_inputs(enc, params, hp, features)
    n = x.shape[0]
    fwd = _lstm_pass(x, params.fwd_wx, params.fwd_wh, params.fwd_b, range(n))
    bwd = _lstm_pass(x, params.bwd_wx, params.bwd_wh, params.bwd_b, range(n - 1, -1, -1))
    h_cat = np.concatenate([fwd.h, bwd.h], axis=1)
    logits = h_cat @ params.out_w.T + params.out_b
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return ForwardTrace(
        x=x, fwd=fwd, bwd=bwd,
        logits=logits, log_probs=log_probs, probs=np.exp(log_probs),
    )


def _raw_loss(trace: ForwardTrace, enc: EncodedInput):
    """Loss in the trace's own dtype; the gradient checker needs the extra bits."""
    positions = [t for t, m in enumerate(enc.loss_mask) if m]
    if not positions:
        return trace.log_probs.dtype.type(0.0)
    labels = [enc.label_ids[t] for t in positions]
    return -trace.log_probs[positions, labels].mean()


def sequence_loss(trace: ForwardTrace, enc: EncodedInput) -> float:
    """Mean negative log-likelihood over loss-masked positions; 0 when none."""
    return float(_raw_loss(trace, enc))


def _lstm_backward(
    x: np.ndarray,
    dh_out: np.ndarray,
    tr: DirectionTrace,
    wx: np.ndarray,
    wh: np.ndarray,
    order: range,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backprop one direction.  Returns (dwx, dwh, db, dx)."""
    n, h_dim = dh_out.shape
    dz_all = np.zeros((n, 4 * h_dim))
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * h_dim)
    dh_next = np.zeros(h_dim)
    dc_next = np.zeros(h_dim)
    steps = list(order)
    for k in range(len(steps) - 1, -1, -1):
        t = steps[k]
        prev = steps[k - 1] if k > 0 else None
        c_prev = tr.c[prev] if prev is not None else np.zeros(h_dim)
        h_prev = tr.h[prev] if prev is not None else np.zeros(h_dim)
        dh = dh_out[t] + dh_next
        do = dh * tr.tanh_c[t]
        dc = dc_next + dh * tr.o[t] * (1.0 - tr.tanh_c[t] ** 2)
        di = dc * tr.g[t]
        df = dc * c_prev
        dg = dc * tr.i[t]
        dc_next = dc * tr.f[t]
        dz = np.concatenate([
            di * tr.i[t] * (1.0 - tr.i[t]),
            df * tr.f[t] * (1.0 - tr.f[t]),
            dg * (1.0 - tr.g[t] ** 2),
            do * tr.o[t] * (1.0 - tr.o[t]),
        ])
        dz_all[t] = dz
        dwh += np.outer(dz, h_prev)
        db += dz
        dh_next = wh.T @ dz
    dwx = dz_all.T @ x
    dx = dz_all @ wx
    return dwx, dwh, db, dx


def backward(
    trace: ForwardTrace,
    enc: EncodedInput,
    params: Parameters,
    hp: Hyperparameters,
) -> Parameters:
    """Exact gradients of the masked mean cross-entropy w.r.t. every parameter."""
    grads = Parameters.zeros_like(params)
    n = len(trace)
    positions = [t for t, m in enumerate(enc.loss_mask) if m]
    if not positions:
        return grads

    dlogits = np.zeros_like(trace.probs)
    dlogits[positions] = trace.probs[positions]
    for t in positions:
        dlogits[t, enc.label_ids[t]] -= 1.0
    dlogits /= len(positions)

    h_dim = hp.hidden_dim
    h_cat = np.concatenate([trace.fwd.h, trace.bwd.h], axis=1)
    grads.out_w[:] = dlogits.T @ h_cat
    grads.out_b[:] = dlogits.sum(axis=0)
    dh_cat = dlogits @ params.out_w
    dwx, dwh, db, dx_f = _lstm_backward(
        trace.x, dh_cat[:, :h_dim], trace.fwd, params.fwd_wx, params.fwd_wh, range(n)
    )
    grads.fwd_wx[:], grads.fwd_wh[:], grads.fwd_b[:] = dwx, dwh, db
    dwx, dwh, db, dx_b = _lstm_backward(
        trace.x, dh_cat[:, h_dim:], trace.bwd, params.bwd_wx, params.bwd_wh,
        range(n - 1, -1, -1),
    )
    grads.bwd_wx[:], grads.bwd_wh[:], grads.bwd_b[:] = dwx, dwh, db
    dx = dx_f + dx_b

    if hp.feature_mode == "learned_embeddings":
        np.add.at(grads.token_emb, np.asarray(enc.token_ids), dx)
    if hp.use_position:
        np.add.at(grads.position_emb, np.asarray(enc.position_ids) + hp.window, dx)
    if hp.use_segment:
        np.add.at(grads.segment_emb, np.asarray(enc.segment_ids), dx)
    return grads


def finite_difference_check(
    enc: EncodedInput,
    params: Parameters,
    hp: Hyperparameters,
    epsilon: float = 1e-5,
    features: np.ndarray | None = None,
) -> float:
    """Worst relative disagreement between analytic and numeric gradients.

    Perturbs every scalar parameter by +/-epsilon, recomputing the loss each
    time.  The relative error of one scalar is
    |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).

    The analytic side is the production double-precision path.  The numeric
    side evaluates the perturbed losses in extended precision: the central
    difference cancels ~15 leading digits for near-zero gradients, and plain
    doubles would leave the checker's own roundoff above the comparison
    floor.
    """
    if epsilon <= 0:
        raise ToweError("epsilon must be positive")
    analytic = backward(forward(enc, params, hp, features), enc, params, hp)

    probe = Parameters(**{name: arr.astype(np.longdouble) for name, arr in params.arrays()})
    feats = None if features is None else np.asarray(features, dtype=np.longdouble)
    eps = np.longdouble(epsilon)

    def loss_now():
        return _raw_loss(forward(enc, probe, hp, feats), enc)

    worst = 0.0
    for name, arr in probe.arrays():
        g_flat = getattr(analytic, name).reshape(-1)
        flat = arr.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = loss_now()
            flat[j] = orig - eps
            lo = loss_now()
            flat[j] = orig
            g_num = float((hi - lo) / (2.0 * eps))
            g_ana = g_flat[j]
            err = abs(g_ana - g_num) / max(abs(g_ana), abs(g_num), 1e-8)
            worst = max(worst, err)
    return worst


def predict_word_labels(
    enc: EncodedInput,
    params: Parameters,
    hp: Hyperparameters,
    features: np.ndarray | None = None,
) -> list[WordLabel]:
    """Argmax labels at the loss-masked (first-piece) positions, in word order."""
    trace = forward(enc, params, hp, features)
    positions = [t for t, m in enumerate(enc.loss_mask) if m]
    picks = trace.probs[positions].argmax(axis=1)
    return [ID_TO_LABEL[int(k)] for k in picks]


# --- serialization ---------------------------------------------------------

_BIAS_FIELDS = {"fwd_b", "bwd_b", "out_b"}


def _write_matrix(handle: BinaryIO, arr: np.ndarray) -> None:
    mat = arr.reshape(arr.shape[0], -1) if arr.ndim == 2 else arr.reshape(-1, 1)
    handle.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
    handle.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def _read_matrix(handle: BinaryIO, path: Path) -> np.ndarray:
    header = handle.read(8)
    if len(header) != 8:
        raise CheckpointError(f"{path}: truncated matrix header")
    rows, cols = struct.unpack("<II", header)
    payload = handle.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise CheckpointError(f"{path}: truncated matrix payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_checkpoint(params: Parameters, path: str | Path) -> None:
    """Binary checkpoint: magic, version, then every matrix in field order."""
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<I", CHECKPOINT_VERSION))
        for _, arr in params.arrays():
            _write_matrix(handle, arr)


def load_checkpoint(path: str | Path) -> Parameters:
    path = Path(path)
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a parameter checkpoint (magic {magic!r})")
        (version,) = struct.unpack("<I", handle.read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        values = {}
        for field in fields(Parameters):
            mat = _read_matrix(handle, path)
            values[field.name] = mat.reshape(-1) if field.name in _BIAS_FIELDS else mat
        if handle.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last matrix")
    return Parameters(**values)


def hyperparameters_from_checkpoint(params: Parameters, **overrides) -> Hyperparameters:
    """Recover the shape-determined hyperparameters of a loaded checkpoint."""
    vocab_size, embed_dim = params.token_emb.shape
    hidden_dim = params.fwd_wh.shape[1]
    window = (params.position_emb.shape[0] - 1) // 2
    base = dict(
        vocab_size=vocab_size,
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        window=window,
    )
    base.update(overrides)
    return Hyperparameters(**base)


def load_external_features(path: str | Path) -> dict[str, np.ndarray]:
    """Read a per-example feature file (magic "TFEA").

    Returns example id -> (positions, dim) float64 matrix.  All matrices must
    share one dimension; row counts are validated against each example's
    encoding at the point of use.
    """
    path = Path(path)
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != FEATURES_MAGIC:
            raise CheckpointError(f"{path}: not a feature file (magic {magic!r})")
        header = handle.read(8)
        if len(header) != 8:
            raise CheckpointError(f"{path}: truncated header")
        version, count = struct.unpack("<II", header)
        if version != FEATURES_VERSION:
            raise CheckpointError(f"{path}: unsupported feature file version {version}")
        features: dict[str, np.ndarray] = {}
        dim: int | None = None
        for _ in range(count):
            raw = handle.read(2)
            if len(raw) != 2:
                raise CheckpointError(f"{path}: truncated example id")
            (id_len,) = struct.unpack("<H", raw)
            example_id = handle.read(id_len).decode("utf-8")
            shape_raw = handle.read(8)
            if len(shape_raw) != 8:
                raise CheckpointError(f"{path}: truncated matrix header for {example_id!r}")
            rows, cols = struct.unpack("<II", shape_raw)
            payload = handle.read(rows * cols * 4)
            if len(payload) != rows * cols * 4:
                raise CheckpointError(f"{path}: truncated matrix for {example_id!r}")
            if dim is None:
                dim = cols
            elif cols != dim:
                raise CheckpointError(
                    f"{path}: example {example_id!r} has dimension {cols}, expected {dim}"
                )
            if example_id in features:
                raise CheckpointError(f"{path}: duplicate example id {example_id!r}")
            features[example_id] = (
                np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float64)
            )
        if handle.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last example")
    return features


def features_for(
    features: Mapping[str, np.ndarray] | None,
    example_id: str,
    enc: EncodedInput,
    hp: Hyperparameters,
) -> np.ndarray | None:
    """Look up and validate one example's external features, if in that mode."""
    if hp.feature_mode != "external_features":
        return None
    if features is None or example_id not in features:
        raise ToweError(f"no external features for example {example_id!r}")
    mat = features[example_id]
    if mat.shape[0] != len(enc):
        raise ToweError(
            f"example {example_id!r}: feature rows {mat.shape[0]} != encoded length {len(enc)}"
        )
    if mat.shape[1] != hp.embed_dim:
        raise ToweError(
            f"example {example_id!r}: feature dim {mat.shape[1]} != embed_dim {hp.embed_dim}"
        )
    return mat
