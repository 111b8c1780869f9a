"""Contextual encoders producing one feature row per input position.

Three families:

* ``hashed``   - deterministic stand-in: each token id hashes to a fixed
  random vector, rows mix a decaying window of neighbors.  No model weights,
  bit-identical across runs, useful for plumbing and tests.
* ``sentinel`` - rows carry (token id, position) in the first two columns,
  zeros elsewhere; lets a consumer cross-check row alignment exactly.
* ``hf:<name-or-path>`` - a transformers encoder (e.g. a BERT checkpoint);
  the prepared token ids index its embedding table directly, hidden states
  of a chosen layer become the rows.  Requires the optional [hf] extra.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .prepared import ExportError, PreparedExample


class HashedEncoder:
    """Deterministic hash-derived features with light neighbor mixing."""

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ExportError("feature dimension must be >= 1")
        self.dim = dim
        self.seed = seed
        self.name = f"hashed-d{dim}-s{seed}"
        self._cache: dict[int, np.ndarray] = {}

    def _base(self, token_id: int) -> np.ndarray:
        vec = self._cache.get(token_id)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{token_id}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dim)
            self._cache[token_id] = vec
        return vec

    def encode(self, example: PreparedExample) -> np.ndarray:
        n = len(example)
        base = np.stack([self._base(t) for t in example.token_ids])
        rows = base.copy()
        rows[1:] += 0.5 * base[:-1]
        rows[:-1] += 0.25 * base[1:]
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        rows = rows / np.maximum(norms, 1e-12)
        return rows.astype(np.float32)


class SentinelEncoder:
    """Alignment probe: row i is (token_ids[i], i, 0, ...)."""

    def __init__(self, dim: int = 8):
        if dim < 2:
            raise ExportError("sentinel encoder needs at least 2 columns")
        self.dim = dim
        self.name = f"sentinel-d{dim}"

    def encode(self, example: PreparedExample) -> np.ndarray:
        rows = np.zeros((len(example), self.dim), dtype=np.float32)
        rows[:, 0] = example.token_ids
        rows[:, 1] = np.arange(len(example))
        return rows


class HfEncoder:
    """Hidden states of a transformers encoder, one layer's worth per row."""

    def __init__(self, model_name_or_path: str, layer: int = -1):
        try:
            import torch
            from transformers import AutoModel
        except ImportError as exc:
            raise ExportError(
                "the hf: encoder needs the [hf] extra (torch + transformers)"
            ) from exc
        self._torch = torch
        self.model = AutoModel.from_pretrained(model_name_or_path)
        self.model.eval()
        self.layer = layer
        self.dim = int(self.model.config.hidden_size)
        self.name = f"hf:{model_name_or_path}@layer{layer}"
        vocab_size = int(self.model.config.vocab_size)
        self._vocab_size = vocab_size

    def encode(self, example: PreparedExample) -> np.ndarray:
        torch = self._torch
        if max(example.token_ids) >= self._vocab_size:
            raise ExportError(
                f"example {example.id!r}: token id {max(example.token_ids)} exceeds "
                f"the encoder vocabulary ({self._vocab_size})"
            )
        with torch.no_grad():
            out = self.model(
                input_ids=torch.tensor([example.token_ids]),
                token_type_ids=torch.tensor([example.segment_ids]),
                attention_mask=torch.ones(1, len(example), dtype=torch.long),
                output_hidden_states=True,
            )
        hidden = out.hidden_states[self.layer][0]
        return hidden.numpy().astype(np.float32)


def resolve_encoder(encoder_id: str, *, dim: int = 64, seed: int = 0, layer: int = -1):
    """Build an encoder from its id: hashed, sentinel, or hf:<name-or-path>."""
    if encoder_id == "hashed":
        return HashedEncoder(dim=dim, seed=seed)
    if encoder_id == "sentinel":
        return SentinelEncoder(dim=dim)
    if encoder_id.startswith("hf:"):
        return HfEncoder(encoder_id[3:], layer=layer)
    raise ExportError(f"unknown encoder id {encoder_id!r}")
