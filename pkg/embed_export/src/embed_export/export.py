"""Feature-file writer: consumes a prepared dump, emits "TFEA" + manifest.

The binary layout is the trainer's wire format: magic "TFEA", version u32,
example count u32, then per example a u16-length utf-8 id, u32 rows, u32
cols, and row-major little-endian float32 data.  Output files are written
atomically (temp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .prepared import ExportError, PreparedDump, read_prepared

TFEA_MAGIC = b"TFEA"
TFEA_VERSION = 1


@dataclass(frozen=True)
class ExportManifest:
    encoder: str
    hidden_dim: int
    vocab_sha256: str
    examples: int

    def as_dict(self) -> dict:
        return {
            "encoder": self.encoder,
            "hidden_dim": self.hidden_dim,
            "vocab_sha256": self.vocab_sha256,
            "examples": self.examples,
        }


def write_feature_file(entries: list[tuple[str, np.ndarray]], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(TFEA_MAGIC)
        handle.write(struct.pack("<II", TFEA_VERSION, len(entries)))
        for example_id, mat in entries:
            raw = example_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ExportError(f"example id too long: {example_id[:40]!r}...")
            handle.write(struct.pack("<H", len(raw)))
            handle.write(raw)
            handle.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            handle.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())
    os.replace(tmp, path)


def export_features(
    prepared_path: str | Path,
    encoder,
    out_path: str | Path,
    *,
    expect_vocab_sha256: str | None = None,
    manifest_path: str | Path | None = None,
) -> ExportManifest:
    """Encode every prepared example and write the feature file + manifest.

    When ``expect_vocab_sha256`` is given it must equal the checksum recorded
    in the dump header; a mismatch means the inputs were prepared with a
    different vocabulary than the encoder expects, and the export aborts.
    """
    dump: PreparedDump = read_prepared(prepared_path)
    if expect_vocab_sha256 is not None and dump.vocab_sha256 != expect_vocab_sha256:
        raise ExportError(
            "vocabulary checksum mismatch: prepared inputs carry "
            f"{dump.vocab_sha256[:12]}..., encoder expects {expect_vocab_sha256[:12]}..."
        )

    entries = []
    for example in dump.examples:
        rows = encoder.encode(example)
        if rows.shape != (len(example), encoder.dim):
            raise ExportError(
                f"encoder returned shape {rows.shape} for example {example.id!r}, "
                f"expected ({len(example)}, {encoder.dim})"
            )
        entries.append((example.id, rows))

    out_path = Path(out_path)
    write_feature_file(entries, out_path)
    manifest = ExportManifest(
        encoder=encoder.name,
        hidden_dim=encoder.dim,
        vocab_sha256=dump.vocab_sha256,
        examples=len(entries),
    )
    if manifest_path is None:
        manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    manifest_path = Path(manifest_path)
    tmp = manifest_path.with_name(manifest_path.name + ".tmp")
    tmp.write_text(json.dumps(manifest.as_dict(), indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, manifest_path)
    return manifest
