"""Reader for prepared-input dumps.

The dump is JSON lines: a header object first (format name, version,
tokenizer, variant, vocabulary checksum), then one record per example with
the per-position fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

FORMAT_NAME = "towe-prepared"
SUPPORTED_VERSIONS = (1,)


class ExportError(Exception):
    """Anything wrong with inputs or the export itself."""


@dataclass(frozen=True)
class PreparedExample:
    id: str
    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    position_ids: tuple[int, ...]
    variant: str

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass(frozen=True)
class PreparedDump:
    vocab_sha256: str
    tokenizer: str
    variant: str
    examples: tuple[PreparedExample, ...]


def read_prepared(path: str | Path) -> PreparedDump:
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise ExportError(f"{path}: empty file, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ExportError(f"{path}: line 1: invalid JSON ({exc.msg})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise ExportError(f"{path}: not a {FORMAT_NAME} dump")
    if header.get("version") not in SUPPORTED_VERSIONS:
        raise ExportError(f"{path}: unsupported dump version {header.get('version')!r}")

    examples = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines[1:], 2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExportError(f"{path}: line {line_no}: invalid JSON ({exc.msg})") from None
        try:
            example = PreparedExample(
                id=record["id"],
                token_ids=tuple(record["token_ids"]),
                segment_ids=tuple(record["segment_ids"]),
                position_ids=tuple(record["position_ids"]),
                variant=record["variant"],
            )
        except KeyError as exc:
            raise ExportError(f"{path}: line {line_no}: missing key {exc.args[0]!r}") from None
        if len(example.segment_ids) != len(example) or len(example.position_ids) != len(example):
            raise ExportError(f"{path}: line {line_no}: per-position fields disagree in length")
        if example.id in seen:
            raise ExportError(f"{path}: line {line_no}: duplicate example id {example.id!r}")
        seen.add(example.id)
        examples.append(example)
    return PreparedDump(
        vocab_sha256=header.get("vocab_sha256", ""),
        tokenizer=header.get("tokenizer", ""),
        variant=header.get("variant", ""),
        examples=tuple(examples),
    )
