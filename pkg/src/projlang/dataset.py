"""Line-delimited JSON synthetic datasets: a ``{"version": 1}`` header, then one record per sentence."""

from __future__ import annotations

import json
from typing import Iterable, Optional

from .grammar import Derivation, Grammar, SyntheticSentence

VERSION = 1


class DatasetError(ValueError):
    pass


def write_dataset(path, sentences: Iterable[SyntheticSentence]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"version": VERSION}) + "\n")
        for s in sentences:
            rec = {"text": s.text, "program": s.program,
                   "derivation": s.derivation.to_indices() if s.derivation else None}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_dataset(path, grammar: Optional[Grammar] = None) -> list[SyntheticSentence]:
    """Load records; derivations are rebuilt only when ``grammar`` is given."""
    out = []
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except ValueError:
            raise DatasetError(f"{path}: missing version header") from None
        if not isinstance(header, dict) or header.get("version") != VERSION:
            raise DatasetError(f"{path}: unsupported dataset version {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tokens, program = tuple(rec["text"].split()), rec["program"]
            except (ValueError, KeyError, TypeError, AttributeError):
                raise DatasetError(f"{path}:{lineno}: malformed record") from None
            deriv = None
            if grammar is not None and rec.get("derivation") is not None:
                deriv = Derivation.from_indices(grammar, rec["derivation"])
            out.append(SyntheticSentence(tokens, program, deriv))
    return out
