"""Document records and JSONL corpus I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusFormatError

SPLITS = ("train", "valid", "test")
LABEL_KEYS = ("accepted", "citation_count")


@dataclass
class RawDocument:
    """One paper: title/abstract/body text plus a task label.

    ``label`` holds ``accepted`` (bool) for classification and/or
    ``citation_count`` (non-negative int) for regression. Dataset-statistics
    corpora carry both; task corpora carry the one their task needs.
    """

    id: str
    title: str
    abstract: str
    body_text: str
    label: dict = field(default_factory=dict)
    split: str = "train"

    def __post_init__(self):
        if not any(k in self.label for k in LABEL_KEYS):
            raise CorpusFormatError(f"document {self.id!r}: label must contain 'accepted' or 'citation_count'")
        unknown = set(self.label) - set(LABEL_KEYS)
        if unknown:
            raise CorpusFormatError(f"document {self.id!r}: unknown label keys {sorted(unknown)}")
        if "accepted" in self.label and not isinstance(self.label["accepted"], bool):
            raise CorpusFormatError(f"document {self.id!r}: 'accepted' must be a boolean")
        if "citation_count" in self.label:
            n = self.label["citation_count"]
            if not isinstance(n, int) or isinstance(n, bool) or n < 0:
                raise CorpusFormatError(f"document {self.id!r}: 'citation_count' must be a non-negative integer")
        if self.split not in SPLITS:
            raise CorpusFormatError(f"document {self.id!r}: split must be one of {SPLITS}, got {self.split!r}")

    @property
    def accepted(self) -> bool:
        return self.label["accepted"]

    @property
    def citation_count(self) -> int:
        return self.label["citation_count"]

    def to_json(self) -> dict:
        return {"id": self.id, "title": self.title, "abstract": self.abstract,
                "body_text": self.body_text, "label": dict(self.label), "split": self.split}


def load_corpus(path) -> list[RawDocument]:
    """Read one RawDocument per JSONL line; errors carry the line number."""
    docs = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc}", line_number=lineno) from None
            if not isinstance(obj, dict):
                raise CorpusFormatError("line is not a JSON object", line_number=lineno)
            missing = {"id", "title", "abstract", "body_text", "label"} - set(obj)
            if missing:
                raise CorpusFormatError(f"missing fields {sorted(missing)}", line_number=lineno)
            for key in ("id", "title", "abstract", "body_text"):
                if not isinstance(obj[key], str):
                    raise CorpusFormatError(f"field {key!r} must be a string", line_number=lineno)
            if not isinstance(obj["label"], dict):
                raise CorpusFormatError("field 'label' must be an object", line_number=lineno)
            try:
                doc = RawDocument(id=obj["id"], title=obj["title"], abstract=obj["abstract"],
                                  body_text=obj["body_text"], label=obj["label"],
                                  split=obj.get("split", "train"))
            except CorpusFormatError as exc:
                raise CorpusFormatError(str(exc), line_number=lineno) from None
            if doc.id in seen:
                raise CorpusFormatError(f"duplicate document id {doc.id!r}", line_number=lineno)
            seen.add(doc.id)
            docs.append(doc)
    return docs


def save_corpus(docs: list[RawDocument], path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), sort_keys=True) + "\n")


def split_corpus(docs: list[RawDocument]) -> dict[str, list[RawDocument]]:
    out: dict[str, list[RawDocument]] = {name: [] for name in SPLITS}
    for doc in docs:
        out[doc.split].append(doc)
    return out
