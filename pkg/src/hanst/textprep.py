"""Text preparation: segmentation, structure tags, tokenization, cutoffs,
vocabulary, and pretrained-embedding loading."""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .autodiff import xavier_init
from .corpus import RawDocument
from .errors import ConfigurationError, EmbeddingFormatError

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
PAD_ID = 0
UNK_ID = 1

TAGSETS = ("full", "reduced", "none")

# surface form of a structure tag; atomic under tokenization
TAG_RE = re.compile(r"</?[A-Z][A-Z_]*>")

_ROLE_MERGE = {"full": {}, "reduced": {"TITLE": "TITLE_ABSTRACT", "ABSTRACT": "TITLE_ABSTRACT"}}


def open_tag(role: str) -> str:
    return f"<{role}>"


def close_tag(role: str) -> str:
    return f"</{role}>"


def tag_tokens(tagset: str) -> list[str]:
    if tagset == "none":
        return []
    roles = ("TITLE_ABSTRACT", "BODY_TEXT") if tagset == "reduced" else ("TITLE", "ABSTRACT", "BODY_TEXT")
    return [t for role in roles for t in (open_tag(role), close_tag(role))]


# ---------------------------------------------------------------------------
# sentence segmentation
# ---------------------------------------------------------------------------

# trailing words (with their period) that never end a sentence
_ABBREVIATIONS = {
    "al.", "fig.", "figs.", "eq.", "eqs.", "sec.", "tab.", "no.", "vol.",
    "i.e.", "e.g.", "etc.", "cf.", "vs.", "resp.", "approx.",
    "dr.", "prof.", "mr.", "mrs.", "ms.", "st.",
}

_BOUNDARY_RE = re.compile(r"[.!?]+")


def _is_abbreviation(text: str, end: int) -> bool:
    """True when the word ending at `end` (inclusive of punctuation) must not
    close a sentence."""
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start:end]
    if word.lower() in _ABBREVIATIONS:
        return True
    # single-capital initials such as "J." in author names
    if len(word) == 2 and word[0].isupper() and word[0].isalpha() and word[1] == ".":
        return True
    return False


def segment_sentences(text: str) -> list[str]:
    """Split on sentence-final punctuation followed by whitespace and a
    capital letter or digit, honoring an abbreviation stop-list.

    The outputs are slices of the input, so their concatenation (modulo the
    whitespace separators between them) reconstructs the input.
    """
    boundaries = []
    for m in _BOUNDARY_RE.finditer(text):
        end = m.end()
        rest = text[end:]
        if not rest or not rest[0].isspace():
            continue
        stripped = rest.lstrip()
        if not stripped:
            continue
        first = stripped[0]
        if not (first.isupper() or first.isdigit()):
            continue
        if "." in m.group() and _is_abbreviation(text, end):
            continue
        boundaries.append(end)
    pieces = []
    start = 0
    for end in boundaries + [len(text)]:
        piece = text[start:end].strip()
        if piece:
            pieces.append(piece)
        start = end
    return pieces


# ---------------------------------------------------------------------------
# tags
# ---------------------------------------------------------------------------

def inject_tags(doc: RawDocument, tagset: str) -> list[tuple[str, str]]:
    """Segment a document into (role, sentence) pairs, wrapping sentences in
    their role's tags unless tagset is "none".

    The title is one sentence regardless of punctuation. The reduced tagset
    merges TITLE and ABSTRACT into one role.
    """
    if tagset not in TAGSETS:
        raise ConfigurationError(f"tagset must be one of {TAGSETS}, got {tagset!r}")
    parts: list[tuple[str, str]] = []
    title = doc.title.strip()
    if title:
        parts.append(("TITLE", title))
    for role, text in (("ABSTRACT", doc.abstract), ("BODY_TEXT", doc.body_text)):
        for sent in segment_sentences(text):
            parts.append((role, sent))
    merge = _ROLE_MERGE.get(tagset, {})
    out = []
    for role, sent in parts:
        role = merge.get(role, role)
        if tagset == "none":
            out.append((role, sent))
        else:
            out.append((role, f"{open_tag(role)} {sent} {close_tag(role)}"))
    return out


def strip_tags(sentence: str) -> str:
    return TAG_RE.sub("", sentence).strip()


# ---------------------------------------------------------------------------
# cutoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharacterLimit:
    limit: int = 20000

    def __post_init__(self):
        if self.limit < 1:
            raise ConfigurationError(f"character limit must be >= 1, got {self.limit}")


@dataclass(frozen=True)
class SentenceLimit:
    limit: int = 360

    def __post_init__(self):
        if self.limit < 1:
            raise ConfigurationError(f"sentence limit must be >= 1, got {self.limit}")


def apply_cutoff(sentences: list[str], policy) -> list[str]:
    """Keep a prefix of sentences.

    CharacterLimit counts raw characters plus one separator between
    consecutive sentences and always keeps at least the first sentence.
    SentenceLimit keeps the first `limit` sentences.
    """
    if not sentences:
        return []
    if isinstance(policy, SentenceLimit):
        return sentences[: policy.limit]
    if isinstance(policy, CharacterLimit):
        kept = [sentences[0]]
        total = len(sentences[0])
        for sent in sentences[1:]:
            total += 1 + len(sent)
            if total > policy.limit:
                break
            kept.append(sent)
        return kept
    raise ConfigurationError(f"unknown cutoff policy {policy!r}")


# ---------------------------------------------------------------------------
# tokenization
# ---------------------------------------------------------------------------

def _split_word(chunk: str) -> list[str]:
    """Peel punctuation off both edges of a whitespace-delimited chunk."""
    lead = []
    while chunk and not chunk[0].isalnum():
        lead.append(chunk[0])
        chunk = chunk[1:]
    trail = []
    while chunk and not chunk[-1].isalnum():
        trail.append(chunk[-1])
        chunk = chunk[:-1]
    tokens = lead
    if chunk:
        tokens.append(chunk)
    tokens.extend(reversed(trail))
    return tokens


def tokenize(sentence: str) -> list[str]:
    """Lowercase and split on whitespace with edge punctuation split off.

    Structure-tag surface forms are recognized first and emitted as single
    case-preserved tokens.
    """
    tokens: list[str] = []
    pos = 0
    for m in TAG_RE.finditer(sentence):
        for chunk in sentence[pos:m.start()].lower().split():
            tokens.extend(_split_word(chunk))
        tokens.append(m.group())
        pos = m.end()
    for chunk in sentence[pos:].lower().split():
        tokens.extend(_split_word(chunk))
    return tokens


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

class Vocabulary:
    """Token-to-id map with PAD=0, UNK=1 reserved and a capped content set."""

    def __init__(self, content_tokens: list[str]):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(content_tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigurationError("vocabulary tokens must be distinct")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]

    def to_json_array(self) -> list[str]:
        return list(self.id_to_token)

    @classmethod
    def from_json_array(cls, arr: list[str]) -> "Vocabulary":
        if arr[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ConfigurationError("vocabulary array must start with the PAD and UNK tokens")
        return cls(arr[2:])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_array(), fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_array(json.load(fh))

    def sha256(self) -> str:
        payload = json.dumps(self.to_json_array(), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_vocabulary(token_lists, max_size: int = 10000,
                     forced_tokens: list[str] | None = None) -> Vocabulary:
    """Top-frequency vocabulary with lexicographic tie-breaking.

    ``forced_tokens`` (the structure tags) are always retained and count
    against ``max_size``. Ids follow (frequency desc, token asc) order over
    the retained set.
    """
    forced = list(dict.fromkeys(forced_tokens or []))
    if len(forced) > max_size:
        raise ConfigurationError(f"{len(forced)} forced tokens exceed vocabulary cap {max_size}")
    counts = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    retained = set(forced)
    for token in ordered:
        if len(retained) >= max_size:
            break
        retained.add(token)
    content = sorted(retained, key=lambda t: (-counts[t], t))
    return Vocabulary(content)


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def load_embeddings(path, vocab: Vocabulary, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Build the [|vocab|, dim] embedding matrix from a text embedding file.

    Rows for tokens absent from the file are Xavier-uniform; the PAD row is
    zeroed afterwards.
    """
    matrix = xavier_init((len(vocab), dim), "uniform", rng)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, vals = parts[0], parts[1:]
            if len(vals) != dim:
                raise EmbeddingFormatError(
                    f"expected {dim} values for token {token!r}, found {len(vals)}",
                    line_number=lineno)
            if token in vocab:
                try:
                    matrix[vocab.encode(token)] = [float(v) for v in vals]
                except ValueError:
                    raise EmbeddingFormatError(f"non-numeric value for token {token!r}",
                                               line_number=lineno) from None
    matrix[PAD_ID] = 0.0
    return matrix


# ---------------------------------------------------------------------------
# document encoding
# ---------------------------------------------------------------------------

@dataclass
class TaggedDocument:
    """A document as id sequences: one token-id list per sentence."""

    id: str
    sentences: list[list[int]]
    roles: list[str]
    label: dict

    def __post_init__(self):
        if len(self.sentences) != len(self.roles):
            raise ConfigurationError(f"document {self.id!r}: {len(self.sentences)} sentences vs {len(self.roles)} roles")
        if any(len(s) == 0 for s in self.sentences):
            raise ConfigurationError(f"document {self.id!r}: empty sentence after encoding")


def encode_document(doc: RawDocument, vocab: Vocabulary, tagset: str, cutoff) -> TaggedDocument:
    """Segment, truncate, tag, tokenize, and map to ids.

    The cutoff is measured on raw untagged sentences so every tagset sees the
    same underlying content. Documents with no text at all yield a single
    UNK sentence so downstream batching never sees an empty document.
    """
    parts = inject_tags(doc, "none")
    raw_sentences = [sent for _, sent in parts]
    kept = apply_cutoff(raw_sentences, cutoff)
    parts = parts[: len(kept)]
    merge = _ROLE_MERGE.get(tagset, {})
    sentences: list[list[int]] = []
    roles: list[str] = []
    for role, sent in parts:
        role = merge.get(role, role)
        if tagset != "none":
            sent = f"{open_tag(role)} {sent} {close_tag(role)}"
        ids = [vocab.encode(t) for t in tokenize(sent)]
        if not ids:
            continue
        sentences.append(ids)
        roles.append(role)
    if not sentences:
        sentences = [[UNK_ID]]
        roles = ["BODY_TEXT"]
    return TaggedDocument(id=doc.id, sentences=sentences, roles=roles, label=dict(doc.label))
