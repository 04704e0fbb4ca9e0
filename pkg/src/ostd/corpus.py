"""Token corpora: ingestion, EOS flattening, and the built-in test tokenizer.

A corpus is one subset's documents flattened into a single token stream
with the EOS separator appended after every document (the final one
included), so every document span ends in exactly one EOS and patterns
without EOS can never match across a boundary.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass

import numpy as np

from ostd.errors import CorruptIndexError, UnknownTokenError, ValidationError

TOKEN_DTYPE = np.uint32
TOKEN_WIDTH = 4
TOKENS_MAGIC = b"OSTDTOK1"
TOKENS_VERSION = 1

# A token is an optional single leading space followed by a word or a
# single punctuation character; runs of other whitespace fall through
# one character at a time. Concatenating surfaces reproduces the input.
_TOKEN_RE = re.compile(r" ?\w+| ?[^\w\s]|\s")

EOS_SURFACE = "<eos>"


class Vocabulary:
    """Surface-form to token-id table backing the built-in test tokenizer.

    Ids are assigned in first-seen order and persist via a JSON sidecar
    so they are stable between the index-build and query phases. Id 0 is
    reserved for the EOS separator. A frozen vocabulary rejects unseen
    surface forms instead of growing.
    """

    def __init__(self, forms: dict[str, int] | None = None, frozen: bool = False):
        self._forms: dict[str, int] = {EOS_SURFACE: 0}
        if forms:
            self._forms.update(forms)
        self._surfaces: dict[int, str] = {i: s for s, i in self._forms.items()}
        if len(self._surfaces) != len(self._forms):
            raise ValidationError("vocabulary table contains duplicate ids")
        self.frozen = frozen

    @property
    def eos_id(self) -> int:
        return 0

    @property
    def vocab_size(self) -> int:
        return max(self._surfaces) + 1

    def encode(self, text: str) -> list[int]:
        ids = []
        for match in _TOKEN_RE.finditer(text):
            surface = match.group(0)
            token_id = self._forms.get(surface)
            if token_id is None:
                if self.frozen:
                    raise UnknownTokenError(
                        f"surface form {surface!r} not in frozen vocabulary"
                    )
                token_id = len(self._forms)
                self._forms[surface] = token_id
                self._surfaces[token_id] = surface
            ids.append(token_id)
        return ids

    def decode_token(self, token_id: int) -> str:
        try:
            return self._surfaces[int(token_id)]
        except KeyError:
            raise ValidationError(f"token id {token_id} not in vocabulary") from None

    def decode(self, ids) -> str:
        return "".join(self.decode_token(i) for i in ids)

    def save(self, path) -> None:
        payload = {
            "version": 1,
            "eos_id": self.eos_id,
            "forms": {s: i for s, i in self._forms.items() if i != 0},
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, path, frozen: bool = False) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("version") != 1 or payload.get("eos_id") != 0:
            raise ValidationError(f"unsupported vocabulary file: {path}")
        return cls(forms=payload["forms"], frozen=frozen)


def tokenize(text: str, tokenizer) -> list[int]:
    """Encode ``text`` with any object exposing the tokenizer interface."""
    return tokenizer.encode(text)


@dataclass
class TokenCorpus:
    """One subset's flattened token stream with document boundaries."""

    tokens: np.ndarray
    doc_offsets: np.ndarray
    subset_name: str
    vocab_size: int
    eos_id: int

    def __post_init__(self):
        self.tokens = np.ascontiguousarray(self.tokens, dtype=TOKEN_DTYPE)
        self.doc_offsets = np.ascontiguousarray(self.doc_offsets, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.tokens.shape[0])

    def validate(self) -> None:
        m = len(self)
        if not (0 <= self.eos_id < self.vocab_size):
            raise ValidationError("eos_id must be < vocab_size")
        if m and self.tokens.max() >= self.vocab_size:
            raise ValidationError("token id >= vocab_size")
        offs = self.doc_offsets
        if offs.size:
            if (np.diff(offs) <= 0).any() or offs[0] != 0 or offs[-1] >= m:
                raise ValidationError("doc_offsets must be strictly increasing starts")
        eos_positions = np.flatnonzero(self.tokens == self.eos_id)
        expected_ends = np.concatenate([offs[1:] - 1, [m - 1]]) if offs.size else eos_positions
        if offs.size and not np.array_equal(eos_positions, expected_ends):
            raise ValidationError("EOS must appear exactly once at the end of each document")

    def documents(self) -> list[np.ndarray]:
        """Split the stream back into per-document token arrays (EOS stripped)."""
        docs = []
        m = len(self)
        offs = self.doc_offsets.tolist()
        for i, start in enumerate(offs):
            end = offs[i + 1] if i + 1 < len(offs) else m
            docs.append(self.tokens[start : end - 1].copy())
        return docs


def flatten_corpus(documents, eos_id: int, subset_name: str, vocab_size: int) -> TokenCorpus:
    """Concatenate documents into one stream, appending EOS after each.

    Every document (the last included) is followed by exactly one EOS
    token, so the stream is a sequence of uniform ``doc ++ EOS`` blocks.
    Documents containing the EOS id are rejected.
    """
    offsets = []
    parts = []
    pos = 0
    for i, doc in enumerate(documents):
        arr = np.asarray(doc, dtype=TOKEN_DTYPE)
        if arr.size and (arr == eos_id).any():
            raise ValidationError(f"document {i} contains the EOS token id {eos_id}")
        offsets.append(pos)
        parts.append(arr)
        parts.append(np.array([eos_id], dtype=TOKEN_DTYPE))
        pos += arr.size + 1
    tokens = np.concatenate(parts) if parts else np.empty(0, dtype=TOKEN_DTYPE)
    corpus = TokenCorpus(
        tokens=tokens,
        doc_offsets=np.asarray(offsets, dtype=np.int64),
        subset_name=subset_name,
        vocab_size=vocab_size,
        eos_id=eos_id,
    )
    corpus.validate()
    return corpus


def read_jsonl_documents(path):
    """Yield (text, subset) pairs from a JSON-lines document file."""
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "text" not in obj or "subset" not in obj:
                raise ValidationError(f"{path}:{lineno}: expected keys 'text' and 'subset'")
            yield obj["text"], obj["subset"]


def write_token_file(path, tokens) -> None:
    """Write a raw token stream in the little-endian binary format."""
    arr = np.ascontiguousarray(tokens, dtype="<u4")
    with open(path, "wb") as f:
        f.write(TOKENS_MAGIC)
        f.write(struct.pack("<II", TOKENS_VERSION, TOKEN_WIDTH))
        f.write(struct.pack("<Q", arr.size))
        f.write(arr.tobytes())


def read_token_file(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(8 + 4 + 4 + 8)
        if len(header) < 24:
            raise CorruptIndexError(f"{path}: truncated header")
        magic = header[:8]
        if magic != TOKENS_MAGIC:
            raise CorruptIndexError(f"{path}: bad magic {magic!r}")
        version, width = struct.unpack("<II", header[8:16])
        if version != TOKENS_VERSION:
            raise CorruptIndexError(f"{path}: unsupported version {version}")
        if width != TOKEN_WIDTH:
            raise CorruptIndexError(f"{path}: unsupported token width {width}")
        (count,) = struct.unpack("<Q", header[16:24])
        payload = f.read(count * TOKEN_WIDTH)
        if len(payload) != count * TOKEN_WIDTH:
            raise CorruptIndexError(f"{path}: truncated token payload")
    return np.frombuffer(payload, dtype="<u4").astype(TOKEN_DTYPE)


def write_doc_manifest(path, doc_lengths) -> None:
    """Companion JSON-lines manifest: one {start, length} object per document."""
    with open(path, "w", encoding="utf-8") as f:
        start = 0
        for length in doc_lengths:
            f.write(json.dumps({"start": start, "length": int(length)}) + "\n")
            start += int(length)


def read_pretokenized(token_path, manifest_path) -> list[np.ndarray]:
    """Load raw documents from a binary token file plus its manifest."""
    stream = read_token_file(token_path)
    docs = []
    with open(manifest_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            start, length = int(obj["start"]), int(obj["length"])
            if start < 0 or length < 0 or start + length > stream.size:
                raise ValidationError(
                    f"{manifest_path}:{lineno}: span [{start}, {start + length}) "
                    f"outside token stream of length {stream.size}"
                )
            docs.append(stream[start : start + length])
    return docs
