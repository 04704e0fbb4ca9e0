"""Manifest loading and count queries over memory-mapped index files."""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np

# Must match the engine's index file format version.
INDEX_FORMAT_VERSION = 1

_MAGIC = b"OSTDIDX1"
_HEADER = struct.Struct("<8sIIIIIQQ")
_TOKEN_WIDTH = 4
_POSITION_WIDTH = 8

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(r" ?\w+| ?[^\w\s]|\s")


class BridgeError(Exception):
    pass


class CorruptIndexError(BridgeError):
    pass


class HandleClosedError(BridgeError):
    pass


class UnknownTokenError(BridgeError):
    pass


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _U64_MASK
    return h


@dataclass
class CountResult:
    per_subset: dict[str, int]
    total: int

    def to_dict(self) -> dict:
        return {"per_subset": dict(self.per_subset), "total": self.total}


@dataclass
class _Subset:
    name: str
    tokens: np.ndarray  # memmap view, uint32
    sa: np.ndarray  # memmap view, uint64


@dataclass
class BoundIndexHandle:
    subset_names: list[str]
    _subsets: list[_Subset] = field(default_factory=list, repr=False)
    _vocab: dict[str, int] = field(default_factory=dict, repr=False)
    _closed: bool = False

    def _require_open(self):
        if self._closed:
            raise HandleClosedError("operation on a closed index handle")


def _open_index_file(path: str, name: str) -> _Subset:
    try:
        raw = np.memmap(path, dtype=np.uint8, mode="r")
    except (OSError, ValueError) as exc:
        raise CorruptIndexError(f"subset {name!r}: cannot map {path}: {exc}") from exc
    if raw.size < _HEADER.size:
        raise CorruptIndexError(f"subset {name!r}: truncated header in {path}")
    magic, version, tok_w, pos_w, _vocab, _eos, m, stored = _HEADER.unpack(
        raw[: _HEADER.size].tobytes()
    )
    if magic != _MAGIC:
        raise CorruptIndexError(f"subset {name!r}: bad magic in {path}")
    if version != INDEX_FORMAT_VERSION:
        raise CorruptIndexError(
            f"subset {name!r}: format version {version} != {INDEX_FORMAT_VERSION}"
        )
    if tok_w != _TOKEN_WIDTH or pos_w != _POSITION_WIDTH:
        raise CorruptIndexError(f"subset {name!r}: unexpected field widths in {path}")
    expected = _HEADER.size + m * (_TOKEN_WIDTH + _POSITION_WIDTH)
    if raw.size != expected:
        raise CorruptIndexError(
            f"subset {name!r}: {path} is {raw.size} bytes, expected {expected}"
        )
    token_bytes = raw[_HEADER.size : _HEADER.size + m * _TOKEN_WIDTH]
    if _fnv1a64(token_bytes.tobytes()) != stored:
        raise CorruptIndexError(f"subset {name!r}: token checksum mismatch in {path}")
    tokens = token_bytes.view("<u4")
    sa = raw[_HEADER.size + m * _TOKEN_WIDTH :].view("<u8")
    return _Subset(name=name, tokens=tokens, sa=sa)


def open_manifest(path: str) -> BoundIndexHandle:
    """Load every subset index listed in a manifest and its vocabulary.

    All index files are checksum-verified up front; memory usage is
    proportional to the mapped index sizes.
    """
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != INDEX_FORMAT_VERSION:
        raise CorruptIndexError(
            f"{path}: manifest format_version {manifest.get('format_version')} "
            f"!= {INDEX_FORMAT_VERSION}"
        )
    base = os.path.dirname(os.path.abspath(path))
    subsets = []
    for entry in manifest["subsets"]:
        subsets.append(_open_index_file(os.path.join(base, entry["path"]), entry["name"]))
    with open(os.path.join(base, manifest["vocabulary"]), "r", encoding="utf-8") as f:
        vocab_payload = json.load(f)
    vocab = dict(vocab_payload["forms"])
    return BoundIndexHandle(
        subset_names=[s.name for s in subsets], _subsets=subsets, _vocab=vocab
    )


def close(handle: BoundIndexHandle) -> None:
    """Release the handle; later operations fail with HandleClosedError."""
    handle._closed = True
    handle._subsets = []
    handle._vocab = {}


def _compare_suffix(tokens: np.ndarray, start: int, pattern) -> int:
    """-1 if suffix < pattern, 0 if it starts with pattern, 1 if greater."""
    m = tokens.shape[0]
    for k, want in enumerate(pattern):
        idx = start + k
        if idx >= m:
            return -1
        have = int(tokens[idx])
        if have < want:
            return -1
        if have > want:
            return 1
    return 0


def _count_in_subset(subset: _Subset, pattern) -> int:
    sa = subset.sa
    tokens = subset.tokens
    lo, hi = 0, sa.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if _compare_suffix(tokens, int(sa[mid]), pattern) < 0:
            lo = mid + 1
        else:
            hi = mid
    first = lo
    hi = sa.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if _compare_suffix(tokens, int(sa[mid]), pattern) <= 0:
            lo = mid + 1
        else:
            hi = mid
    return lo - first


def count_tokens(handle: BoundIndexHandle, token_ids) -> CountResult:
    """Per-subset and total occurrence counts of a token id pattern."""
    handle._require_open()
    pattern = [int(t) for t in token_ids]
    if not pattern:
        raise BridgeError("pattern must be non-empty")
    per_subset = {s.name: _count_in_subset(s, pattern) for s in handle._subsets}
    return CountResult(per_subset=per_subset, total=sum(per_subset.values()))


def count_tokens_batch(handle: BoundIndexHandle, patterns) -> list[CountResult]:
    """Batch variant of count_tokens; elementwise identical to single calls."""
    handle._require_open()
    return [count_tokens(handle, p) for p in patterns]


def _encode(handle: BoundIndexHandle, text: str) -> list[int]:
    ids = []
    for match in _TOKEN_RE.finditer(text):
        surface = match.group(0)
        token_id = handle._vocab.get(surface)
        if token_id is None:
            raise UnknownTokenError(f"surface form {surface!r} not in vocabulary")
        ids.append(token_id)
    return ids


def expand_phrase_variants(phrase: str) -> list[str]:
    """Capitalization and spacing variants, deduplicated in rule order."""
    title = " ".join(w.capitalize() for w in phrase.split(" "))
    bases = [phrase, phrase.lower(), title]
    variants = []
    for base in bases + [" " + b for b in bases]:
        if base not in variants:
            variants.append(base)
    return variants


def count_text(handle: BoundIndexHandle, text: str, variant_expansion: bool = False) -> int:
    """Total count of a text pattern, optionally expanded over variants.

    With expansion on this matches the engine's key-phrase scoring for a
    single phrase: variants that do not tokenize under the frozen
    vocabulary cannot occur and contribute zero. Without expansion an
    unknown surface form is an error.
    """
    handle._require_open()
    if not text:
        raise BridgeError("text must be non-empty")
    if variant_expansion:
        total = 0
        for variant in expand_phrase_variants(text):
            try:
                ids = _encode(handle, variant)
            except UnknownTokenError:
                continue
            if ids:
                total += count_tokens(handle, ids).total
        return total
    ids = _encode(handle, text)
    if not ids:
        raise BridgeError(f"text {text!r} tokenizes to an empty pattern")
    return count_tokens(handle, ids).total
