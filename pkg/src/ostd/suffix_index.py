"""Suffix-array index over a token corpus: build, query, serialize.

The index is the sorted permutation of all suffix start positions;
pattern occurrences are counted with two binary searches over it. The
on-disk layout is little-endian and versioned, with an FNV-1a checksum
over the token section so corruption is detected at load time.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from ostd import kernels
from ostd.corpus import TOKEN_DTYPE, TOKEN_WIDTH, TokenCorpus
from ostd.errors import (
    BadMagicError,
    ChecksumError,
    CorruptIndexError,
    ValidationError,
    VersionMismatchError,
)

INDEX_MAGIC = b"OSTDIDX1"
INDEX_FORMAT_VERSION = 1
POSITION_WIDTH = 8
_HEADER = struct.Struct("<8sIIIIIQQ")  # magic, version, tok_w, pos_w, vocab, eos, m, checksum


@dataclass
class SuffixIndex:
    """Sorted suffix permutation plus the corpus it indexes."""

    sa: np.ndarray
    corpus: TokenCorpus
    checksum: int

    def __post_init__(self):
        self.sa = np.ascontiguousarray(self.sa, dtype=np.int64)

    @property
    def subset_name(self) -> str:
        return self.corpus.subset_name


@dataclass
class CountResult:
    """Per-subset occurrence counts and their total."""

    per_subset: dict[str, int]
    total: int

    def to_dict(self) -> dict:
        return {"per_subset": dict(self.per_subset), "total": self.total}


def token_checksum(tokens: np.ndarray) -> int:
    """FNV-1a 64 over the little-endian token section bytes."""
    return kernels.fnv1a64(np.ascontiguousarray(tokens, dtype="<u4").tobytes())


def build_index(corpus: TokenCorpus) -> SuffixIndex:
    """Build the suffix array for a corpus with the SA-IS kernel."""
    if len(corpus) == 0:
        raise ValidationError("cannot index an empty corpus")
    corpus.validate()
    sa = kernels.build_suffix_array(corpus.tokens, corpus.vocab_size)
    return SuffixIndex(sa=sa, corpus=corpus, checksum=token_checksum(corpus.tokens))


def count(index: SuffixIndex, pattern) -> int:
    """Exact number of occurrences of ``pattern`` in the indexed stream."""
    pat = np.asarray(pattern, dtype=TOKEN_DTYPE)
    if pat.size == 0:
        raise ValidationError("pattern must be non-empty")
    lo, hi = kernels.count_range(index.corpus.tokens, index.sa, pat)
    return hi - lo


def count_across_subsets(indexes, pattern) -> CountResult:
    """Per-subset counts of ``pattern`` plus their sum."""
    indexes = list(indexes)
    if not indexes:
        raise ValidationError("at least one index required")
    first = indexes[0].corpus
    for idx in indexes[1:]:
        if (
            idx.corpus.vocab_size != first.vocab_size
            or idx.corpus.eos_id != first.eos_id
        ):
            raise ValidationError(
                f"vocabulary mismatch between subsets "
                f"{first.subset_name!r} and {idx.corpus.subset_name!r}"
            )
    per_subset = {}
    for idx in indexes:
        per_subset[idx.subset_name] = count(idx, pattern)
    return CountResult(per_subset=per_subset, total=sum(per_subset.values()))


def save_index(index: SuffixIndex, path) -> None:
    """Serialize an index to the versioned little-endian file format."""
    corpus = index.corpus
    m = len(corpus)
    token_bytes = np.ascontiguousarray(corpus.tokens, dtype="<u4").tobytes()
    header = _HEADER.pack(
        INDEX_MAGIC,
        INDEX_FORMAT_VERSION,
        TOKEN_WIDTH,
        POSITION_WIDTH,
        corpus.vocab_size,
        corpus.eos_id,
        m,
        kernels.fnv1a64(token_bytes),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(token_bytes)
        f.write(index.sa.astype("<u8").tobytes())


def load_index(path, subset_name: str | None = None) -> SuffixIndex:
    """Load and verify an index file.

    Bad magic, unsupported version, checksum mismatch, and truncation
    are reported as distinct errors. Document offsets are recovered from
    the EOS positions in the token stream.
    """
    if subset_name is None:
        subset_name = os.path.splitext(os.path.basename(path))[0]
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise CorruptIndexError(f"{path}: truncated header")
    magic, version, tok_w, pos_w, vocab_size, eos_id, m, stored_sum = _HEADER.unpack(
        raw[: _HEADER.size]
    )
    if magic != INDEX_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != INDEX_FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {INDEX_FORMAT_VERSION}")
    if tok_w != TOKEN_WIDTH or pos_w != POSITION_WIDTH:
        raise CorruptIndexError(f"{path}: unexpected widths ({tok_w}, {pos_w})")
    expected = _HEADER.size + m * (TOKEN_WIDTH + POSITION_WIDTH)
    if len(raw) != expected:
        raise CorruptIndexError(f"{path}: file is {len(raw)} bytes, expected {expected}")
    token_section = raw[_HEADER.size : _HEADER.size + m * TOKEN_WIDTH]
    if kernels.fnv1a64(token_section) != stored_sum:
        raise ChecksumError(f"{path}: token checksum mismatch")
    tokens = np.frombuffer(token_section, dtype="<u4").astype(TOKEN_DTYPE)
    sa64 = np.frombuffer(raw[_HEADER.size + m * TOKEN_WIDTH :], dtype="<u8")
    if sa64.size and sa64.max() >= m:
        raise CorruptIndexError(f"{path}: suffix position out of range")
    sa = sa64.astype(np.int64)
    seen = np.zeros(m, dtype=bool)
    seen[sa] = True
    if not seen.all():
        raise CorruptIndexError(f"{path}: suffix positions are not a permutation")
    if m and tokens.max() >= vocab_size:
        raise CorruptIndexError(f"{path}: token id out of vocabulary range")
    doc_starts = np.flatnonzero(tokens == eos_id) + 1
    doc_offsets = np.concatenate([[0], doc_starts[doc_starts < m]]) if m else np.empty(0)
    corpus = TokenCorpus(
        tokens=tokens,
        doc_offsets=doc_offsets,
        subset_name=subset_name,
        vocab_size=vocab_size,
        eos_id=eos_id,
    )
    return SuffixIndex(sa=sa, corpus=corpus, checksum=stored_sum)


def write_manifest(path, subsets: dict[str, str], vocab_path: str) -> None:
    """Write the JSON manifest listing per-subset index files.

    Paths are stored relative to the manifest's directory.
    """
    payload = {
        "format_version": INDEX_FORMAT_VERSION,
        "vocabulary": vocab_path,
        "subsets": [{"name": name, "path": p} for name, p in subsets.items()],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format_version") != INDEX_FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: unsupported manifest format_version")
    if "subsets" not in payload or "vocabulary" not in payload:
        raise ValidationError(f"{path}: manifest missing 'subsets' or 'vocabulary'")
    return payload


def load_manifest_indexes(path) -> list[SuffixIndex]:
    """Load every subset index listed in a manifest, in listed order."""
    payload = read_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    indexes = []
    for entry in payload["subsets"]:
        idx_path = os.path.join(base, entry["path"])
        indexes.append(load_index(idx_path, subset_name=entry["name"]))
    return indexes


def manifest_vocab_path(path) -> str:
    payload = read_manifest(path)
    return os.path.join(os.path.dirname(os.path.abspath(path)), payload["vocabulary"])
