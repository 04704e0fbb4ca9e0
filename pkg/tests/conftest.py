import numpy as np
import pytest

from ostd.corpus import Vocabulary, flatten_corpus
from ostd.suffix_index import build_index


def scan_count(tokens, pattern):
    """Linear-scan occurrence oracle."""
    toks = list(int(t) for t in tokens)
    pat = list(int(t) for t in pattern)
    return sum(
        1
        for i in range(len(toks) - len(pat) + 1)
        if toks[i : i + len(pat)] == pat
    )


def scan_total(indexes, pattern):
    return sum(scan_count(idx.corpus.tokens, pattern) for idx in indexes)


def naive_suffix_sort(tokens):
    """Comparison-sort suffix oracle (proper prefix sorts first)."""
    from functools import cmp_to_key

    toks = list(tokens)
    m = len(toks)

    def cmp(a, b):
        while a < m and b < m:
            if toks[a] != toks[b]:
                return -1 if toks[a] < toks[b] else 1
            a += 1
            b += 1
        return (a < m) - (b < m)

    return sorted(range(m), key=cmp_to_key(cmp))


def build_subset_indexes(subset_texts, vocab=None):
    """Indexes for {subset_name: [doc text, ...]} sharing one vocabulary.

    All documents are encoded before any flattening so every subset
    records the same final vocab_size.
    """
    vocab = vocab or Vocabulary()
    encoded = {
        name: [vocab.encode(t) for t in texts] for name, texts in subset_texts.items()
    }
    indexes = []
    for name, docs in encoded.items():
        corpus = flatten_corpus(
            docs, eos_id=vocab.eos_id, subset_name=name, vocab_size=vocab.vocab_size
        )
        indexes.append(build_index(corpus))
    return indexes, vocab


def random_token_indexes(rng, n_subsets=2, max_docs=6, max_len=40, vocab_size=12):
    """Random per-subset corpora over a closed integer vocabulary.

    Token ids 1..vocab_size-1 are usable; 0 is EOS.
    """
    indexes = []
    for s in range(n_subsets):
        docs = [
            rng.integers(1, vocab_size, size=rng.integers(1, max_len + 1)).tolist()
            for _ in range(rng.integers(1, max_docs + 1))
        ]
        corpus = flatten_corpus(
            docs, eos_id=0, subset_name=f"subset_{s}", vocab_size=vocab_size
        )
        indexes.append(build_index(corpus))
    return indexes


@pytest.fixture
def tiny_index():
    corpus = flatten_corpus([[1, 2, 1, 2, 3]], eos_id=0, subset_name="a", vocab_size=4)
    return build_index(corpus)
