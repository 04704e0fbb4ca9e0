"""Pure-Python fallback for the suffix-array kernels.

Same algorithms and call signatures as the compiled ``ostd._sais``
extension: SA-IS induced-sorting construction, lower/upper-bound range
search for pattern counting, and the FNV-1a checksum. Selected by
``ostd.kernels`` when the extension is not built. Noticeably slower on
large inputs; see benchmarks/bench_backends.py.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def build_suffix_array(tokens, alphabet_size: int) -> np.ndarray:
    """Sort all suffix start positions of ``tokens`` lexicographically.

    ``tokens`` is a sequence of ints in [0, alphabet_size). Returns an
    int64 array that is a permutation of 0..m-1; a proper prefix sorts
    before its extensions (virtual end-of-text sentinel smaller than
    every token id). Linear time in m + alphabet_size per recursion
    level (SA-IS induced sorting).
    """
    t = list(int(x) for x in tokens)
    m = len(t)
    if m == 0:
        raise ValueError("cannot build a suffix array over an empty token stream")
    if alphabet_size <= 0:
        raise ValueError("alphabet_size must be positive")
    sa = _sais(t, alphabet_size)
    return np.asarray(sa[1:], dtype=np.int64)


def _sais(t, k):
    """SA-IS over integer list t with alphabet [0, k).

    Returns a list of length len(t)+1 whose slot 0 holds the virtual
    sentinel suffix (position len(t)).
    """
    n = len(t)
    # Suffix types: True = S (smaller than successor), False = L.
    types = [False] * (n + 1)
    types[n] = True
    if n >= 1:
        for i in range(n - 2, -1, -1):
            if t[i] < t[i + 1] or (t[i] == t[i + 1] and types[i + 1]):
                types[i] = True

    bucket_sizes = [0] * k
    for c in t:
        bucket_sizes[c] += 1

    def bucket_tails():
        tails = [0] * k
        off = 1
        for c in range(k):
            off += bucket_sizes[c]
            tails[c] = off - 1
        return tails

    def bucket_heads():
        heads = [0] * k
        off = 1
        for c in range(k):
            heads[c] = off
            off += bucket_sizes[c]
        return heads

    def is_lms(i):
        return i > 0 and types[i] and not types[i - 1]

    # Pass 1: drop LMS suffixes into bucket tails in text order, then
    # induce L and S entries; this sorts LMS substrings.
    sa = [-1] * (n + 1)
    sa[0] = n
    tails = bucket_tails()
    for i in range(1, n):
        if types[i] and not types[i - 1]:
            c = t[i]
            sa[tails[c]] = i
            tails[c] -= 1
    _induce(t, sa, types, bucket_heads(), bucket_tails())

    # Name LMS substrings in sorted order.
    names = [-1] * (n + 1)
    names[n] = 0
    current = 0
    prev = n
    for i in range(1, n + 1):
        pos = sa[i]
        if not is_lms(pos):
            continue
        if not _lms_substrings_equal(t, types, is_lms, prev, pos):
            current += 1
        names[pos] = current
        prev = pos

    positions = [i for i in range(1, n + 1) if names[i] != -1]
    summary = [names[p] for p in positions]

    if current + 1 == len(summary):
        # All names unique: the summary order is a direct bucket sort.
        summary_sa = [-1] * (len(summary) + 1)
        summary_sa[0] = len(summary)
        for i, name in enumerate(summary):
            summary_sa[name + 1] = i
    else:
        summary_sa = _sais(summary, current + 1)

    # Pass 2: place LMS suffixes in their final relative order, induce again.
    sa = [-1] * (n + 1)
    sa[0] = n
    tails = bucket_tails()
    # summary_sa[0] is the summary sentinel, summary_sa[1] the original
    # sentinel's LMS entry (already pinned at sa[0]).
    for i in range(len(summary_sa) - 1, 1, -1):
        pos = positions[summary_sa[i]]
        c = t[pos]
        sa[tails[c]] = pos
        tails[c] -= 1
    _induce(t, sa, types, bucket_heads(), bucket_tails())
    return sa


def _induce(t, sa, types, heads, tails):
    for i in range(len(sa)):
        j = sa[i] - 1
        if j >= 0 and not types[j]:
            c = t[j]
            sa[heads[c]] = j
            heads[c] += 1
    for i in range(len(sa) - 1, -1, -1):
        j = sa[i] - 1
        if j >= 0 and types[j]:
            c = t[j]
            sa[tails[c]] = j
            tails[c] -= 1


def _lms_substrings_equal(t, types, is_lms, a, b):
    n = len(t)
    if a == n or b == n:
        return a == b
    i = 0
    while True:
        a_lms = is_lms(a + i)
        b_lms = is_lms(b + i)
        if i > 0 and a_lms and b_lms:
            return True
        if a_lms != b_lms:
            return False
        if a + i == n or b + i == n:
            return False
        if t[a + i] != t[b + i]:
            return False
        i += 1


def count_range(tokens, sa, pattern):
    """Return (lo, hi) such that sa[lo:hi] are all suffixes starting with
    pattern. Each bound is one binary search; O(|pattern| log m) token
    comparisons total.
    """
    toks = tokens
    pat = [int(x) for x in pattern]
    if not pat:
        raise ValueError("pattern must be non-empty")
    m = len(toks)

    def cmp_suffix(start):
        # -1: suffix < pattern, 0: suffix starts with pattern, 1: suffix > pattern
        for k, pk in enumerate(pat):
            idx = start + k
            if idx >= m:
                return -1
            tk = toks[idx]
            if tk < pk:
                return -1
            if tk > pk:
                return 1
        return 0

    lo, hi = 0, m
    while lo < hi:
        mid = (lo + hi) // 2
        if cmp_suffix(sa[mid]) < 0:
            lo = mid + 1
        else:
            hi = mid
    first = lo
    hi = m
    while lo < hi:
        mid = (lo + hi) // 2
        if cmp_suffix(sa[mid]) <= 0:
            lo = mid + 1
        else:
            hi = mid
    return first, lo


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte string."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _U64_MASK
    return h
