# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled suffix-array kernels: SA-IS construction, pattern range
search, and the FNV-1a checksum. ``ostd._sais_py`` is the drop-in pure
fallback with the same semantics.
"""

import numpy as np

BACKEND_NAME = "cython"

ctypedef long long i64
ctypedef unsigned int u32
ctypedef unsigned long long u64


def build_suffix_array(tokens, alphabet_size):
    """Sort all suffix start positions of ``tokens`` lexicographically.

    ``tokens`` is a sequence of ints in [0, alphabet_size). Returns an
    int64 array that is a permutation of 0..m-1; a proper prefix sorts
    before its extensions. Linear time via SA-IS induced sorting.
    """
    cdef i64 k = int(alphabet_size)
    if k <= 0:
        raise ValueError("alphabet_size must be positive")
    t_arr = np.ascontiguousarray(tokens, dtype=np.int64)
    cdef Py_ssize_t n = t_arr.shape[0]
    if n == 0:
        raise ValueError("cannot build a suffix array over an empty token stream")
    sa_arr = np.empty(n + 1, dtype=np.int64)
    cdef i64[::1] t = t_arr
    cdef i64[::1] sa = sa_arr
    _sais(t, sa, n, k)
    return sa_arr[1:].copy()


cdef void _fill_tails(i64[::1] bucket_sizes, i64[::1] out, i64 k) noexcept nogil:
    cdef i64 c, off = 1
    for c in range(k):
        off += bucket_sizes[c]
        out[c] = off - 1


cdef void _fill_heads(i64[::1] bucket_sizes, i64[::1] out, i64 k) noexcept nogil:
    cdef i64 c, off = 1
    for c in range(k):
        out[c] = off
        off += bucket_sizes[c]


cdef void _induce(i64[::1] t, i64[::1] sa, unsigned char[::1] types,
                  i64[::1] bucket_sizes, i64[::1] scratch, Py_ssize_t n,
                  i64 k) noexcept nogil:
    cdef Py_ssize_t i
    cdef i64 j, c
    _fill_heads(bucket_sizes, scratch, k)
    for i in range(n + 1):
        j = sa[i] - 1
        if j >= 0 and types[j] == 0:
            c = t[j]
            sa[scratch[c]] = j
            scratch[c] += 1
    _fill_tails(bucket_sizes, scratch, k)
    for i in range(n, -1, -1):
        j = sa[i] - 1
        if j >= 0 and types[j] == 1:
            c = t[j]
            sa[scratch[c]] = j
            scratch[c] -= 1


cdef bint _lms_equal(i64[::1] t, unsigned char[::1] types, Py_ssize_t n,
                     i64 a, i64 b) noexcept nogil:
    cdef i64 i = 0
    cdef bint a_lms, b_lms
    if a == n or b == n:
        return a == b
    while True:
        a_lms = (a + i > 0) and types[a + i] == 1 and types[a + i - 1] == 0
        b_lms = (b + i > 0) and types[b + i] == 1 and types[b + i - 1] == 0
        if i > 0 and a_lms and b_lms:
            return True
        if a_lms != b_lms:
            return False
        if a + i == n or b + i == n:
            return False
        if t[a + i] != t[b + i]:
            return False
        i += 1


cdef void _sais(i64[::1] t, i64[::1] sa, Py_ssize_t n, i64 k):
    """Fill sa (length n+1, slot 0 = virtual sentinel) for token view t."""
    cdef Py_ssize_t i
    cdef i64 j, c, pos, prev, current, n_lms

    types_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef unsigned char[::1] types = types_arr
    types[n] = 1
    for i in range(n - 2, -1, -1):
        if t[i] < t[i + 1] or (t[i] == t[i + 1] and types[i + 1] == 1):
            types[i] = 1

    sizes_arr = np.zeros(k, dtype=np.int64)
    cdef i64[::1] bucket_sizes = sizes_arr
    for i in range(n):
        bucket_sizes[t[i]] += 1
    scratch_arr = np.empty(k, dtype=np.int64)
    cdef i64[::1] scratch = scratch_arr

    # Pass 1: approximate LMS placement, induce to sort LMS substrings.
    sa[:] = -1
    sa[0] = n
    _fill_tails(bucket_sizes, scratch, k)
    for i in range(1, n):
        if types[i] == 1 and types[i - 1] == 0:
            c = t[i]
            sa[scratch[c]] = i
            scratch[c] -= 1
    _induce(t, sa, types, bucket_sizes, scratch, n, k)

    names_arr = np.full(n + 1, -1, dtype=np.int64)
    cdef i64[::1] names = names_arr
    names[n] = 0
    current = 0
    prev = n
    for i in range(1, n + 1):
        pos = sa[i]
        if pos <= 0 or types[pos] == 0 or types[pos - 1] == 1:
            continue
        if not _lms_equal(t, types, n, prev, pos):
            current += 1
        names[pos] = current
        prev = pos

    n_lms = 0
    for i in range(1, n + 1):
        if names[i] != -1:
            n_lms += 1
    positions_arr = np.empty(n_lms, dtype=np.int64)
    summary_arr = np.empty(n_lms, dtype=np.int64)
    cdef i64[::1] positions = positions_arr
    cdef i64[::1] summary = summary_arr
    j = 0
    for i in range(1, n + 1):
        if names[i] != -1:
            positions[j] = i
            summary[j] = names[i]
            j += 1

    summary_sa_arr = np.empty(n_lms + 1, dtype=np.int64)
    cdef i64[::1] summary_sa = summary_sa_arr
    if current + 1 == n_lms:
        # All names unique: direct bucket sort.
        summary_sa[0] = n_lms
        for i in range(n_lms):
            summary_sa[summary[i] + 1] = i
    else:
        _sais(summary, summary_sa, n_lms, current + 1)

    # Pass 2: exact LMS placement, induce final order.
    sa[:] = -1
    sa[0] = n
    _fill_tails(bucket_sizes, scratch, k)
    for i in range(n_lms, 1, -1):
        pos = positions[summary_sa[i]]
        c = t[pos]
        sa[scratch[c]] = pos
        scratch[c] -= 1
    _induce(t, sa, types, bucket_sizes, scratch, n, k)


cdef int _cmp_suffix(const u32[::1] tokens, Py_ssize_t m, i64 start,
                     const u32[::1] pattern, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t kk
    for kk in range(p):
        if start + kk >= m:
            return -1
        if tokens[start + kk] < pattern[kk]:
            return -1
        if tokens[start + kk] > pattern[kk]:
            return 1
    return 0


def count_range(tokens, sa, pattern):
    """Return (lo, hi) such that sa[lo:hi] are all suffixes starting with
    pattern. O(|pattern| log m) token comparisons.
    """
    t_arr = np.ascontiguousarray(tokens, dtype=np.uint32)
    sa_arr = np.ascontiguousarray(sa, dtype=np.int64)
    p_arr = np.ascontiguousarray(pattern, dtype=np.uint32)
    cdef const u32[::1] t = t_arr
    cdef const i64[::1] s = sa_arr
    cdef const u32[::1] pat = p_arr
    cdef Py_ssize_t m = t.shape[0]
    cdef Py_ssize_t p = pat.shape[0]
    if p == 0:
        raise ValueError("pattern must be non-empty")
    cdef Py_ssize_t lo = 0, hi = m, mid, first
    with nogil:
        while lo < hi:
            mid = (lo + hi) // 2
            if _cmp_suffix(t, m, s[mid], pat, p) < 0:
                lo = mid + 1
            else:
                hi = mid
        first = lo
        hi = m
        while lo < hi:
            mid = (lo + hi) // 2
            if _cmp_suffix(t, m, s[mid], pat, p) <= 0:
                lo = mid + 1
            else:
                hi = mid
    return first, lo


def fnv1a64(data):
    """64-bit FNV-1a over a byte string."""
    cdef const unsigned char[::1] view = data
    cdef u64 h = 0xCBF29CE484222325ULL
    cdef Py_ssize_t i
    with nogil:
        for i in range(view.shape[0]):
            h ^= view[i]
            h *= 0x100000001B3ULL
    return h
