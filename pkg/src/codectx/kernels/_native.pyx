# cython: language_level=3
"""Compiled kernels. Must match codectx.kernels.pure bit-for-bit."""

from cpython.unicode cimport Py_UNICODE_ISALNUM, Py_UNICODE_ISSPACE

ctypedef unsigned long long u64

cdef u64 FNV_BASIS = 0xCBF29CE484222325ULL
cdef u64 FNV_PRIME = 0x100000001B3ULL
cdef u64 TOKEN_MARKER = 0x74ULL
cdef u64 TRIGRAM_MARKER = 0x67ULL


cdef inline bint _is_word_char(Py_UCS4 ch):
    return Py_UNICODE_ISALNUM(ch) or ch == u'_'


def token_count(str text):
    """Count tokens under the fixed segmentation rule."""
    cdef Py_ssize_t i, n = len(text)
    cdef Py_ssize_t count = 0
    cdef bint in_word = False
    cdef Py_UCS4 ch
    for i in range(n):
        ch = text[i]
        if _is_word_char(ch):
            if not in_word:
                count += 1
                in_word = True
        else:
            in_word = False
            if not Py_UNICODE_ISSPACE(ch):
                count += 1
    return count


cdef inline void _add_feature(u64 h, double[::1] out, Py_ssize_t dim) noexcept:
    cdef Py_ssize_t bucket = <Py_ssize_t> ((h >> 1) % <u64> dim)
    if h & 1ULL:
        out[bucket] += 1.0
    else:
        out[bucket] -= 1.0


def embed_accumulate(str text, double[::1] out):
    """Accumulate signed feature-hash counts for ``text`` into ``out``.

    ``text`` must already be case-folded by the caller.
    """
    cdef Py_ssize_t n = len(text)
    cdef Py_ssize_t dim = out.shape[0]
    cdef Py_ssize_t i = 0, start, tok_len, j
    cdef u64 h, ht
    cdef Py_UCS4 ch
    if dim <= 0:
        return
    while i < n:
        ch = text[i]
        if not _is_word_char(ch):
            i += 1
            continue
        start = i
        h = (FNV_BASIS ^ TOKEN_MARKER) * FNV_PRIME
        while i < n and _is_word_char(text[i]):
            h = (h ^ <u64> text[i]) * FNV_PRIME
            i += 1
        _add_feature(h, out, dim)
        tok_len = i - start
        if tok_len >= 3:
            for j in range(start, i - 2):
                ht = (FNV_BASIS ^ TRIGRAM_MARKER) * FNV_PRIME
                ht = (ht ^ <u64> text[j]) * FNV_PRIME
                ht = (ht ^ <u64> text[j + 1]) * FNV_PRIME
                ht = (ht ^ <u64> text[j + 2]) * FNV_PRIME
                _add_feature(ht, out, dim)
