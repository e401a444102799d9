"""Pure-Python reference kernels.

These define the canonical behavior; the Cython backend must match them
bit-for-bit. Token rule: a token is a maximal run of alphanumerics or
underscore, or a single non-whitespace character. Feature hashing: FNV-1a
over code points, one feature per word token plus one per character
trigram inside tokens of length >= 3; the low hash bit selects the sign
and the remaining bits the bucket.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_WORD_RE = re.compile(r"\w+")

_FNV_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_MARKER = 0x74  # 't'
_TRIGRAM_MARKER = 0x67  # 'g'

# dim -> {token -> ((bucket, sign), ...)}; bounded so long-lived processes
# cannot grow it without limit.
_feature_caches: dict = {}
_FEATURE_CACHE_MAX = 1 << 20


def token_count(text: str) -> int:
    """Count tokens under the fixed segmentation rule."""
    return len(_TOKEN_RE.findall(text))


def _fnv1a(marker: int, chars: str) -> int:
    h = ((_FNV_BASIS ^ marker) * _FNV_PRIME) & _MASK64
    for ch in chars:
        h = ((h ^ ord(ch)) * _FNV_PRIME) & _MASK64
    return h


def _token_features(token: str, dim: int):
    h = _fnv1a(_TOKEN_MARKER, token)
    feats = [((h >> 1) % dim, 1.0 if h & 1 else -1.0)]
    if len(token) >= 3:
        for i in range(len(token) - 2):
            h = _fnv1a(_TRIGRAM_MARKER, token[i : i + 3])
            feats.append(((h >> 1) % dim, 1.0 if h & 1 else -1.0))
    return tuple(feats)


def embed_accumulate(text: str, out) -> None:
    """Accumulate signed feature-hash counts for ``text`` into ``out``.

    ``text`` must already be case-folded by the caller; ``out`` is a
    float64 buffer whose length is the embedding dimension.
    """
    dim = len(out)
    cache = _feature_caches.get(dim)
    if cache is None:
        cache = _feature_caches[dim] = {}
    for token in _WORD_RE.findall(text):
        feats = cache.get(token)
        if feats is None:
            feats = _token_features(token, dim)
            if len(cache) >= _FEATURE_CACHE_MAX:
                cache.clear()
            cache[token] = feats
        for bucket, sign in feats:
            out[bucket] += sign
