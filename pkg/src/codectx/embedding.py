"""Deterministic feature-hashed text embeddings.

Texts are case-folded, split into word tokens, and hashed into a fixed
256-dimensional space: one signed feature per whole token plus one per
character trigram inside the token. The result is L2-normalized; empty
or whitespace-only text is the single non-unit case and maps to the zero
vector.

No model weights, no network: two texts are similar exactly when they
share tokens or sub-word character structure. The retriever interface
allows swapping in an external embedding provider later.
"""

from __future__ import annotations

import numpy as np

from . import kernels

EMBED_DIM = 256


def embed(text: str) -> np.ndarray:
    """Embed ``text`` as a float64 unit vector (zero vector for no tokens)."""
    vec = np.zeros(EMBED_DIM, dtype=np.float64)
    kernels.embed_accumulate(text.lower(), vec)
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def is_zero_vector(vec: np.ndarray) -> bool:
    return not vec.any()
