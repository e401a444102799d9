"""Stage 1 of the context engine: high-recall candidate retrieval.

Three complementary retrievers run over the immutable corpus index —
keyword (BM25 over the inverted index), semantic (exact cosine over the
feature-hash embeddings), and graph (symbol definition/reference lookup
with one-hop expansion) — and their ranked lists are merged with
reciprocal-rank fusion. All retrievers are pure functions of (index,
query): repeated calls return identical results, and they may safely run
concurrently against one index.

Ordering contract everywhere: descending score, ties broken by ascending
item id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lexing
from .corpus import CorpusIndex
from .embedding import embed

BM25_K1 = 1.2
BM25_B = 0.75
RRF_K = 60

KEYWORD = "keyword"
SEMANTIC = "semantic"
GRAPH = "graph"
FUSED = "fused"
RETRIEVER_TAGS = (KEYWORD, SEMANTIC, GRAPH)


@dataclass(frozen=True)
class Query:
    """A retrieval request: free text plus optional workspace state."""

    text: str
    top_n_per_retriever: int = 50
    active_file: str | None = None


@dataclass(frozen=True)
class Candidate:
    item_id: int
    retriever_tag: str
    raw_score: float
    rank: int  # 1-based within its retriever


@dataclass(frozen=True)
class CandidatePool:
    """Per-retriever candidate lists for one query, plus the fused list."""

    query: Query
    per_retriever: dict[str, list[Candidate]]
    fused: list[Candidate] = field(default_factory=list)

    def union_ids(self) -> set[int]:
        return {c.item_id for cands in self.per_retriever.values() for c in cands}


def _ranked(ids, scores, tag: str, top_n: int) -> list[Candidate]:
    """Order (score desc, id asc), truncate, and assign 1-based ranks."""
    if top_n <= 0 or len(ids) == 0:
        return []
    ids = np.asarray(ids)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((ids, -scores))[:top_n]
    return [
        Candidate(item_id=int(ids[i]), retriever_tag=tag, raw_score=float(scores[i]), rank=r)
        for r, i in enumerate(order, start=1)
    ]


def query_terms(text: str) -> list[str]:
    """Lowercased word terms of a query, duplicates removed, order kept."""
    seen: set[str] = set()
    out: list[str] = []
    for term in lexing.TERM_RE.findall(text.lower()):
        if term not in seen:
            seen.add(term)
            out.append(term)
    return out


def bm25_idf(item_count: int, doc_freq: int) -> float:
    return math.log(1.0 + (item_count - doc_freq + 0.5) / (doc_freq + 0.5))


def keyword_search(index: CorpusIndex, query: Query, top_n: int) -> list[Candidate]:
    """BM25 scoring (k1=1.2, b=0.75) of the query's terms.

    Each distinct query term contributes once. Items matching no term are
    never returned.
    """
    terms = query_terms(query.text)
    if not terms or index.item_count == 0:
        return []
    n_items = index.item_count
    avgdl = index.stats.avg_doc_word_len
    if avgdl <= 0.0:
        return []
    scores = np.zeros(n_items, dtype=np.float64)
    matched = np.zeros(n_items, dtype=bool)
    lens = index.doc_word_lens
    for term in terms:
        entry = index.postings.get(term)
        if entry is None:
            continue
        ids, tfs = entry
        idf = bm25_idf(n_items, len(ids))
        tf = tfs.astype(np.float64)
        denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * (lens[ids] / avgdl))
        scores[ids] += idf * tf * (BM25_K1 + 1.0) / denom
        matched[ids] = True
    hit_ids = np.nonzero(matched)[0]
    return _ranked(hit_ids, scores[hit_ids], KEYWORD, top_n)


def semantic_search(index: CorpusIndex, query: Query, top_n: int) -> list[Candidate]:
    """Exact (non-approximate) cosine ranking over all item embeddings.

    Query and item vectors are unit length (or zero), so the dot product
    is the cosine. A query embedding of zero yields no candidates.
    """
    if index.item_count == 0 or top_n <= 0:
        return []
    q = embed(query.text)
    if not q.any():
        return []
    scores = index.embeddings64 @ q
    return _ranked(np.arange(index.item_count), scores, SEMANTIC, top_n)


def _query_identifiers(text: str) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for name in lexing.IDENT_RE.findall(text):
        if len(name) >= lexing.MIN_SYMBOL_LEN and name not in seen:
            seen.add(name)
            out.append(name)
    return out


def graph_search(index: CorpusIndex, query: Query, top_n: int) -> list[Candidate]:
    """Symbol-table lookup of query identifiers with one-hop expansion.

    Per matched symbol, items with a definition site score 2.0 and items
    with a reference site score 1.0, summed per item. One hop: symbols
    referenced inside a matched definition item (other than the queried
    ones) add 0.5 to each item defining them.
    """
    matched = [name for name in _query_identifiers(query.text) if index.has_symbol(name)]
    if not matched:
        return []

    scores: dict[int, float] = {}
    def_items: set[int] = set()
    for name in matched:
        for item_id in {item for item, _line in index.symbol_defs(name)}:
            scores[item_id] = scores.get(item_id, 0.0) + 2.0
            def_items.add(item_id)
        for item_id in {item for item, _line in index.symbol_refs(name)}:
            scores[item_id] = scores.get(item_id, 0.0) + 1.0

    matched_set = set(matched)
    expansion: set[str] = set()
    for item_id in def_items:
        item = index.item(item_id)
        stripped = lexing.strip_strings_and_comments(
            item.text, lexing.language_for_path(item.path)
        )
        for name in lexing.IDENT_RE.findall(stripped):
            if (
                len(name) >= lexing.MIN_SYMBOL_LEN
                and name not in matched_set
                and index.symbol_defs(name)
            ):
                expansion.add(name)
    for name in expansion:
        for item_id in {item for item, _line in index.symbol_defs(name)}:
            scores[item_id] = scores.get(item_id, 0.0) + 0.5

    ids = list(scores)
    return _ranked(ids, [scores[i] for i in ids], GRAPH, top_n)


def fuse(
    per_retriever: dict[str, list[Candidate]], k: int = RRF_K
) -> list[Candidate]:
    """Reciprocal-rank fusion: fused_score(item) = sum of 1/(k + rank).

    Stable under permutation of the input lists; an empty input yields an
    empty fused list.
    """
    rrf: dict[int, float] = {}
    for cands in per_retriever.values():
        for cand in cands:
            rrf[cand.item_id] = rrf.get(cand.item_id, 0.0) + 1.0 / (k + cand.rank)
    ordered = sorted(rrf.items(), key=lambda kv: (-kv[1], kv[0]))
    return [
        Candidate(item_id=item_id, retriever_tag=FUSED, raw_score=score, rank=r)
        for r, (item_id, score) in enumerate(ordered, start=1)
    ]


def complementarity(
    list_a: list[Candidate], list_b: list[Candidate], n: int
) -> float:
    """Jaccard distance of the two top-n id sets; 0.0 when both are empty."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ids_a = {c.item_id for c in list_a[:n]}
    ids_b = {c.item_id for c in list_b[:n]}
    union = ids_a | ids_b
    if not union:
        return 0.0
    return 1.0 - len(ids_a & ids_b) / len(union)


def retrieve(index: CorpusIndex, query: Query) -> CandidatePool:
    """Run all retrievers for one query and fuse their lists."""
    top_n = query.top_n_per_retriever
    per_retriever = {
        KEYWORD: keyword_search(index, query, top_n),
        SEMANTIC: semantic_search(index, query, top_n),
        GRAPH: graph_search(index, query, top_n),
    }
    return CandidatePool(
        query=query, per_retriever=per_retriever, fused=fuse(per_retriever)
    )
