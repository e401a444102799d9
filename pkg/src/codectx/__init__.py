"""codectx: a local repository context engine for coding assistants.

Two-stage pipeline: high-recall candidate retrieval (keyword, semantic,
code-graph) fused per query, then a pointwise ranker that selects items
by relevance threshold or token budget for prompt assembly. Ships with
guardrail checks for generated code and an offline evaluation harness.
"""

__version__ = "0.1.0"

from .corpus import ContextItem, CorpusIndex, SourceFile, chunk_file, ingest_repo, token_count
from .retrieval import Candidate, CandidatePool, Query, complementarity, embed, fuse
from .ranking import FeatureVector, LabeledExample, RankedSelection, RankerModel, select, train

__all__ = [
    "__version__",
    "Candidate",
    "CandidatePool",
    "ContextItem",
    "CorpusIndex",
    "FeatureVector",
    "LabeledExample",
    "Query",
    "RankedSelection",
    "RankerModel",
    "SourceFile",
    "chunk_file",
    "complementarity",
    "embed",
    "fuse",
    "ingest_repo",
    "select",
    "token_count",
    "train",
]
