"""Stage 2 of the context engine: pointwise relevance scoring and selection.

Each candidate is scored independently by a logistic model over six hand
features derived from the retrieval pool, then items are selected either
by a relevance-score threshold or greedily under a token budget. Scores
are calibrated probabilities, which is what makes plain thresholding
meaningful.

Training is full-batch gradient descent on L2-regularized mean log loss
with zero initialization: fully deterministic, so a fixed configuration
reproduces the model bit for bit.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import lexing
from .corpus import ContextItem
from .retrieval import GRAPH, KEYWORD, SEMANTIC, Candidate, CandidatePool, Query

FEATURE_NAMES = (
    "bm25_norm",
    "cosine",
    "graph_norm",
    "lexical_overlap",
    "path_affinity",
    "retriever_hits",
)

MODEL_FORMAT = "codectx-ranker"
MODEL_FORMAT_VERSION = 1

# Untrained fallback used by the CLI when no model file is configured.
DEFAULT_WEIGHTS = (2.0, 2.0, 1.0, 2.0, 0.5, 1.0)
DEFAULT_BIAS = -2.5


@dataclass(frozen=True)
class FeatureVector:
    bm25_norm: float
    cosine: float
    graph_norm: float
    lexical_overlap: float
    path_affinity: float
    retriever_hits: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.bm25_norm,
                self.cosine,
                self.graph_norm,
                self.lexical_overlap,
                self.path_affinity,
                self.retriever_hits,
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class LabeledExample:
    """One (query, item) pair with a binary relevance label and features."""

    query: str
    item_id: int
    label: int
    features: FeatureVector


@dataclass(frozen=True)
class RankerModel:
    weights: tuple[float, ...]
    bias: float
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def to_json(self) -> str:
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "weights": list(self.weights),
            "bias": self.bias,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RankerModel":
        payload = json.loads(text)
        if payload.get("format") != MODEL_FORMAT:
            raise ValueError("not a codectx ranker model file")
        if payload.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {payload.get('version')}")
        return cls(
            weights=tuple(float(w) for w in payload["weights"]),
            bias=float(payload["bias"]),
            feature_names=tuple(payload["feature_names"]),
        )

    def save(self, path: str) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "RankerModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


DEFAULT_MODEL = RankerModel(weights=DEFAULT_WEIGHTS, bias=DEFAULT_BIAS)


def _minmax_norm(cands: list[Candidate], item_id: int) -> float:
    """Min-max normalize an item's raw score within one retriever list.

    Missing item -> 0.0; a degenerate list whose scores are all equal
    normalizes to 1.0 for its members.
    """
    score = None
    lo = math.inf
    hi = -math.inf
    for c in cands:
        lo = min(lo, c.raw_score)
        hi = max(hi, c.raw_score)
        if c.item_id == item_id:
            score = c.raw_score
    if score is None:
        return 0.0
    if hi > lo:
        return (score - lo) / (hi - lo)
    return 1.0


def _raw_score(cands: list[Candidate], item_id: int) -> float:
    for c in cands:
        if c.item_id == item_id:
            return c.raw_score
    return 0.0


def _shares_directory_prefix(item_path: str, active_file: str) -> bool:
    item_dir = item_path.rsplit("/", 1)[0] if "/" in item_path else ""
    active_dir = active_file.rsplit("/", 1)[0] if "/" in active_file else ""
    a = tuple(p for p in item_dir.split("/") if p)
    b = tuple(p for p in active_dir.split("/") if p)
    shorter, longer = (a, b) if len(a) <= len(b) else (b, a)
    return longer[: len(shorter)] == shorter


def featurize(query: Query, item: ContextItem, pool: CandidatePool) -> FeatureVector:
    """Compute the six ranking features for one pooled candidate.

    Raises ValueError when the item is not in the pool's candidate union;
    a retriever that did not return the item contributes 0 to its feature.
    """
    if item.id not in pool.union_ids():
        raise ValueError(f"item {item.id} is not in the candidate pool")

    per = pool.per_retriever
    keyword = per.get(KEYWORD, [])
    semantic = per.get(SEMANTIC, [])
    graph = per.get(GRAPH, [])

    qterms = set(lexing.TERM_RE.findall(query.text.lower()))
    iterms = set(lexing.TERM_RE.findall(item.text.lower()))
    overlap = len(qterms & iterms) / len(qterms) if qterms else 0.0

    affinity = 0.0
    if query.active_file is not None and _shares_directory_prefix(
        item.path, query.active_file
    ):
        affinity = 1.0

    hits = sum(
        1 for cands in (keyword, semantic, graph) if any(c.item_id == item.id for c in cands)
    )

    return FeatureVector(
        bm25_norm=_minmax_norm(keyword, item.id),
        cosine=_raw_score(semantic, item.id),
        graph_norm=_minmax_norm(graph, item.id),
        lexical_overlap=overlap,
        path_affinity=affinity,
        retriever_hits=hits / 3.0,
    )


def _sigmoid(x: float) -> float:
    if x >= 0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


def score(model: RankerModel, fv: FeatureVector) -> float:
    """Relevance probability in (0, 1): logistic of weights . fv + bias."""
    z = float(np.dot(np.asarray(model.weights), fv.as_array())) + model.bias
    return _sigmoid(z)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 200
    l2: float = 1e-4
    seed: int = 0


def _design_matrix(examples) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([ex.features.as_array() for ex in examples])
    y = np.array([float(ex.label) for ex in examples])
    return X, y


def log_loss(model: RankerModel, examples) -> float:
    """Mean binary log loss of a model on labeled examples."""
    X, y = _design_matrix(examples)
    z = X @ np.asarray(model.weights) + model.bias
    # log(1 + exp(-|z|)) form avoids overflow for large |z|.
    return float(np.mean(np.logaddexp(0.0, -z) + (1.0 - y) * z))


def train(examples, hyper: TrainConfig | None = None) -> RankerModel:
    """Fit the pointwise ranker by full-batch gradient descent.

    Requires at least one positive and one negative example. The bias is
    not regularized. Training has no random component (zero init, full
    batches), so identical inputs produce an identical model; the seed
    field of TrainConfig is consumed by dataset generation and splitting
    helpers, not by the optimizer.
    """
    hyper = hyper or TrainConfig()
    examples = list(examples)
    labels = {ex.label for ex in examples}
    if labels != {0, 1}:
        raise ValueError("training data must contain both positive and negative examples")

    X, y = _design_matrix(examples)
    n = len(examples)
    w = np.zeros(X.shape[1], dtype=np.float64)
    b = 0.0
    for _ in range(hyper.epochs):
        z = X @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        grad_w = X.T @ (p - y) / n + hyper.l2 * w
        grad_b = float(np.mean(p - y))
        w -= hyper.learning_rate * grad_w
        b -= hyper.learning_rate * grad_b
    return RankerModel(weights=tuple(float(v) for v in w), bias=float(b))


def accuracy(model: RankerModel, examples) -> float:
    X, y = _design_matrix(examples)
    z = X @ np.asarray(model.weights) + model.bias
    return float(np.mean((z > 0.0) == (y > 0.5)))


def train_test_split(examples, holdout_fraction: float = 0.2, seed: int = 0):
    """Deterministic shuffled split into (train, heldout)."""
    examples = list(examples)
    order = np.random.default_rng(seed).permutation(len(examples))
    cut = int(round(len(examples) * (1.0 - holdout_fraction)))
    train_part = [examples[i] for i in order[:cut]]
    test_part = [examples[i] for i in order[cut:]]
    return train_part, test_part


# Margin bands around the label thresholds. The label rule is an AND of
# two half-planes, which no linear model can express exactly; sampling
# outside these bands keeps the classes linearly separable in practice.
_COSINE_BAND = (0.3, 0.7)
_OVERLAP_BAND = (0.1, 0.5)


def synthetic_separable_examples(n: int, seed: int) -> list[LabeledExample]:
    """Seeded dataset whose label is [cosine > 0.5 and lexical_overlap > 0.3].

    Feature values near the two thresholds are rejected during sampling
    (margin bands), keeping the rule learnable by a linear model.
    """
    rng = np.random.default_rng(seed)
    examples: list[LabeledExample] = []
    while len(examples) < n:
        cosine = float(rng.uniform(-1.0, 1.0))
        if _COSINE_BAND[0] < cosine < _COSINE_BAND[1]:
            continue
        overlap = float(rng.uniform(0.0, 1.0))
        if _OVERLAP_BAND[0] < overlap < _OVERLAP_BAND[1]:
            continue
        fv = FeatureVector(
            bm25_norm=float(rng.uniform(0.0, 1.0)),
            cosine=cosine,
            graph_norm=float(rng.uniform(0.0, 1.0)),
            lexical_overlap=overlap,
            path_affinity=float(rng.integers(0, 2)),
            retriever_hits=float(rng.integers(1, 4)) / 3.0,
        )
        label = int(cosine > 0.5 and overlap > 0.3)
        examples.append(
            LabeledExample(
                query=f"synthetic-{len(examples)}",
                item_id=len(examples),
                label=label,
                features=fv,
            )
        )
    return examples


def examples_to_jsonl(examples) -> str:
    lines = []
    for ex in examples:
        record = {
            "query": ex.query,
            "item_id": ex.item_id,
            "label": ex.label,
            "features": {name: getattr(ex.features, name) for name in FEATURE_NAMES},
        }
        lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + "\n" if lines else ""


def examples_from_jsonl(text: str) -> list[LabeledExample]:
    examples = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            fv = FeatureVector(**{name: float(record["features"][name]) for name in FEATURE_NAMES})
            examples.append(
                LabeledExample(
                    query=str(record.get("query", "")),
                    item_id=int(record.get("item_id", -1)),
                    label=int(record["label"]),
                    features=fv,
                )
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"bad labeled example on line {line_no}: {exc}") from exc
    return examples


# -- selection ----------------------------------------------------------


@dataclass(frozen=True)
class ScoredItem:
    item_id: int
    score: float
    tokens: int


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str  # "score_threshold" | "token_budget"
    threshold: float = 0.5
    budget: int = 0

    @classmethod
    def score_threshold(cls, tau: float) -> "SelectionPolicy":
        if not 0.0 <= tau <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {tau}")
        return cls(kind="score_threshold", threshold=tau)

    @classmethod
    def token_budget(cls, budget: int) -> "SelectionPolicy":
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        return cls(kind="token_budget", budget=budget)

    def describe(self) -> str:
        if self.kind == "score_threshold":
            return f"score_threshold(tau={self.threshold})"
        return f"token_budget(budget={self.budget})"


@dataclass(frozen=True)
class RankedSelection:
    """Budget-feasible, relevance-ordered subset chosen for the prompt."""

    items: tuple[tuple[int, float], ...]  # (item_id, relevance_score)
    total_tokens: int
    policy_used: str


def select(scored_items, policy: SelectionPolicy) -> RankedSelection:
    """Select items above a score threshold or greedily within a budget.

    The budget policy walks the score-descending list, skipping any item
    that would exceed the budget and continuing down the list. Output is
    ordered by descending score, ties by ascending item id.
    """
    ordered = sorted(scored_items, key=lambda s: (-s.score, s.item_id))
    chosen: list[ScoredItem] = []
    if policy.kind == "score_threshold":
        chosen = [s for s in ordered if s.score >= policy.threshold]
    elif policy.kind == "token_budget":
        total = 0
        for s in ordered:
            if total + s.tokens <= policy.budget:
                chosen.append(s)
                total += s.tokens
    else:
        raise ValueError(f"unknown selection policy {policy.kind!r}")
    return RankedSelection(
        items=tuple((s.item_id, s.score) for s in chosen),
        total_tokens=sum(s.tokens for s in chosen),
        policy_used=policy.describe(),
    )
