"""Offline evaluation of retrieval and ranking against labeled queries.

Labels are sets of relevant line spans per query. A span counts as
recalled at N when any of the top-N items overlaps it by at least half of
the shorter span's length — tolerant of chunk-boundary misalignment
without rewarding giant chunks.

Because real labeled data of this kind needs expert annotators, the
module also ships a synthetic dataset generator that plants known-relevant
snippets into generated filler files: lexically findable plants (rare
query identifiers verbatim in the snippet) and paraphrase plants (related
word forms from a fixed synonym table, zero tokens shared with the
query). The planting gives exact ground truth, so retriever
complementarity claims can be tested by construction.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .corpus import ContextItem, CorpusIndex, SourceFile
from .ranking import (
    DEFAULT_MODEL,
    RankerModel,
    ScoredItem,
    SelectionPolicy,
    featurize,
    score,
    select,
)
from .retrieval import RETRIEVER_TAGS, Candidate, Query, complementarity, retrieve

RECALL_NS = (5, 10, 25, 50)
PRECISION_KS = (5, 10)
COMPLEMENTARITY_N = 50


class DatasetError(Exception):
    """Invalid evaluation dataset; ``errors`` lists the offending queries."""

    def __init__(self, message: str, errors: list[str] | None = None):
        super().__init__(message)
        self.errors = errors or []


@dataclass(frozen=True)
class LabeledSpan:
    path: str
    start_line: int
    end_line: int


@dataclass(frozen=True)
class EvalQuery:
    id: str
    text: str
    relevant_spans: tuple[LabeledSpan, ...]


def span_match(item: ContextItem, span: LabeledSpan) -> bool:
    """True when paths match and line overlap covers at least half of the
    shorter of the two spans."""
    if item.path != span.path:
        return False
    overlap = min(item.end_line, span.end_line) - max(item.start_line, span.start_line) + 1
    if overlap <= 0:
        return False
    shorter = min(item.span_len, span.end_line - span.start_line + 1)
    return overlap / shorter >= 0.5


# -- dataset io ----------------------------------------------------------


def queries_to_jsonl(queries) -> str:
    lines = []
    for q in queries:
        record = {
            "id": q.id,
            "text": q.text,
            "relevant_spans": [
                {"path": s.path, "start_line": s.start_line, "end_line": s.end_line}
                for s in q.relevant_spans
            ],
        }
        lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + "\n" if lines else ""


def queries_from_jsonl(text: str) -> list[EvalQuery]:
    queries = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            spans = tuple(
                LabeledSpan(
                    path=str(s["path"]),
                    start_line=int(s["start_line"]),
                    end_line=int(s["end_line"]),
                )
                for s in record["relevant_spans"]
            )
            queries.append(
                EvalQuery(id=str(record["id"]), text=str(record["text"]), relevant_spans=spans)
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise DatasetError(f"bad eval query on line {line_no}: {exc}") from exc
    return queries


def validate_dataset(index: CorpusIndex, queries) -> list[str]:
    """Return one error string per invalid query (empty list when valid)."""
    known_paths = {item.path for item in index.items}
    errors = []
    for q in queries:
        if not q.relevant_spans:
            errors.append(f"{q.id}: no relevant spans")
            continue
        for span in q.relevant_spans:
            if span.start_line > span.end_line or span.start_line < 1:
                errors.append(f"{q.id}: invalid span [{span.start_line}, {span.end_line}]")
            elif span.path not in known_paths:
                errors.append(f"{q.id}: unknown path {span.path!r}")
    return errors


# -- metrics -------------------------------------------------------------


def _recall_at(items: list[ContextItem], spans, n: int) -> float:
    top = items[:n]
    hit = sum(1 for span in spans if any(span_match(it, span) for it in top))
    return hit / len(spans)


def _precision_at(items: list[ContextItem], spans, k: int) -> float:
    top = items[:k]
    relevant = sum(1 for it in top if any(span_match(it, span) for span in spans))
    return relevant / k


def _mrr(items: list[ContextItem], spans) -> float:
    for rank, it in enumerate(items, start=1):
        if any(span_match(it, span) for span in spans):
            return 1.0 / rank
    return 0.0


def _resolve(index: CorpusIndex, cands: list[Candidate]) -> list[ContextItem]:
    return [index.item(c.item_id) for c in cands]


@dataclass(frozen=True)
class EvalPipelineConfig:
    top_n_per_retriever: int = 50
    model: RankerModel = DEFAULT_MODEL
    policy: SelectionPolicy = field(
        default_factory=lambda: SelectionPolicy.score_threshold(0.5)
    )


def evaluate(index: CorpusIndex, queries, pipeline: EvalPipelineConfig | None = None) -> dict:
    """Run retrievers, fusion, and the rank+select pipeline per query.

    Returns a deterministic report dict: per-query and aggregate recall@N,
    precision@k and MRR for the fused list and each retriever, the
    candidate-union recall, the pairwise retriever complementarity matrix
    at n=50, and an echo of the pipeline configuration. Raises
    DatasetError when any query references an unknown path.
    """
    pipeline = pipeline or EvalPipelineConfig()
    queries = list(queries)
    errors = validate_dataset(index, queries)
    if errors:
        raise DatasetError(f"{len(errors)} invalid queries", errors)

    legs = RETRIEVER_TAGS + ("fused",)
    per_query_reports = []
    for q in queries:
        pool = retrieve(
            index, Query(text=q.text, top_n_per_retriever=pipeline.top_n_per_retriever)
        )
        lists = dict(pool.per_retriever)
        lists["fused"] = pool.fused
        spans = q.relevant_spans

        legs_report: dict[str, dict] = {}
        for leg in legs:
            items = _resolve(index, lists[leg])
            legs_report[leg] = {
                "recall": {str(n): _recall_at(items, spans, n) for n in RECALL_NS},
                "precision": {str(k): _precision_at(items, spans, k) for k in PRECISION_KS},
                "mrr": _mrr(items, spans),
            }

        union_ids = sorted(pool.union_ids())
        union_items = [index.item(i) for i in union_ids]
        union_recall = (
            sum(1 for s in spans if any(span_match(it, s) for it in union_items)) / len(spans)
        )

        comp = {}
        for i, a in enumerate(RETRIEVER_TAGS):
            for b in RETRIEVER_TAGS[i + 1 :]:
                comp[f"{a}|{b}"] = complementarity(
                    pool.per_retriever[a], pool.per_retriever[b], COMPLEMENTARITY_N
                )

        scored = []
        for cand in pool.fused:
            item = index.item(cand.item_id)
            fv = featurize(pool.query, item, pool)
            scored.append(
                ScoredItem(item_id=item.id, score=score(pipeline.model, fv), tokens=item.token_count)
            )
        selection = select(scored, pipeline.policy)
        selected_items = [index.item(item_id) for item_id, _ in selection.items]
        sel_precision = (
            sum(1 for it in selected_items if any(span_match(it, s) for s in spans))
            / len(selected_items)
            if selected_items
            else 0.0
        )

        per_query_reports.append(
            {
                "id": q.id,
                "legs": legs_report,
                "union_recall": union_recall,
                "complementarity": comp,
                "selection": {
                    "size": len(selection.items),
                    "total_tokens": selection.total_tokens,
                    "precision": sel_precision,
                },
            }
        )

    def mean(values) -> float:
        values = list(values)
        return sum(values) / len(values) if values else 0.0

    aggregate: dict = {"legs": {}}
    for leg in legs:
        aggregate["legs"][leg] = {
            "recall": {
                str(n): mean(r["legs"][leg]["recall"][str(n)] for r in per_query_reports)
                for n in RECALL_NS
            },
            "precision": {
                str(k): mean(r["legs"][leg]["precision"][str(k)] for r in per_query_reports)
                for k in PRECISION_KS
            },
            "mrr": mean(r["legs"][leg]["mrr"] for r in per_query_reports),
        }
    aggregate["union_recall"] = mean(r["union_recall"] for r in per_query_reports)

    matrix = [[0.0] * len(RETRIEVER_TAGS) for _ in RETRIEVER_TAGS]
    for i, a in enumerate(RETRIEVER_TAGS):
        for j, b in enumerate(RETRIEVER_TAGS):
            if i < j:
                value = mean(r["complementarity"][f"{a}|{b}"] for r in per_query_reports)
                matrix[i][j] = value
                matrix[j][i] = value
    aggregate["complementarity_matrix"] = {
        "retrievers": list(RETRIEVER_TAGS),
        "n": COMPLEMENTARITY_N,
        "matrix": matrix,
    }
    aggregate["selection_precision"] = mean(
        r["selection"]["precision"] for r in per_query_reports
    )

    return {
        "config": {
            "top_n_per_retriever": pipeline.top_n_per_retriever,
            "selection_policy": pipeline.policy.describe(),
            "model_weights": list(pipeline.model.weights),
            "model_bias": pipeline.model.bias,
            "recall_ns": list(RECALL_NS),
            "precision_ks": list(PRECISION_KS),
        },
        "query_count": len(queries),
        "aggregate": aggregate,
        "queries": per_query_reports,
    }


def render_report_table(report: dict) -> str:
    """Human-readable summary table for stdout."""
    lines = [
        f"queries: {report['query_count']}",
        f"{'leg':<10}" + "".join(f"R@{n:<6}" for n in RECALL_NS)
        + "".join(f"P@{k:<6}" for k in PRECISION_KS) + "MRR",
    ]
    agg = report["aggregate"]
    for leg, stats in agg["legs"].items():
        row = f"{leg:<10}"
        for n in RECALL_NS:
            row += f"{stats['recall'][str(n)]:<8.3f}"
        for k in PRECISION_KS:
            row += f"{stats['precision'][str(k)]:<8.3f}"
        row += f"{stats['mrr']:.3f}"
        lines.append(row)
    lines.append(f"union recall: {agg['union_recall']:.3f}")
    comp = agg["complementarity_matrix"]
    lines.append(f"complementarity @ n={comp['n']}:")
    header = "          " + "".join(f"{r:<10}" for r in comp["retrievers"])
    lines.append(header)
    for name, row in zip(comp["retrievers"], comp["matrix"]):
        lines.append(f"{name:<10}" + "".join(f"{v:<10.3f}" for v in row))
    lines.append(f"selection precision: {agg['selection_precision']:.3f}")
    return "\n".join(lines)


# -- synthetic dataset generator ------------------------------------------

# Common "glue" vocabulary: appears throughout filler files and in lexical
# query templates, so glue terms carry almost no keyword signal.
GLUE_WORDS = (
    "request", "handler", "pipeline", "process", "config", "buffer",
    "stream", "cache", "worker", "queue", "batch", "record", "session",
    "client", "server", "token", "index", "parse", "merge", "flush",
)

# Morphological variants of the glue words. Hot filler files consist of
# these, sharing character structure but no exact token with lexical
# queries: the embedding retriever sees them, the keyword retriever never
# returns them.
HOT_VARIANTS = {
    "request": "requests", "handler": "handlers", "pipeline": "pipelines",
    "process": "processing", "config": "configs", "buffer": "buffered",
    "stream": "streams", "cache": "cached", "worker": "workers",
    "queue": "queues", "batch": "batches", "record": "records",
    "session": "sessions", "client": "clients", "server": "servers",
    "token": "tokens", "index": "indexes", "parse": "parser",
    "merge": "merged", "flush": "flushed",
}

# Fixed synonym table for paraphrase plants: related word forms that share
# no exact token (so keyword search cannot bridge them) but are close in
# sub-word character structure (so the embedding retriever can).
SYNONYM_TABLE = (
    ("serialize", "serialization"), ("tokenize", "tokenizer"),
    ("normalize", "normalization"), ("compress", "compression"),
    ("encrypt", "encryption"), ("validate", "validation"),
    ("authenticate", "authentication"), ("initialize", "initializer"),
    ("aggregate", "aggregation"), ("deduplicate", "deduplication"),
    ("paginate", "pagination"), ("interpolate", "interpolation"),
    ("synchronize", "synchronization"), ("annotate", "annotation"),
    ("instrument", "instrumentation"), ("orchestrate", "orchestration"),
    ("quantize", "quantization"), ("vectorize", "vectorization"),
    ("memoize", "memoization"), ("sanitize", "sanitizer"),
    ("calibrate", "calibration"), ("replicate", "replication"),
    ("truncate", "truncation"), ("obfuscate", "obfuscation"),
)

# Words allowed in paraphrase queries but planted nowhere in the corpus;
# keyword recall zero on paraphrase queries is then guaranteed, not lucky.
_PARA_QUERY_WORDS = ("how", "do", "we", "then", "turn", "raw", "output", "into", "final", "form")

_FILLER_SYLLABLES = ("vor", "mek", "tal", "sur", "nim", "pel", "dra", "gos", "lun", "bri")
_RARE_SYLLABLES = ("zq", "xo", "vy", "kw", "ju", "qa", "fi", "bl", "gr", "pt")


@dataclass(frozen=True)
class SyntheticConfig:
    n_lexical: int = 50
    n_paraphrase: int = 50
    n_filler_files: int = 60
    n_hot_files: int = 80
    filler_lines: int = 90
    hot_lines: int = 12


@dataclass(frozen=True)
class SyntheticDataset:
    files: dict[str, str]  # path -> content
    queries: tuple[EvalQuery, ...]

    def source_files(self) -> list[SourceFile]:
        from .lexing import language_for_path

        return [
            SourceFile(
                path=path,
                language_tag=language_for_path(path),
                content=content,
                byte_len=len(content.encode("utf-8")),
            )
            for path, content in sorted(self.files.items())
        ]


def _filler_name(rng: random.Random) -> str:
    return "".join(rng.choice(_FILLER_SYLLABLES) for _ in range(3))


def _rare_name(rng: random.Random, taken: set[str]) -> str:
    while True:
        name = (
            "".join(rng.choice(_RARE_SYLLABLES) for _ in range(3))
            + "_"
            + "".join(rng.choice(_RARE_SYLLABLES) for _ in range(3))
        )
        if name not in taken:
            taken.add(name)
            return name


def _filler_lines(rng: random.Random, count: int) -> list[str]:
    lines = []
    for _ in range(count):
        kind = rng.randrange(4)
        g = [rng.choice(GLUE_WORDS) for _ in range(5)]
        fid = _filler_name(rng)
        fid2 = _filler_name(rng)
        if kind == 0:
            lines.append(f"# where the {g[0]} {g[1]} is handled in the {g[2]} {g[3]}")
        elif kind == 1:
            lines.append(f"{fid} = {fid2}({g[0]}, {g[1]})")
        elif kind == 2:
            lines.append(f"def {fid}({g[0]}, {g[1]}):")
        else:
            lines.append(f"    return {fid}({g[0]}, {g[2]}, {g[4]})")
    return lines


def generate_synthetic_dataset(
    seed: int, config: SyntheticConfig | None = None
) -> SyntheticDataset:
    """Generate a corpus with planted relevant snippets and labeled queries.

    Byte-identical output for a fixed seed. Lexical plants guarantee
    keyword recall on their queries (the rare identifier occurs nowhere
    else); paraphrase plants share zero tokens with their queries, which
    guarantees keyword recall zero there.
    """
    config = config or SyntheticConfig()
    rng = random.Random(seed)
    files: dict[str, str] = {}
    queries: list[EvalQuery] = []
    taken_rare: set[str] = set()

    for i in range(config.n_filler_files):
        files[f"src/core/filler_{i:03d}.py"] = (
            "\n".join(_filler_lines(rng, config.filler_lines)) + "\n"
        )

    variants = list(HOT_VARIANTS.values())
    for i in range(config.n_hot_files):
        lines = [
            " ".join(rng.choice(variants) for _ in range(7))
            for _ in range(config.hot_lines)
        ]
        files[f"docs/topic_{i:03d}.md"] = "\n".join(lines) + "\n"

    for i in range(config.n_lexical):
        rare = _rare_name(rng, taken_rare)
        g = rng.sample(GLUE_WORDS, 5)
        fids = [_filler_name(rng) for _ in range(4)]
        head = _filler_lines(rng, 4)
        snippet = [
            f"{rare} = {fids[0]}({g[0]}, {g[1]})",
            f"{fids[1]} = {fids[2]}({g[2]})",
            f"{fids[3]}.append({fids[1]})",
            f"    return {fids[3]}",
        ]
        tail = _filler_lines(rng, config.filler_lines - 8)
        path = f"src/feat/lex_{i:03d}.py"
        files[path] = "\n".join(head + snippet + tail) + "\n"
        queries.append(
            EvalQuery(
                id=f"lex-{i:03d}",
                text=f"where is {rare} handled in the {g[2]} {g[3]} {g[4]}",
                relevant_spans=(LabeledSpan(path=path, start_line=5, end_line=8),),
            )
        )

    for i in range(config.n_paraphrase):
        pairs = rng.sample(SYNONYM_TABLE, 3)
        a_terms = [a for a, _b in pairs]
        b_terms = [b for _a, b in pairs]
        pid = _filler_name(rng)
        body = [
            f"def {b_terms[0]}_{b_terms[1]}_step(payload):",
            f"    payload = {b_terms[0]}(payload)",
            f"    payload = {b_terms[1]}(payload)",
            f"    result = {b_terms[2]}(payload, {pid})",
            "    return result",
            "",
            f"{pid} = None",
        ]
        path = f"src/para/para_{i:03d}.py"
        files[path] = "\n".join(body) + "\n"
        queries.append(
            EvalQuery(
                id=f"par-{i:03d}",
                text=(
                    f"how do we {a_terms[0]} and {a_terms[1]} the raw output "
                    f"then {a_terms[2]} into final form"
                ),
                relevant_spans=(LabeledSpan(path=path, start_line=1, end_line=5),),
            )
        )

    # Planted guarantees hold only if the vocabularies stayed disjoint,
    # measured with the same tokenization the keyword retriever uses.
    from .lexing import TERM_RE

    for q in queries:
        if q.id.startswith("par-"):
            qtokens = set(TERM_RE.findall(q.text.lower()))
            content_tokens = {
                tok
                for span in q.relevant_spans
                for tok in TERM_RE.findall(files[span.path].lower())
            }
            shared = qtokens & content_tokens
            if shared:
                raise AssertionError(f"paraphrase plant shares tokens with query: {shared}")

    queries.sort(key=lambda q: q.id)
    return SyntheticDataset(files=dict(sorted(files.items())), queries=tuple(queries))


def write_synthetic_dataset(dataset: SyntheticDataset, out_dir: str) -> tuple[str, str]:
    """Write corpus files under ``out_dir``/repo and the queries JSONL.

    Returns (repo_root, dataset_path).
    """
    import os

    repo_root = os.path.join(out_dir, "repo")
    for path, content in sorted(dataset.files.items()):
        full = os.path.join(repo_root, path.replace("/", os.sep))
        os.makedirs(os.path.dirname(full), exist_ok=True)
        with open(full, "w", encoding="utf-8") as fh:
            fh.write(content)
    dataset_path = os.path.join(out_dir, "queries.jsonl")
    with open(dataset_path, "w", encoding="utf-8") as fh:
        fh.write(queries_to_jsonl(dataset.queries))
    return repo_root, dataset_path
