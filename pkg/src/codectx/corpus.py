"""Repository ingestion into an immutable, deterministic corpus index.

A repository snapshot is chunked into fixed line windows (overlapping, so
relevant spans are less likely to be split across chunk boundaries). Each
chunk becomes an addressable context item with a token count; the index
additionally holds an inverted term index for keyword scoring, a lexical
symbol table with definition/reference sites, parameter-count records for
definitions, and one embedding row per item.

A built index never mutates, so any number of readers may query it
concurrently. Ingestion itself is single-threaded: files are processed in
lexicographic path order, which also fixes item ids deterministically.
"""

from __future__ import annotations

import fnmatch
import json
import logging
import os
import struct
from array import array
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels, lexing
from .embedding import EMBED_DIM, embed

log = logging.getLogger(__name__)

INDEX_MAGIC = b"CODECTXI"
INDEX_FORMAT_VERSION = 1
SOURCE_TAG = "local_repo"

# Symbol-site pairs are stored as flat arrays of 32-bit unsigned ints.
assert array("I").itemsize == 4, "unsupported platform: array('I') is not 32-bit"

DEFAULT_EXCLUDE_GLOBS = (
    ".git", ".hg", ".svn", "__pycache__", "node_modules", ".venv", "venv",
    ".tox", ".mypy_cache", "build", "dist", "target",
    "*.pyc", "*.pyo", "*.so", "*.o", "*.a", "*.class", "*.jar",
)

# Token segmentation rule, shared with the compiled kernel: a token is a
# maximal run of alphanumerics/underscore or a single non-whitespace
# punctuation character. Whitespace yields no tokens.
token_count = kernels.token_count


class IngestError(Exception):
    """Fatal ingestion problem (unreadable root, corrupt index file)."""


@dataclass(frozen=True)
class SourceFile:
    """One repository file: repo-relative path, language family, text."""

    path: str
    language_tag: str
    content: str
    byte_len: int


@dataclass(frozen=True)
class ContextItem:
    """An addressable chunk of repository text.

    ``span`` is [start_line, end_line], 1-based inclusive. Ids are dense
    integers assigned in (path, start_line) order and are stable across
    re-indexing of identical input.
    """

    id: int
    path: str
    start_line: int
    end_line: int
    text: str
    kind: str  # code | doc | config
    token_count: int
    source_tag: str = SOURCE_TAG

    @property
    def span(self) -> tuple[int, int]:
        return (self.start_line, self.end_line)

    @property
    def span_len(self) -> int:
        return self.end_line - self.start_line + 1


@dataclass(frozen=True)
class IngestConfig:
    include_globs: tuple[str, ...] = ()
    exclude_globs: tuple[str, ...] = DEFAULT_EXCLUDE_GLOBS
    chunk_window_lines: int = 40
    chunk_stride_lines: int = 30


@dataclass(frozen=True)
class CorpusStats:
    file_count: int
    item_count: int
    skipped_files: int
    read_warnings: int
    avg_doc_word_len: float


def iter_chunk_spans(line_count: int, window: int, stride: int):
    """Yield (start, end) line windows: [1, w], [1+s, w+s], ...

    The final window is clamped to the last line; generation stops at the
    first window that reaches end of file, so a file no longer than the
    window yields exactly one span.
    """
    if window < 1 or stride < 1 or window < stride:
        raise ValueError(
            f"chunk window must be >= stride >= 1, got window={window} stride={stride}"
        )
    if line_count <= 0:
        return
    start = 1
    while True:
        end = min(start + window - 1, line_count)
        yield start, end
        if end >= line_count:
            return
        start += stride


def _split_lines(content: str) -> list[str]:
    if not content:
        return []
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def chunk_file(
    file: SourceFile, chunk_window_lines: int, chunk_stride_lines: int, start_id: int = 0
) -> list[ContextItem]:
    """Chunk one file into overlapping line windows.

    Trailing chunks consisting only of blank lines are dropped; empty
    content yields no chunks. Item ids are assigned sequentially from
    ``start_id`` (the index builder threads a global counter through).
    """
    lines = _split_lines(file.content)
    if not lines:
        return []
    kind = lexing.kind_for_path(file.path)
    spans = list(iter_chunk_spans(len(lines), chunk_window_lines, chunk_stride_lines))
    while spans:
        start, end = spans[-1]
        if any(line and not line.isspace() for line in lines[start - 1 : end]):
            break
        spans.pop()
    items = []
    for offset, (start, end) in enumerate(spans):
        text = "\n".join(lines[start - 1 : end])
        items.append(
            ContextItem(
                id=start_id + offset,
                path=file.path,
                start_line=start,
                end_line=end,
                text=text,
                kind=kind,
                token_count=kernels.token_count(text),
            )
        )
    return items


def extract_symbols(file: SourceFile) -> list[tuple[str, str, int]]:
    """Extract (symbol, site_kind, line) triples from one file.

    site_kind is "def" for identifiers following a definition keyword at
    statement start and "ref" for every other identifier occurrence outside
    strings and comments. Unknown language tags are treated as plain_text
    and yield no symbols.
    """
    return lexing.extract_file_symbols(file.content, file.language_tag)


class CorpusIndex:
    """Immutable repository snapshot with retrieval-ready structures.

    Construct via ``build_index`` / ``ingest_repo`` or ``CorpusIndex.load``.
    Instances are safe for unlimited concurrent readers.
    """

    def __init__(
        self,
        items: list[ContextItem],
        postings: dict[str, tuple[np.ndarray, np.ndarray]],
        doc_word_lens: np.ndarray,
        symbol_defs: dict[str, array],
        symbol_refs: dict[str, array],
        signatures: dict[str, tuple[int | None, ...]],
        embeddings: np.ndarray,
        stats: CorpusStats,
        config: IngestConfig,
    ):
        self.items = items
        self.postings = postings
        self.doc_word_lens = doc_word_lens
        self._symbol_defs = symbol_defs
        self._symbol_refs = symbol_refs
        self.signatures = signatures
        self.embeddings = embeddings
        self.stats = stats
        self.config = config
        self._embeddings64: np.ndarray | None = None

    # -- item access ---------------------------------------------------

    @property
    def item_count(self) -> int:
        return len(self.items)

    def item(self, item_id: int) -> ContextItem:
        return self.items[item_id]

    @property
    def embeddings64(self) -> np.ndarray:
        """Float64 view of the embedding matrix, cached after first use."""
        if self._embeddings64 is None:
            self._embeddings64 = self.embeddings.astype(np.float64)
        return self._embeddings64

    # -- symbol table ----------------------------------------------------

    def has_symbol(self, name: str) -> bool:
        return name in self._symbol_defs or name in self._symbol_refs

    def symbol_defs(self, name: str) -> list[tuple[int, int]]:
        """Definition sites as (item_id, line) pairs; line is the file line."""
        return _pairs(self._symbol_defs.get(name))

    def symbol_refs(self, name: str) -> list[tuple[int, int]]:
        return _pairs(self._symbol_refs.get(name))

    def symbol_names(self) -> list[str]:
        return sorted(set(self._symbol_defs) | set(self._symbol_refs))

    def param_counts(self, name: str) -> tuple[int | None, ...]:
        """Distinct parameter counts recorded for a definition name.

        None entries mean a definition whose arity cannot be checked
        (no parameter list, or variadic markers).
        """
        return self.signatures.get(name, ())

    # -- serialization ---------------------------------------------------

    def serialize(self) -> bytes:
        out = bytearray()
        out += INDEX_MAGIC
        out += struct.pack("<I", INDEX_FORMAT_VERSION)

        meta = {
            "format": "codectx-index",
            "version": INDEX_FORMAT_VERSION,
            "embed_dim": EMBED_DIM,
            "source_tag": SOURCE_TAG,
            "chunk_window_lines": self.config.chunk_window_lines,
            "chunk_stride_lines": self.config.chunk_stride_lines,
            "include_globs": list(self.config.include_globs),
            "exclude_globs": list(self.config.exclude_globs),
            "file_count": self.stats.file_count,
            "item_count": self.stats.item_count,
            "skipped_files": self.stats.skipped_files,
            "read_warnings": self.stats.read_warnings,
            "avg_doc_word_len": self.stats.avg_doc_word_len,
        }
        _add_section(out, "meta", json.dumps(meta, sort_keys=True).encode("utf-8"))

        rows = [
            [it.path, it.start_line, it.end_line, it.kind, it.token_count, it.text]
            for it in self.items
        ]
        _add_section(
            out, "items", json.dumps(rows, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
        )

        _add_section(
            out,
            "doclens",
            struct.pack("<I", len(self.doc_word_lens))
            + self.doc_word_lens.astype("<u4").tobytes(),
        )

        post = bytearray()
        post += struct.pack("<I", len(self.postings))
        for term in sorted(self.postings):
            ids, tfs = self.postings[term]
            raw = term.encode("utf-8")
            post += struct.pack("<H", len(raw))
            post += raw
            post += struct.pack("<I", len(ids))
            post += ids.astype("<u4").tobytes()
            post += tfs.astype("<u4").tobytes()
        _add_section(out, "postings", bytes(post))

        sym = bytearray()
        names = sorted(set(self._symbol_defs) | set(self._symbol_refs))
        sym += struct.pack("<I", len(names))
        for name in names:
            raw = name.encode("utf-8")
            sym += struct.pack("<H", len(raw))
            sym += raw
            defs = self._symbol_defs.get(name)
            refs = self._symbol_refs.get(name)
            sym += struct.pack("<I", len(defs) // 2 if defs else 0)
            if defs:
                sym += defs.tobytes()
            sym += struct.pack("<I", len(refs) // 2 if refs else 0)
            if refs:
                sym += refs.tobytes()
            counts = self.signatures.get(name, ())
            sym += struct.pack("<H", len(counts))
            for count in counts:
                sym += struct.pack("<i", -1 if count is None else count)
        _add_section(out, "symbols", bytes(sym))

        emb = struct.pack("<II", self.embeddings.shape[0], EMBED_DIM)
        emb += self.embeddings.astype("<f4").tobytes()
        _add_section(out, "embeddings", emb)

        return bytes(out)

    def save(self, path: str) -> None:
        """Serialize to ``path`` atomically (write temp file, then rename)."""
        data = self.serialize()
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "CorpusIndex":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise IngestError(f"cannot read index file {path!r}: {exc}") from exc
        return cls.from_bytes(data)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CorpusIndex":
        if data[:8] != INDEX_MAGIC:
            raise IngestError("not a codectx index file")
        (version,) = struct.unpack_from("<I", data, 8)
        if version != INDEX_FORMAT_VERSION:
            raise IngestError(f"unsupported index format version {version}")
        sections: dict[str, bytes] = {}
        pos = 12
        while pos < len(data):
            (name_len,) = struct.unpack_from("<B", data, pos)
            pos += 1
            name = data[pos : pos + name_len].decode("ascii")
            pos += name_len
            (payload_len,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            sections[name] = data[pos : pos + payload_len]
            pos += payload_len

        meta = json.loads(sections["meta"])
        config = IngestConfig(
            include_globs=tuple(meta["include_globs"]),
            exclude_globs=tuple(meta["exclude_globs"]),
            chunk_window_lines=meta["chunk_window_lines"],
            chunk_stride_lines=meta["chunk_stride_lines"],
        )
        stats = CorpusStats(
            file_count=meta["file_count"],
            item_count=meta["item_count"],
            skipped_files=meta["skipped_files"],
            read_warnings=meta["read_warnings"],
            avg_doc_word_len=meta["avg_doc_word_len"],
        )

        items = [
            ContextItem(
                id=i,
                path=row[0],
                start_line=row[1],
                end_line=row[2],
                kind=row[3],
                token_count=row[4],
                text=row[5],
                source_tag=meta["source_tag"],
            )
            for i, row in enumerate(json.loads(sections["items"]))
        ]

        buf = sections["doclens"]
        (n,) = struct.unpack_from("<I", buf, 0)
        doc_word_lens = np.frombuffer(buf, dtype="<u4", count=n, offset=4).copy()

        postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        buf = sections["postings"]
        (n_terms,) = struct.unpack_from("<I", buf, 0)
        pos = 4
        for _ in range(n_terms):
            (term_len,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            term = buf[pos : pos + term_len].decode("utf-8")
            pos += term_len
            (count,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            ids = np.frombuffer(buf, dtype="<u4", count=count, offset=pos).copy()
            pos += 4 * count
            tfs = np.frombuffer(buf, dtype="<u4", count=count, offset=pos).copy()
            pos += 4 * count
            postings[term] = (ids, tfs)

        symbol_defs: dict[str, array] = {}
        symbol_refs: dict[str, array] = {}
        signatures: dict[str, tuple[int | None, ...]] = {}
        buf = sections["symbols"]
        (n_names,) = struct.unpack_from("<I", buf, 0)
        pos = 4
        for _ in range(n_names):
            (name_len,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (n_defs,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            if n_defs:
                arr = array("I")
                arr.frombytes(buf[pos : pos + 8 * n_defs])
                symbol_defs[name] = arr
                pos += 8 * n_defs
            (n_refs,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            if n_refs:
                arr = array("I")
                arr.frombytes(buf[pos : pos + 8 * n_refs])
                symbol_refs[name] = arr
                pos += 8 * n_refs
            (n_sigs,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            if n_sigs:
                counts = struct.unpack_from(f"<{n_sigs}i", buf, pos)
                pos += 4 * n_sigs
                signatures[name] = tuple(None if c == -1 else c for c in counts)

        buf = sections["embeddings"]
        n_rows, dim = struct.unpack_from("<II", buf, 0)
        embeddings = (
            np.frombuffer(buf, dtype="<f4", count=n_rows * dim, offset=8)
            .reshape(n_rows, dim)
            .copy()
        )

        return cls(
            items=items,
            postings=postings,
            doc_word_lens=doc_word_lens,
            symbol_defs=symbol_defs,
            symbol_refs=symbol_refs,
            signatures=signatures,
            embeddings=embeddings,
            stats=stats,
            config=config,
        )


def _pairs(flat: array | None) -> list[tuple[int, int]]:
    if not flat:
        return []
    it = iter(flat)
    return list(zip(it, it))


def _add_section(out: bytearray, name: str, payload: bytes) -> None:
    raw = name.encode("ascii")
    out += struct.pack("<B", len(raw))
    out += raw
    out += struct.pack("<Q", len(payload))
    out += payload


def build_index(
    files: list[SourceFile],
    config: IngestConfig | None = None,
    skipped_files: int = 0,
    read_warnings: int = 0,
) -> CorpusIndex:
    """Build a CorpusIndex from in-memory source files.

    Files are processed in lexicographic path order regardless of input
    order, so the result is a pure function of the file contents.
    """
    config = config or IngestConfig()
    ordered = sorted(files, key=lambda f: f.path)
    seen_paths: set[str] = set()
    for f in ordered:
        if f.path in seen_paths:
            raise IngestError(f"duplicate path in snapshot: {f.path!r}")
        seen_paths.add(f.path)

    items: list[ContextItem] = []
    postings: dict[str, tuple[array, array]] = {}
    doc_word_lens = array("I")
    symbol_defs: dict[str, array] = {}
    symbol_refs: dict[str, array] = {}
    raw_signatures: dict[str, set[int | None]] = {}
    emb_rows: list[np.ndarray] = []
    total_words = 0

    for f in ordered:
        chunks = chunk_file(
            f, config.chunk_window_lines, config.chunk_stride_lines, start_id=len(items)
        )
        spans = [(it.start_line, it.end_line, it.id) for it in chunks]

        for item in chunks:
            terms = lexing.TERM_RE.findall(item.text.lower())
            doc_word_lens.append(len(terms))
            total_words += len(terms)
            for term, tf in Counter(terms).items():
                entry = postings.get(term)
                if entry is None:
                    entry = postings[term] = (array("I"), array("I"))
                entry[0].append(item.id)
                entry[1].append(tf)
            emb_rows.append(embed(item.text).astype(np.float32))
            items.append(item)

        for name, site_kind, line in lexing.extract_file_symbols(f.content, f.language_tag):
            table = symbol_defs if site_kind == "def" else symbol_refs
            for start, end, item_id in spans:
                if start <= line <= end:
                    entry = table.get(name)
                    if entry is None:
                        entry = table[name] = array("I")
                    entry.append(item_id)
                    entry.append(line)

        for name, entries in lexing.extract_signatures(f.content, f.language_tag).items():
            bucket = raw_signatures.setdefault(name, set())
            for _line, count in entries:
                bucket.add(count)

    signatures = {
        name: tuple(sorted((c for c in counts if c is not None)))
        + ((None,) if None in counts else ())
        for name, counts in raw_signatures.items()
    }

    np_postings = {
        term: (np.frombuffer(ids, dtype=np.uint32), np.frombuffer(tfs, dtype=np.uint32))
        for term, (ids, tfs) in postings.items()
    }
    embeddings = (
        np.stack(emb_rows) if emb_rows else np.zeros((0, EMBED_DIM), dtype=np.float32)
    )
    stats = CorpusStats(
        file_count=len(ordered),
        item_count=len(items),
        skipped_files=skipped_files,
        read_warnings=read_warnings,
        avg_doc_word_len=(total_words / len(items)) if items else 0.0,
    )
    return CorpusIndex(
        items=items,
        postings=np_postings,
        doc_word_lens=np.frombuffer(doc_word_lens, dtype=np.uint32),
        symbol_defs=symbol_defs,
        symbol_refs=symbol_refs,
        signatures=signatures,
        embeddings=embeddings,
        stats=stats,
        config=config,
    )


def _matches_any(rel_path: str, name: str, globs: tuple[str, ...]) -> bool:
    return any(
        fnmatch.fnmatch(rel_path, pattern) or fnmatch.fnmatch(name, pattern)
        for pattern in globs
    )


def ingest_repo(root_path: str, config: IngestConfig | None = None) -> CorpusIndex:
    """Ingest a repository directory from disk.

    Binary files (NUL byte), invalid UTF-8, and glob-excluded paths are
    skipped and counted; unreadable individual files are skipped with a
    warning count. An unreadable root is fatal.
    """
    config = config or IngestConfig()
    if not os.path.isdir(root_path):
        raise IngestError(f"root path is not a readable directory: {root_path!r}")

    walk_errors: list[OSError] = []
    rel_paths: list[str] = []
    for dirpath, dirnames, filenames in os.walk(root_path, onerror=walk_errors.append):
        rel_dir = os.path.relpath(dirpath, root_path).replace(os.sep, "/")
        dirnames[:] = sorted(
            d
            for d in dirnames
            if not _matches_any(
                d if rel_dir == "." else f"{rel_dir}/{d}", d, config.exclude_globs
            )
        )
        for filename in sorted(filenames):
            rel = filename if rel_dir == "." else f"{rel_dir}/{filename}"
            if _matches_any(rel, filename, config.exclude_globs):
                continue
            if config.include_globs and not _matches_any(rel, filename, config.include_globs):
                continue
            rel_paths.append(rel)
    if walk_errors and not rel_paths:
        raise IngestError(f"cannot walk root {root_path!r}: {walk_errors[0]}")

    read_warnings = len(walk_errors)
    skipped = 0
    files: list[SourceFile] = []
    for rel in sorted(rel_paths):
        full = os.path.join(root_path, rel.replace("/", os.sep))
        try:
            with open(full, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            log.warning("skipping unreadable file %s: %s", rel, exc)
            read_warnings += 1
            continue
        if b"\x00" in raw:
            skipped += 1
            continue
        try:
            content = raw.decode("utf-8")
        except UnicodeDecodeError:
            skipped += 1
            continue
        content = content.replace("\r\n", "\n").replace("\r", "\n")
        files.append(
            SourceFile(
                path=rel,
                language_tag=lexing.language_for_path(rel),
                content=content,
                byte_len=len(raw),
            )
        )

    return build_index(
        files, config, skipped_files=skipped, read_warnings=read_warnings
    )
