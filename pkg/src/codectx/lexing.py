"""Language-family lexing shared by the corpus indexer and the guardrails.

Everything here is deliberately lexical: string/comment stripping, token and
identifier extraction, definition-keyword detection, and parameter counting.
No grammar is parsed; the goal is a cheap, deterministic approximation that
works across the three language families (c_like, python_like, plain_text).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

LANGUAGE_TAGS = ("c_like", "python_like", "plain_text")

# Full segmentation: word runs plus single punctuation characters.
TOKEN_RE = re.compile(r"\w+|[^\w\s]")
# Word terms only (inverted-index vocabulary, lowercased by callers).
TERM_RE = re.compile(r"\w+")
# ASCII identifiers as they appear in source code.
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

_PY_EXTENSIONS = {".py", ".pyi", ".pyw", ".rb", ".rake"}
_C_EXTENSIONS = {
    ".c", ".h", ".cc", ".hh", ".cpp", ".hpp", ".cxx", ".hxx",
    ".js", ".jsx", ".mjs", ".cjs", ".ts", ".tsx",
    ".java", ".go", ".rs", ".cs", ".kt", ".kts", ".swift", ".scala",
    ".m", ".mm", ".php",
}
_DOC_EXTENSIONS = {".md", ".markdown", ".rst", ".txt", ".adoc"}
_CONFIG_EXTENSIONS = {
    ".json", ".yaml", ".yml", ".toml", ".ini", ".cfg", ".conf",
    ".properties", ".env", ".lock",
}
_CONFIG_BASENAMES = {
    "makefile", "dockerfile", "gemfile", ".gitignore", ".gitattributes",
    ".editorconfig", ".dockerignore",
}

PYTHON_KEYWORDS = frozenset(
    """
    False None True and as assert async await break class continue def del
    elif else except finally for from global if import in is lambda nonlocal
    not or pass raise return try while with yield
    begin do end elsif ensure module next nil redo rescue retry then undef
    unless until when
    self cls
    """.split()
)

C_KEYWORDS = frozenset(
    """
    auto break case catch char class const constexpr continue default delete
    do double else enum explicit export extern final finally float for friend
    goto if inline int interface long mutable namespace new noexcept null
    nullptr operator private protected public register return short signed
    sizeof static struct switch template this throw throws try typedef
    typeid typename union unsigned using virtual void volatile while
    abstract boolean byte extends implements import instanceof native package
    strictfp super synchronized transient var let function of in typeof
    undefined true false await async yield delete debugger with
    fn impl trait mut pub crate mod use match loop move ref where dyn
    func chan defer go map range select type fallthrough package
    """.split()
)

RESERVED = {"python_like": PYTHON_KEYWORDS, "c_like": C_KEYWORDS}

DEF_KEYWORDS = {
    "python_like": frozenset({"def", "class", "module"}),
    "c_like": frozenset(
        {"function", "fn", "func", "class", "struct", "enum", "union",
         "interface", "trait", "namespace"}
    ),
}

# Leading tokens skipped before looking for a definition keyword.
DEF_MODIFIERS = {
    "python_like": frozenset({"async"}),
    "c_like": frozenset(
        {"export", "default", "public", "private", "protected", "static",
         "abstract", "final", "async", "extern", "inline", "unsafe", "pub",
         "const"}
    ),
}

MIN_SYMBOL_LEN = 2

# String/comment scanners. Alternation order matters: longer string forms
# first so that e.g. ''' is not consumed as three '-strings, and strings
# before comments so a '#' or '//' inside a string is not a comment.
_PY_LEX = re.compile(
    r"('''(?:\\.|[^\\])*?(?:'''|\Z))"
    r'|("""(?:\\.|[^\\])*?(?:"""|\Z))'
    r"|('(?:\\.|[^\\'\n])*(?:'|\n|\Z))"
    r'|("(?:\\.|[^\\"\n])*(?:"|\n|\Z))'
    r"|(\#[^\n]*)",
    re.DOTALL,
)
_C_LEX = re.compile(
    r"(/\*.*?(?:\*/|\Z))"
    r"|(//[^\n]*)"
    r"|(`(?:\\.|[^\\`])*(?:`|\Z))"
    r"|('(?:\\.|[^\\'\n])*(?:'|\n|\Z))"
    r'|("(?:\\.|[^\\"\n])*(?:"|\n|\Z))',
    re.DOTALL,
)

_OPENERS = "([{"
_CLOSERS = ")]}"
_MATCHING = {")": "(", "]": "[", "}": "{"}


def language_for_path(path: str) -> str:
    ext = _extension(path)
    if ext in _PY_EXTENSIONS:
        return "python_like"
    if ext in _C_EXTENSIONS:
        return "c_like"
    return "plain_text"


def kind_for_path(path: str) -> str:
    """Classify a file as code, doc, or config by extension allowlists."""
    ext = _extension(path)
    if ext in _PY_EXTENSIONS or ext in _C_EXTENSIONS:
        return "code"
    base = path.rsplit("/", 1)[-1].lower()
    if ext in _CONFIG_EXTENSIONS or base in _CONFIG_BASENAMES:
        return "config"
    return "doc"


def _extension(path: str) -> str:
    base = path.rsplit("/", 1)[-1]
    dot = base.rfind(".")
    return base[dot:].lower() if dot > 0 else ""


@dataclass(frozen=True)
class ScanResult:
    """Source text with strings/comments blanked, plus lexing findings."""

    text: str
    findings: tuple[tuple[str, int], ...]  # (message, 1-based line)


def _blank(match_text: str) -> str:
    if "\n" not in match_text:
        return " " * len(match_text)
    return "\n".join(" " * len(part) for part in match_text.split("\n"))


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _escaped(s: str, pos: int) -> bool:
    """True when the character at ``pos`` is preceded by an odd backslash run."""
    count = 0
    i = pos - 1
    while i >= 0 and s[i] == "\\":
        count += 1
        i -= 1
    return count % 2 == 1


def _lex_finding(s: str) -> str | None:
    """Classify one lexer match as unterminated (message) or fine (None)."""
    if s.startswith("'''") or s.startswith('"""'):
        quote = s[:3]
        if len(s) >= 6 and s.endswith(quote) and not _escaped(s, len(s) - 3):
            return None
        return "unterminated triple-quoted string"
    if s.startswith("/*"):
        if len(s) >= 4 and s.endswith("*/"):
            return None
        return "unterminated block comment"
    if s.startswith("//") or s.startswith("#"):
        return None
    quote = s[0]  # ' " `
    if s.endswith("\n"):
        return "unterminated string"
    if len(s) >= 2 and s.endswith(quote) and not _escaped(s, len(s) - 1):
        return None
    return "unterminated string" if quote != "`" else "unterminated template string"


def scan(text: str, language_tag: str, collect_findings: bool = True) -> ScanResult:
    """Blank out strings and comments, recording unterminated constructs.

    Only c_like and python_like have string/comment syntax; other tags are
    returned unchanged with no findings. ``collect_findings=False`` skips
    the per-match termination analysis (used on the bulk indexing path).
    """
    if language_tag == "python_like":
        lex = _PY_LEX
    elif language_tag == "c_like":
        lex = _C_LEX
    else:
        return ScanResult(text, ())

    findings: list[tuple[str, int]] = []
    out: list[str] = []
    last = 0
    for m in lex.finditer(text):
        s = m.group(0)
        out.append(text[last : m.start()])
        out.append(_blank(s))
        last = m.end()
        if collect_findings:
            message = _lex_finding(s)
            if message is not None:
                findings.append((message, _line_of(text, m.start())))
    out.append(text[last:])
    return ScanResult("".join(out), tuple(findings))


def strip_strings_and_comments(text: str, language_tag: str) -> str:
    return scan(text, language_tag).text


def balance_delimiters(stripped: str) -> list[tuple[str, int]]:
    """Check (), [], {} balance on already-stripped text."""
    findings: list[tuple[str, int]] = []
    stack: list[tuple[str, int]] = []
    line = 1
    for ch in stripped:
        if ch == "\n":
            line += 1
        elif ch in _OPENERS:
            stack.append((ch, line))
        elif ch in _CLOSERS:
            if not stack:
                findings.append((f"unmatched closing '{ch}'", line))
            else:
                opener, opened_at = stack.pop()
                if opener != _MATCHING[ch]:
                    findings.append(
                        (f"mismatched '{opener}' (line {opened_at}) closed by '{ch}'", line)
                    )
    for opener, opened_at in stack:
        findings.append((f"unclosed '{opener}'", opened_at))
    return findings


def extract_file_symbols(
    content: str, language_tag: str
) -> list[tuple[str, str, int]]:
    """Extract (symbol, site_kind, line) triples from one file.

    Definitions are identifiers that follow a per-family definition keyword
    at the start of a line (leading modifiers skipped); any other identifier
    occurrence outside strings and comments is a reference. Identifiers
    shorter than two characters and reserved keywords are excluded. Triples
    are deduplicated per line and ordered by first appearance.
    """
    if language_tag not in DEF_KEYWORDS:
        return []
    reserved = RESERVED[language_tag]
    def_keywords = DEF_KEYWORDS[language_tag]
    modifiers = DEF_MODIFIERS[language_tag]

    stripped = scan(content, language_tag, collect_findings=False).text
    results: list[tuple[str, str, int]] = []
    seen: set[tuple[str, str, int]] = set()
    for line_no, line in enumerate(stripped.split("\n"), start=1):
        idents = IDENT_RE.findall(line)
        if not idents:
            continue
        i = 0
        while i < len(idents) and idents[i] in modifiers:
            i += 1
        def_index = -1
        if i + 1 < len(idents) and idents[i] in def_keywords:
            def_index = i + 1
        for j, name in enumerate(idents):
            if len(name) < MIN_SYMBOL_LEN or name in reserved:
                continue
            kind = "def" if j == def_index else "ref"
            key = (name, kind, line_no)
            if key in seen:
                continue
            seen.add(key)
            results.append(key)
    return results


_VARIADIC_HINT = re.compile(r"^\s*\*|\.\.\.")


def _count_params(stripped: str, open_paren: int) -> int | None:
    """Count top-level parameters of the paren group opening at ``open_paren``.

    Returns None when the group never closes nearby or contains a variadic
    marker, meaning arity cannot be checked reliably.
    """
    depth = 0
    segments: list[str] = []
    buf: list[str] = []
    end = min(len(stripped), open_paren + 4000)
    for i in range(open_paren, end):
        ch = stripped[i]
        if ch in _OPENERS:
            depth += 1
            if depth == 1:
                continue
        elif ch in _CLOSERS:
            depth -= 1
            if depth == 0:
                segments.append("".join(buf))
                break
        if depth >= 1:
            if ch == "," and depth == 1:
                segments.append("".join(buf))
                buf = []
            else:
                buf.append(ch)
    else:
        return None
    parts = [seg for seg in segments if seg.strip()]
    if any(_VARIADIC_HINT.search(seg) for seg in parts):
        return None
    return len(parts)


def extract_signatures(
    content: str, language_tag: str
) -> dict[str, list[tuple[int, int | None]]]:
    """Map definition names to (line, param_count) entries.

    param_count is None for definitions without a parameter list (classes,
    namespaces) and for variadic parameter lists.
    """
    if language_tag not in DEF_KEYWORDS:
        return {}
    def_keywords = DEF_KEYWORDS[language_tag]
    modifiers = DEF_MODIFIERS[language_tag]
    stripped = scan(content, language_tag, collect_findings=False).text

    signatures: dict[str, list[tuple[int, int | None]]] = {}
    offset = 0
    for line_no, line in enumerate(stripped.split("\n"), start=1):
        matches = list(IDENT_RE.finditer(line))
        i = 0
        while i < len(matches) and matches[i].group() in modifiers:
            i += 1
        if i + 1 < len(matches) and matches[i].group() in def_keywords:
            name_match = matches[i + 1]
            name = name_match.group()
            if len(name) >= MIN_SYMBOL_LEN and name not in RESERVED[language_tag]:
                pos = offset + name_match.end()
                while pos < len(stripped) and stripped[pos] in " \t":
                    pos += 1
                if pos < len(stripped) and stripped[pos] == "(":
                    count = _count_params(stripped, pos)
                else:
                    count = None
                signatures.setdefault(name, []).append((line_no, count))
        offset += len(line) + 1
    return signatures


def local_definitions(text: str, language_tag: str) -> set[str]:
    """Names a generated snippet defines itself: keyword definitions, simple
    assignment targets, and parameter names of keyword definitions."""
    if language_tag not in DEF_KEYWORDS:
        return set()
    reserved = RESERVED[language_tag]
    stripped = scan(text, language_tag, collect_findings=False).text
    names: set[str] = set()

    for name, kind, _line in extract_file_symbols(text, language_tag):
        if kind == "def":
            names.add(name)

    offset = 0
    for line in stripped.split("\n"):
        m = re.match(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*=(?!=)", line)
        if m and m.group(1) not in reserved and len(m.group(1)) >= MIN_SYMBOL_LEN:
            names.add(m.group(1))
        matches = list(IDENT_RE.finditer(line))
        i = 0
        while i < len(matches) and matches[i].group() in DEF_MODIFIERS[language_tag]:
            i += 1
        if i + 1 < len(matches) and matches[i].group() in DEF_KEYWORDS[language_tag]:
            name_match = matches[i + 1]
            pos = offset + name_match.end()
            while pos < len(stripped) and stripped[pos] in " \t":
                pos += 1
            if pos < len(stripped) and stripped[pos] == "(":
                close = stripped.find(")", pos)
                if close != -1:
                    for param in IDENT_RE.findall(stripped[pos:close]):
                        if param not in reserved and len(param) >= MIN_SYMBOL_LEN:
                            names.add(param)
        offset += len(line) + 1
    return names
