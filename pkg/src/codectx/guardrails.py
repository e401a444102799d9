"""Pre-display validation of generated code recommendations.

Checks are deliberately lexical and dependency-free: delimiter balance
with string/comment awareness (does it lex?), symbol-existence scanning
against the corpus (does it hallucinate APIs?), and call/arity checks for
generated unit tests. Anything needing a real compiler, type checker, or
test runner is delegated to a configurable external command; judging
open-ended chat quality is an extension point with no built-in
implementation.
"""

from __future__ import annotations

import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from . import lexing
from .corpus import ContextItem, CorpusIndex
from .data import builtin_allowlist

RECOMMENDATION_KINDS = ("completion", "edit", "unit_test", "chat")

DEFAULT_EXTERNAL_TIMEOUT = 30.0

_FILE_SUFFIX = {"python_like": ".py", "c_like": ".c", "plain_text": ".txt"}


class ExternalCheckError(Exception):
    """The external command could not run at all (distinct from failing)."""


@dataclass(frozen=True)
class Recommendation:
    kind: str  # completion | edit | unit_test | chat
    text: str
    language_tag: str
    target_symbol: str | None = None
    rec_id: str = ""


@dataclass(frozen=True)
class Finding:
    message: str
    line: int | None = None


@dataclass(frozen=True)
class CheckResult:
    check_name: str
    passed: bool
    details: tuple[Finding, ...] = ()
    applicable: bool = True
    note: str = ""


@dataclass(frozen=True)
class GuardrailReport:
    recommendation_id: str
    results: tuple[CheckResult, ...]

    @property
    def verdict(self) -> bool:
        """Pass iff every applicable check passed."""
        return all(r.passed for r in self.results if r.applicable)

    def to_dict(self) -> dict:
        return {
            "recommendation_id": self.recommendation_id,
            "verdict": "pass" if self.verdict else "fail",
            "checks": [
                {
                    "name": r.check_name,
                    "passed": r.passed,
                    "applicable": r.applicable,
                    "note": r.note,
                    "findings": [
                        {"message": f.message, "line": f.line} for f in r.details
                    ],
                }
                for r in self.results
            ],
        }


def check_syntax(text: str, language_tag: str) -> CheckResult:
    """String/comment-aware lexing plus delimiter balance.

    plain_text and unknown language tags have no delimiter syntax to
    check, so the result is marked not applicable (and passes with a
    note).
    """
    if language_tag not in lexing.DEF_KEYWORDS:
        return CheckResult(
            check_name="syntax",
            passed=True,
            applicable=False,
            note=f"no syntax rules for language tag {language_tag!r}",
        )
    scanned = lexing.scan(text, language_tag)
    findings = [Finding(message=m, line=ln) for m, ln in scanned.findings]
    findings += [
        Finding(message=m, line=ln) for m, ln in lexing.balance_delimiters(scanned.text)
    ]
    findings.sort(key=lambda f: (f.line or 0, f.message))
    return CheckResult(check_name="syntax", passed=not findings, details=tuple(findings))


_CALL_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(")
_ATTR_RE = re.compile(r"\.\s*([A-Za-z_][A-Za-z0-9_]*)")


def check_symbols(
    text: str, index: CorpusIndex, language_tag: str = "python_like"
) -> CheckResult:
    """Flag called or attribute-accessed identifiers that exist nowhere.

    A name is known when it appears in the corpus symbol table, is defined
    inside the recommendation itself, or is on the builtin allowlist for
    the language family. Names shorter than two characters are ignored,
    matching the symbol table's own exclusion rule.
    """
    if language_tag not in lexing.DEF_KEYWORDS:
        return CheckResult(
            check_name="symbols",
            passed=True,
            applicable=False,
            note=f"no symbol rules for language tag {language_tag!r}",
        )
    stripped = lexing.strip_strings_and_comments(text, language_tag)
    reserved = lexing.RESERVED[language_tag]
    allowlist = builtin_allowlist(language_tag)
    local = lexing.local_definitions(text, language_tag)

    findings: list[Finding] = []
    flagged: set[str] = set()
    for line_no, line in enumerate(stripped.split("\n"), start=1):
        used = [m.group(1) for m in _CALL_RE.finditer(line)]
        used += [m.group(1) for m in _ATTR_RE.finditer(line)]
        for name in used:
            if len(name) < lexing.MIN_SYMBOL_LEN or name in reserved:
                continue
            if name in flagged or name in local or name in allowlist:
                continue
            if index.has_symbol(name):
                continue
            flagged.add(name)
            findings.append(Finding(message=f"unknown symbol '{name}'", line=line_no))
    return CheckResult(check_name="symbols", passed=not findings, details=tuple(findings))


def _call_sites(stripped: str, name: str) -> list[tuple[int, int]]:
    """(offset-after-name, line) pairs of call sites of ``name``."""
    sites = []
    for m in re.finditer(rf"\b{re.escape(name)}\s*\(", stripped):
        open_paren = m.end() - 1
        line = stripped.count("\n", 0, m.start()) + 1
        sites.append((open_paren, line))
    return sites


_SPREAD_HINT = re.compile(r"^\s*\*|\.\.\.")


def _call_arg_count(stripped: str, open_paren: int) -> int | None:
    """Argument count of the call opening at ``open_paren``.

    None when the call never closes or uses spread/variadic markers.
    """
    depth = 0
    segments: list[str] = []
    buf: list[str] = []
    for i in range(open_paren, min(len(stripped), open_paren + 4000)):
        ch = stripped[i]
        if ch in "([{":
            depth += 1
            if depth == 1:
                continue
        elif ch in ")]}":
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
    if any(_SPREAD_HINT.search(seg) for seg in parts):
        return None
    return len(parts)


def check_test(
    text: str, target_symbol: str, index: CorpusIndex, language_tag: str = "python_like"
) -> CheckResult:
    """Verify a generated unit test exercises its target function.

    Findings: target never called; a call whose argument count matches no
    parameter count recorded for the target's corpus definitions. Calls
    with spread/variadic markers are skipped. When the target is not
    defined in the corpus the check degrades to call presence only.
    """
    stripped = lexing.strip_strings_and_comments(text, language_tag)
    sites = _call_sites(stripped, target_symbol)
    if not sites:
        return CheckResult(
            check_name="test",
            passed=False,
            details=(Finding(message=f"tested function '{target_symbol}' is never called"),),
        )

    counts = index.param_counts(target_symbol)
    checkable = tuple(c for c in counts if c is not None)
    note = ""
    if not index.symbol_defs(target_symbol):
        note = f"'{target_symbol}' is not defined in the corpus; arity not checked"
        checkable = ()
    elif not checkable:
        note = f"no checkable parameter count for '{target_symbol}'; arity not checked"

    findings: list[Finding] = []
    if checkable:
        for open_paren, line in sites:
            n_args = _call_arg_count(stripped, open_paren)
            if n_args is None:
                continue
            if n_args not in checkable:
                expected = ", ".join(str(c) for c in checkable)
                findings.append(
                    Finding(
                        message=(
                            f"'{target_symbol}' called with {n_args} argument(s) "
                            f"but defined with {expected}"
                        ),
                        line=line,
                    )
                )
    return CheckResult(
        check_name="test", passed=not findings, details=tuple(findings), note=note
    )


def run_external_check(
    command_template: str,
    text: str,
    timeout: float = DEFAULT_EXTERNAL_TIMEOUT,
    language_tag: str = "plain_text",
) -> CheckResult:
    """Run a configured external command against the recommendation text.

    The text is written to a fresh temporary workspace; every ``{file}``
    occurrence in the command is replaced by that path. Exit code zero is
    a pass. A command that cannot be executed at all raises
    ExternalCheckError instead of failing the check.
    """
    check_name = f"external:{command_template}"
    with tempfile.TemporaryDirectory(prefix="codectx-check-") as workdir:
        snippet = Path(workdir) / f"snippet{_FILE_SUFFIX.get(language_tag, '.txt')}"
        snippet.write_text(text, encoding="utf-8")
        argv = [arg.replace("{file}", str(snippet)) for arg in shlex.split(command_template)]
        if not argv:
            raise ExternalCheckError("empty external check command")
        try:
            proc = subprocess.run(
                argv,
                cwd=workdir,
                capture_output=True,
                text=True,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired:
            return CheckResult(
                check_name=check_name,
                passed=False,
                details=(Finding(message=f"timed out after {timeout:g}s"),),
            )
        except (FileNotFoundError, PermissionError) as exc:
            raise ExternalCheckError(f"cannot run {argv[0]!r}: {exc}") from exc
    if proc.returncode == 0:
        return CheckResult(check_name=check_name, passed=True)
    output = (proc.stderr or proc.stdout or "").strip()
    message = f"exit code {proc.returncode}"
    if output:
        message += f": {output[:500]}"
    return CheckResult(
        check_name=check_name, passed=False, details=(Finding(message=message),)
    )


class JudgeHook(Protocol):
    """Extension point for response-quality judges (no built-in impl).

    Implementations accept the recommendation and the context items it was
    generated from and return a CheckResult.
    """

    def __call__(
        self, recommendation: Recommendation, context: Sequence[ContextItem]
    ) -> CheckResult: ...


def run_guardrails(
    recommendation: Recommendation,
    index: CorpusIndex,
    external_commands: Sequence[str] = (),
    timeout: float = DEFAULT_EXTERNAL_TIMEOUT,
    judge: JudgeHook | None = None,
    context: Sequence[ContextItem] = (),
) -> GuardrailReport:
    """Run every check applicable to the recommendation kind.

    completion/edit: syntax + symbols; unit_test: additionally the
    test-call check (target_symbol required); chat: only the judge hook,
    when one is provided. External commands run for all code kinds.
    """
    if recommendation.kind not in RECOMMENDATION_KINDS:
        raise ValueError(f"unknown recommendation kind {recommendation.kind!r}")
    results: list[CheckResult] = []
    if recommendation.kind != "chat":
        results.append(check_syntax(recommendation.text, recommendation.language_tag))
        results.append(
            check_symbols(recommendation.text, index, recommendation.language_tag)
        )
        if recommendation.kind == "unit_test":
            if not recommendation.target_symbol:
                raise ValueError("unit_test recommendations require target_symbol")
            results.append(
                check_test(
                    recommendation.text,
                    recommendation.target_symbol,
                    index,
                    recommendation.language_tag,
                )
            )
        for command in external_commands:
            results.append(
                run_external_check(
                    command,
                    recommendation.text,
                    timeout=timeout,
                    language_tag=recommendation.language_tag,
                )
            )
    if judge is not None:
        results.append(judge(recommendation, tuple(context)))
    return GuardrailReport(
        recommendation_id=recommendation.rec_id or "rec-0", results=tuple(results)
    )
