"""Deterministic prompt assembly under a hard token budget.

The rendered prompt is preamble, then the query block, then the selected
items in selection order — so the highest-scored item sits closest to the
query text. An item that would push the prompt past the budget is dropped
whole and assembly continues down the list; item texts are never
truncated and appear byte-for-byte in the output.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import kernels
from .corpus import ContextItem


class PromptBudgetError(ValueError):
    """The budget cannot even fit the preamble and query."""


@dataclass(frozen=True)
class PromptTemplate:
    """Rendering skeleton; a pure function of (template, selection, query).

    ``item_header`` may use {path}, {start_line} and {end_line};
    ``query_block`` must use {query}.
    """

    preamble: str = "Repository context for the task below."
    item_header: str = "--- {path}:{start_line}-{end_line} ---"
    item_separator: str = "\n\n"
    query_block: str = "Task: {query}"


DEFAULT_TEMPLATE = PromptTemplate()


def _validate_template(template: PromptTemplate) -> None:
    try:
        template.item_header.format(path="p", start_line=1, end_line=2)
        template.query_block.format(query="q")
    except (KeyError, IndexError) as exc:
        raise ValueError(f"bad template placeholder: {exc}") from exc


def assemble(
    selection: list[ContextItem],
    query: str,
    template: PromptTemplate,
    budget_tokens: int,
) -> str:
    """Render the prompt, dropping whole items that would exceed the budget.

    Raises PromptBudgetError when preamble plus query already exceed the
    budget. The returned text always satisfies token_count(text) <= budget.
    """
    _validate_template(template)
    query_text = template.query_block.format(query=query)
    parts = [p for p in (template.preamble, query_text) if p]
    base = template.item_separator.join(parts)
    if kernels.token_count(base) > budget_tokens:
        raise PromptBudgetError(
            f"budget {budget_tokens} cannot fit preamble and query "
            f"({kernels.token_count(base)} tokens)"
        )
    current = base
    for item in selection:
        header = template.item_header.format(
            path=item.path, start_line=item.start_line, end_line=item.end_line
        )
        block = f"{header}\n{item.text}" if header else item.text
        candidate = f"{current}{template.item_separator}{block}"
        if kernels.token_count(candidate) <= budget_tokens:
            current = candidate
    return current


def parse_template_file(text: str) -> PromptTemplate:
    """Parse a sectioned template file.

    Sections are introduced by ``[preamble]``, ``[item_header]``,
    ``[separator]`` and ``[query]`` lines; contents run until the next
    section. ``\\n`` and ``\\t`` escapes are decoded, so multi-line
    separators can be written on one line.
    """
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    known = {"preamble", "item_header", "separator", "query"}
    for line in text.split("\n"):
        name = line.strip()
        if name.startswith("[") and name.endswith("]") and name[1:-1] in known:
            current = sections.setdefault(name[1:-1], [])
            continue
        if current is not None:
            current.append(line)

    def section(name: str, default: str) -> str:
        if name not in sections:
            return default
        value = "\n".join(sections[name])
        if value.endswith("\n"):
            value = value[:-1]
        return _unescape(value.strip("\n"))

    template = PromptTemplate(
        preamble=section("preamble", DEFAULT_TEMPLATE.preamble),
        item_header=section("item_header", DEFAULT_TEMPLATE.item_header),
        item_separator=section("separator", DEFAULT_TEMPLATE.item_separator),
        query_block=section("query", DEFAULT_TEMPLATE.query_block),
    )
    _validate_template(template)
    return template


def _unescape(value: str) -> str:
    return value.replace("\\n", "\n").replace("\\t", "\t")
