"""Editable data files shipped with the package.

Builtin allowlists keep the hallucination check from flagging standard
library calls. One symbol per line; blank lines and '#' comments are
ignored. Operators can extend these via extra allowlist files configured
on the command line.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

_ALLOWLIST_FILES = {
    "python_like": "builtins_python_like.txt",
    "c_like": "builtins_c_like.txt",
}


def parse_allowlist(text: str) -> frozenset[str]:
    names = set()
    for line in text.splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            names.add(entry)
    return frozenset(names)


@lru_cache(maxsize=None)
def builtin_allowlist(language_tag: str) -> frozenset[str]:
    """Builtin/standard-library symbols for one language family."""
    filename = _ALLOWLIST_FILES.get(language_tag)
    if filename is None:
        return frozenset()
    text = resources.files(__package__).joinpath(filename).read_text(encoding="utf-8")
    return parse_allowlist(text)
