from __future__ import annotations

import pytest

from codectx.corpus import IngestConfig, SourceFile, build_index
from codectx.lexing import language_for_path


def source_file(path: str, content: str) -> SourceFile:
    return SourceFile(
        path=path,
        language_tag=language_for_path(path),
        content=content,
        byte_len=len(content.encode("utf-8")),
    )


TOY_DOCS = [
    ("doc0.txt", "binary search over sorted arrays"),
    ("doc1.txt", "linear search in lists and search again"),
    ("doc2.txt", "binary trees and binary heaps"),
]


@pytest.fixture(scope="session")
def toy_index():
    return build_index([source_file(p, c) for p, c in TOY_DOCS])


CODE_FILES = [
    (
        "src/config.py",
        "def parse_config(path):\n"
        "    raw = load_file(path)\n"
        "    return raw\n",
    ),
    (
        "src/io.py",
        "def load_file(path):\n"
        "    handle = open(path)\n"
        "    return handle.read()\n",
    ),
    (
        "src/main.py",
        "settings = parse_config(default_path)\n"
        "default_path = None\n",
    ),
    (
        "src/util.py",
        "def add_pair(left, right):\n"
        "    return left + right\n",
    ),
]


@pytest.fixture(scope="session")
def code_index():
    return build_index([source_file(p, c) for p, c in CODE_FILES])


@pytest.fixture()
def fixture_repo(tmp_path):
    root = tmp_path / "repo"
    for rel, content in CODE_FILES:
        full = root / rel
        full.parent.mkdir(parents=True, exist_ok=True)
        full.write_text(content, encoding="utf-8")
    return root


def write_repo(root, files):
    for rel, content in files:
        full = root / rel
        full.parent.mkdir(parents=True, exist_ok=True)
        full.write_text(content, encoding="utf-8")
    return root
