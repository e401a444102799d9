"""Operator configuration: a TOML-like key/value text file plus defaults.

One ``key = value`` pair per line; ``#`` starts a comment. Values may be
integers, floats, booleans, quoted strings, or comma-separated lists.
Every numeric parameter is validated at load time so a bad config fails
fast instead of mid-pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .corpus import DEFAULT_EXCLUDE_GLOBS, IngestConfig


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Config:
    chunk_window_lines: int = 40
    chunk_stride_lines: int = 30
    include_globs: tuple[str, ...] = ()
    exclude_globs: tuple[str, ...] = DEFAULT_EXCLUDE_GLOBS
    top_n_per_retriever: int = 50
    fusion_k: int = 60
    ranker_model_path: str = ""
    selection_policy: str = "token_budget"  # token_budget | score_threshold
    score_threshold: float = 0.5
    budget_completion: int = 2048
    budget_chat: int = 12288
    external_checks: tuple[str, ...] = ()
    check_timeout: float = 30.0
    allowlist_paths: tuple[str, ...] = ()

    def validate(self) -> "Config":
        if self.chunk_stride_lines < 1 or self.chunk_window_lines < self.chunk_stride_lines:
            raise ConfigError(
                "chunk_window_lines must be >= chunk_stride_lines >= 1, got "
                f"{self.chunk_window_lines}/{self.chunk_stride_lines}"
            )
        if self.top_n_per_retriever < 0:
            raise ConfigError("top_n_per_retriever must be >= 0")
        if self.fusion_k < 1:
            raise ConfigError("fusion_k must be >= 1")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigError("score_threshold must be in [0, 1]")
        if self.budget_completion < 0 or self.budget_chat < 0:
            raise ConfigError("budgets must be >= 0")
        if self.check_timeout <= 0:
            raise ConfigError("check_timeout must be > 0")
        if self.selection_policy not in ("token_budget", "score_threshold"):
            raise ConfigError(f"unknown selection_policy {self.selection_policy!r}")
        return self

    def ingest_config(self) -> IngestConfig:
        return IngestConfig(
            include_globs=self.include_globs,
            exclude_globs=self.exclude_globs,
            chunk_window_lines=self.chunk_window_lines,
            chunk_stride_lines=self.chunk_stride_lines,
        )


def _parse_value(raw: str):
    raw = raw.strip()
    if not raw:
        return ""
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.startswith("'") and raw.endswith("'") and len(raw) >= 2:
        return raw[1:-1]
    if "," in raw:
        return tuple(p for p in (_parse_value(part) for part in raw.split(",")) if p != "")
    lowered = raw.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(text: str, base: Config | None = None) -> Config:
    config = base or Config()
    known = {f.name: f for f in fields(Config)}
    updates = {}
    for line_no, line in enumerate(text.split("\n"), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        value = _parse_value(raw)
        target = known[key].type
        if target in ("tuple[str, ...]",) or "tuple" in str(target):
            if isinstance(value, str):
                value = (value,) if value else ()
            value = tuple(str(v) for v in value)
        elif isinstance(value, bool) and "bool" not in str(target):
            raise ConfigError(f"line {line_no}: boolean not valid for {key}")
        elif "float" in str(target) and isinstance(value, int):
            value = float(value)
        updates[key] = value
    try:
        config = replace(config, **updates)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()


def load_config(path: str, base: Config | None = None) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    return parse_config(text, base)
