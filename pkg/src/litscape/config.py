"""Run configuration: one JSON document, paths relative to the file."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .densclust import ClusterConfig, ClusteringError
from .harvest import DEFAULT_PUBLISHER_PREFIXES, ProviderConfig
from .llmextract.providers import EXTRACT_MODEL, LABEL_MODEL, ChatConfig
from .llmextract.vocab import DEFAULT_LCIA_METHODS
from .manifold import ManifoldError, ProjectionConfig


class ConfigError(Exception):
    pass


@dataclass
class Paths:
    metadata: Path
    outputs: Path
    cache: Path
    decisions: Optional[Path] = None
    transcripts: Optional[Path] = None
    term_groups: Optional[Path] = None
    pdf_text: Optional[Path] = None


@dataclass
class EmbeddingSettings:
    provider: str = "hashing"  # "hashing" | "remote"
    endpoint: Optional[str] = None
    model_id: Optional[str] = None
    dim: int = 384
    batch_size: int = 32
    text: str = "abstract"  # "abstract" | "fulltext"
    prepend_title: bool = False
    token_env: Optional[str] = None


@dataclass
class TermSettings:
    top_n: int = 10
    max_terms: int = 500
    period_years: int = 4
    trend_top_k: int = 10
    alpha: float = 0.05
    card_abstracts: int = 15
    # specificity contrasts documents by "period" or by source "field" (title, abstract, keywords)
    partition: str = "period"
    # contingency groups from the term-group file; default is its first two groups
    row_group: Optional[str] = None
    col_group: Optional[str] = None


@dataclass
class ChatSettings:
    provider: str = "http"  # "http" | "rule"
    transcript_mode: str = "replay_or_record"
    label: ChatConfig = field(default_factory=lambda: ChatConfig(model_id=LABEL_MODEL))
    extract: ChatConfig = field(default_factory=lambda: ChatConfig(model_id=EXTRACT_MODEL))


@dataclass
class RunConfig:
    paths: Paths
    seed: int = 42
    workers: int = 4
    offline: bool = False
    open_access: Optional[ProviderConfig] = None
    publisher: Optional[ProviderConfig] = None
    publisher_prefixes: tuple = DEFAULT_PUBLISHER_PREFIXES
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    projection_2d: ProjectionConfig = field(default_factory=lambda: ProjectionConfig(n_components=2, min_dist=0.1))
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    terms: TermSettings = field(default_factory=TermSettings)
    chat: ChatSettings = field(default_factory=ChatSettings)
    lcia_methods: tuple = DEFAULT_LCIA_METHODS
    source: Optional[Path] = None

    def with_seed(self, seed: int) -> "RunConfig":
        cfg = copy.deepcopy(self)
        cfg.seed = seed
        cfg.projection.seed = seed
        cfg.projection_2d.seed = seed
        return cfg

    def snapshot(self) -> dict:
        """JSON-ready view; paths relative to the config directory where possible."""
        base = self.source.parent if self.source else None
        d = asdict(self)
        d.pop("source")
        paths = {}
        for k, v in d["paths"].items():
            if v is None:
                paths[k] = None
                continue
            p = Path(v)
            if base is not None:
                try:
                    p = p.relative_to(base)
                except ValueError:
                    pass
            paths[k] = p.as_posix()
        d["paths"] = paths
        d["publisher_prefixes"] = list(self.publisher_prefixes)
        d["lcia_methods"] = list(self.lcia_methods)
        return d


def _section(cls, data, name):
    if data is None:
        return cls()
    try:
        return cls(**data)
    except (TypeError, ValueError, ManifoldError, ClusteringError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def from_dict(d: dict, base: Path, source: Optional[Path] = None) -> RunConfig:
    known = {"paths", "seed", "workers", "offline", "open_access", "publisher", "publisher_prefixes", "embedding",
             "projection", "projection_2d", "clustering", "terms", "chat", "lcia_methods"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw_paths = d.get("paths")
    if not isinstance(raw_paths, dict):
        raise ConfigError("config needs a 'paths' object")
    for required in ("metadata", "outputs", "cache"):
        if not raw_paths.get(required):
            raise ConfigError(f"paths.{required} is required")
    try:
        paths = Paths(**{k: (base / v) if v else None for k, v in raw_paths.items()})
    except TypeError as exc:
        raise ConfigError(f"section 'paths': {exc}") from None
    for name in ("metadata", "decisions", "term_groups"):
        p = getattr(paths, name)
        if p is not None and not p.is_file():
            raise ConfigError(f"paths.{name} does not exist: {p}")
    for name in ("transcripts", "pdf_text"):
        p = getattr(paths, name)
        if p is not None and p.exists() and not p.is_dir():
            raise ConfigError(f"paths.{name} is not a directory: {p}")

    seed = int(d.get("seed", 42))
    proj = dict(d.get("projection") or {})
    proj.setdefault("seed", seed)
    proj2 = {"n_components": 2, "min_dist": 0.1, **(d.get("projection_2d") or {})}
    proj2.setdefault("seed", seed)
    chat_raw = dict(d.get("chat") or {})
    chat = ChatSettings(
        provider=chat_raw.get("provider", "http"),
        transcript_mode=chat_raw.get("transcript_mode", "replay_or_record"),
        label=_section(ChatConfig, {"model_id": LABEL_MODEL, **(chat_raw.get("label") or {})}, "chat.label"),
        extract=_section(ChatConfig, {"model_id": EXTRACT_MODEL, **(chat_raw.get("extract") or {})},
                         "chat.extract"),
    )
    if chat.provider not in ("http", "rule"):
        raise ConfigError(f"chat.provider must be 'http' or 'rule', got {chat.provider!r}")
    terms = _section(TermSettings, d.get("terms"), "terms")
    if terms.partition not in ("period", "field"):
        raise ConfigError(f"terms.partition must be 'period' or 'field', got {terms.partition!r}")
    emb = _section(EmbeddingSettings, d.get("embedding"), "embedding")
    if emb.provider not in ("hashing", "remote"):
        raise ConfigError(f"embedding.provider must be 'hashing' or 'remote', got {emb.provider!r}")
    if emb.provider == "remote" and not emb.endpoint:
        raise ConfigError("embedding.endpoint is required for the remote provider")
    if emb.text not in ("fulltext", "abstract"):
        raise ConfigError(f"embedding.text must be 'fulltext' or 'abstract', got {emb.text!r}")

    def provider(name):
        raw = d.get(name)
        return None if raw is None else _section(ProviderConfig, raw, name)

    try:
        return RunConfig(
            paths=paths,
            seed=seed,
            workers=int(d.get("workers", 4)),
            offline=bool(d.get("offline", False)),
            open_access=provider("open_access"),
            publisher=provider("publisher"),
            publisher_prefixes=tuple(d.get("publisher_prefixes", DEFAULT_PUBLISHER_PREFIXES)),
            embedding=emb,
            projection=_section(ProjectionConfig, proj, "projection"),
            projection_2d=_section(ProjectionConfig, proj2, "projection_2d"),
            clustering=_section(ClusterConfig, d.get("clustering"), "clustering"),
            terms=terms,
            chat=chat,
            lcia_methods=tuple(d.get("lcia_methods", DEFAULT_LCIA_METHODS)),
            source=source,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path).resolve()
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(data, path.parent, path)
