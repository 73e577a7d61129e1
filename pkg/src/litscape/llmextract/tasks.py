"""Cluster labeling, seven-field extraction and label normalization."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import prompts
from .parsing import ParseError, parse_lines
from .providers import ChatConfig, TransportError
from .vocab import DEFAULT_LCIA_METHODS, NONE_LABEL, OTHER, Vocabulary, default_vocabularies

log = logging.getLogger(__name__)

CARD_KEYS = ("Title", "Description", "AI")
FIELD_KEYS = (
    "LCA stage",
    "LCIA method",
    "Application area",
    "AI/ML task",
    "AI/ML technology",
    "Impact metrics",
    "Claimed benefit",
)
FIELD_NAMES = (
    "lca_stage",
    "lcia_method",
    "application_area",
    "ai_task",
    "ai_technology",
    "impact_metrics",
    "claimed_benefit",
)
MAX_CARD_ABSTRACTS = 15


class ExtractionError(Exception):
    pass


class LLMParseError(ExtractionError):
    """Parsing still failed after every retry; the last raw response is attached."""

    def __init__(self, message: str, cause: ParseError, raw: str, attempts: int):
        super().__init__(message)
        self.cause = cause
        self.kind = cause.kind
        self.count = cause.count
        self.raw = raw
        self.attempts = attempts


@dataclass
class ClusterCard:
    cluster_id: int
    title: str
    description: str
    ai_summary: str
    retry_count: int = 0


@dataclass
class ExtractionRecord:
    doc_id: str
    lca_stage: Optional[str] = None
    lcia_method: Optional[str] = None
    application_area: Optional[str] = None
    ai_task: Optional[str] = None
    ai_technology: Optional[str] = None
    impact_metrics: Optional[str] = None
    claimed_benefit: Optional[str] = None
    retry_count: int = 0

    def fields(self) -> tuple:
        return tuple(getattr(self, f) for f in FIELD_NAMES)


@dataclass
class NormalizedRecord:
    doc_id: str
    ai_label: Optional[str]
    lca_stage_label: Optional[str]
    lcia_label: Optional[str]
    resolved_by: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _absent(value: str) -> Optional[str]:
    v = value.strip().strip(".").strip()
    return None if v.lower() in ("none", "none found", "not addressed", "not applicable", "n/a") else value.strip()


def _corrective(err: ParseError, expected: int, keys: Sequence[str]) -> str:
    fmt = "\n".join(f"{k}: ..." for k in keys)
    if err.kind == "wrong_line_count":
        problem = f"it had {err.count} lines instead of {expected}"
    elif err.kind == "key_mismatch":
        problem = f"a line did not start with the expected label ({err})"
    elif err.kind == "duplicate_key":
        problem = f"a label was repeated ({err})"
    elif err.kind == "empty_value":
        problem = f"a field was left empty ({err}); write None instead of leaving it blank"
    else:
        problem = str(err)
    return (f"Your previous reply could not be used because {problem}. "
            f"Reply again with exactly {expected} lines in this format and nothing else:\n{fmt}")


def _ask(provider, cfg: ChatConfig, prompt: str, expected: int, keys: Sequence[str]):
    system = prompts.load_template(prompts.SYSTEM_TEMPLATE)
    suffix = ""
    last_err = None
    raw = ""
    for attempt in range(cfg.retries + 1):
        content = prompt + ("\n\n" + suffix if suffix else "")
        messages = [{"role": "system", "content": system}, {"role": "user", "content": content}]
        prompts.check_budget(messages, cfg.context_budget)
        raw = provider.complete(messages, cfg)
        try:
            return parse_lines(raw, expected, keys), attempt
        except ParseError as err:
            last_err = err
            suffix = _corrective(err, expected, keys)
            log.debug("parse failure (%s), attempt %d", err.kind, attempt + 1)
    raise LLMParseError(f"response unusable after {cfg.retries + 1} attempts: {last_err}", last_err, raw,
                        cfg.retries + 1)


def label_cluster(abstracts: Sequence[str], cfg: ChatConfig, provider, cluster_id: int = 0) -> ClusterCard:
    if not 1 <= len(abstracts) <= MAX_CARD_ABSTRACTS:
        raise ExtractionError(f"label_cluster takes 1..{MAX_CARD_ABSTRACTS} abstracts, got {len(abstracts)}")
    block = "\n\n".join(f"[{i + 1}] {a.strip()}" for i, a in enumerate(abstracts))
    prompt = prompts.render(prompts.LABEL_TEMPLATE, abstracts=block)
    (title, description, ai), retries = _ask(provider, cfg, prompt, 3, CARD_KEYS)
    return ClusterCard(cluster_id, title, description, ai, retries)


def extraction_prompt(fulltext: str, lcia_methods=DEFAULT_LCIA_METHODS) -> str:
    return prompts.render(
        prompts.EXTRACT_TEMPLATE,
        primer=prompts.load_template(prompts.PRIMER_TEMPLATE),
        lcia_methods=", ".join(lcia_methods),
        excerpt=prompts.truncate_at_whitespace(fulltext.strip(), prompts.EXCERPT_CHARS),
    )


def extract_fields(fulltext: str, cfg: ChatConfig, provider, doc_id: str = "",
                   lcia_methods=DEFAULT_LCIA_METHODS) -> ExtractionRecord:
    if not fulltext or not fulltext.strip():
        raise ExtractionError(f"{doc_id or 'document'}: empty full text")
    values, retries = _ask(provider, cfg, extraction_prompt(fulltext, lcia_methods), 7, FIELD_KEYS)
    return ExtractionRecord(doc_id, *(_absent(v) for v in values), retry_count=retries)


def _normalize_one(value: Optional[str], vocab: Vocabulary, cfg: ChatConfig, provider, warnings: list):
    if value is None:
        return None, "absent"
    hit = vocab.lookup(value)
    if hit is not None:
        return hit, "synonym"
    prompt = prompts.render(prompts.NORMALIZE_TEMPLATE, category=vocab.category,
                            choices=", ".join(vocab.allowed()), value=value)
    messages = [{"role": "system", "content": prompts.load_template(prompts.SYSTEM_TEMPLATE)},
                {"role": "user", "content": prompt}]
    try:
        prompts.check_budget(messages, cfg.context_budget)
        answer = provider.complete(messages, cfg)
    except (TransportError, prompts.PromptBudgetError) as exc:
        warnings.append(f"{vocab.category}: model unavailable ({exc}); labeled Other")
        return OTHER, "fallback"
    return vocab.validate(answer), "model"


def normalize_labels(record: ExtractionRecord, vocabularies: Optional[dict], cfg: ChatConfig,
                     provider) -> NormalizedRecord:
    """Synonym table first, closed-choice model call for leftovers, Other for anything invalid."""
    vocabularies = vocabularies or default_vocabularies()
    warnings: list = []
    resolved = {}
    ai, resolved["ai"] = _normalize_one(record.ai_technology, vocabularies["ai"], cfg, provider, warnings)
    stage, resolved["lca_stage"] = _normalize_one(record.lca_stage, vocabularies["lca_stage"], cfg, provider,
                                                  warnings)
    lcia, resolved["lcia"] = _normalize_one(record.lcia_method, vocabularies["lcia"], cfg, provider, warnings)
    return NormalizedRecord(record.doc_id, ai, stage, lcia, resolved, warnings)


# ---------------------------------------------------------------------------
# batch helpers

def _pool_map(fn, items, workers: int):
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(fn, items))


def extract_all(docs: Sequence[tuple], cfg: ChatConfig, provider, workers: int = 4,
                lcia_methods=DEFAULT_LCIA_METHODS):
    """Extract every ``(doc_id, fulltext)``; returns ``(records, failures)`` ordered by doc_id."""

    def one(item):
        doc_id, text = item
        try:
            return extract_fields(text, cfg, provider, doc_id, lcia_methods), None
        except (ExtractionError, TransportError) as exc:
            return None, {"doc_id": doc_id, "error": type(exc).__name__, "detail": str(exc)}

    results = _pool_map(one, sorted(docs, key=lambda d: d[0]), workers)
    records = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    return records, failures


def normalize_all(records: Sequence[ExtractionRecord], vocabularies, cfg: ChatConfig, provider,
                  workers: int = 4) -> list:
    ordered = sorted(records, key=lambda r: r.doc_id)
    return _pool_map(lambda r: normalize_labels(r, vocabularies, cfg, provider), ordered, workers)


# ---------------------------------------------------------------------------
# files

def write_extraction_csv(records, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("doc_id",) + FIELD_NAMES)
        for r in sorted(records, key=lambda r: r.doc_id):
            w.writerow((r.doc_id,) + tuple("" if v is None else v for v in r.fields()))


def read_extraction_csv(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [ExtractionRecord(row["doc_id"], *((row[f] or None) for f in FIELD_NAMES))
                for row in csv.DictReader(fh)]


def write_normalized_csv(records, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("doc_id", "ai_label", "lca_stage_label", "lcia_label", "warnings"))
        for r in sorted(records, key=lambda r: r.doc_id):
            w.writerow((r.doc_id, r.ai_label or NONE_LABEL, r.lca_stage_label or NONE_LABEL,
                        r.lcia_label or NONE_LABEL, "; ".join(r.warnings)))


def read_normalized_csv(path) -> list:
    def val(v):
        return None if v == NONE_LABEL else v

    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [NormalizedRecord(row["doc_id"], val(row["ai_label"]), val(row["lca_stage_label"]),
                                 val(row["lcia_label"]), {}, [w for w in row["warnings"].split("; ") if w])
                for row in csv.DictReader(fh)]


def write_cards_json(cards, path) -> None:
    payload = [asdict(c) for c in sorted(cards, key=lambda c: c.cluster_id)]
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_cards_json(path) -> list:
    return [ClusterCard(**d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]
