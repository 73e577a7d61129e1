"""Document records, the screening ledger, text cleaning and XML full-text extraction."""

from __future__ import annotations

import csv
import enum
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional


class CorpusError(Exception):
    pass


class MetadataError(CorpusError):
    pass


class ScreeningError(CorpusError):
    pass


class XmlExtractionError(CorpusError):
    """Raised when XML cannot be parsed or holds no usable body.

    ``kind`` is ``"malformed"`` or ``"fulltext_missing"``.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class Stage(str, enum.Enum):
    IDENTIFIED = "identified"
    SCREENED_IN = "screened_in"
    SCREENED_OUT = "screened_out"
    FULLTEXT_OK = "fulltext_ok"
    FULLTEXT_MISSING = "fulltext_missing"


_STAGE_RANK = {
    Stage.IDENTIFIED: 0,
    Stage.SCREENED_IN: 1,
    Stage.SCREENED_OUT: 1,
    Stage.FULLTEXT_OK: 2,
    Stage.FULLTEXT_MISSING: 2,
}

EXCLUSION_REASONS = ("doc_type", "language", "off_topic", "no_abstract", "other")


@dataclass
class FullText:
    source_format: str  # "xml" | "plain"
    raw_chars: int
    cleaned_text: str


@dataclass
class DocumentRecord:
    id: str
    title: str
    abstract: str
    year: int
    doi: Optional[str] = None
    keywords: list[str] = field(default_factory=list)
    venue: str = ""
    stage: Stage = Stage.IDENTIFIED
    fulltext: Optional[FullText] = None
    # set at ingest when a row is excludable, e.g. "no_abstract"; screening decides
    exclusion_hint: Optional[str] = None

    def __post_init__(self):
        self.stage = Stage(self.stage)
        if not 1900 <= self.year <= 2100:
            raise CorpusError(f"{self.id}: year {self.year} outside [1900, 2100]")
        if self.fulltext is not None and self.stage is not Stage.FULLTEXT_OK:
            raise CorpusError(f"{self.id}: fulltext attached but stage is {self.stage.value}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["stage"] = self.stage.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DocumentRecord":
        d = dict(d)
        ft = d.get("fulltext")
        d["fulltext"] = FullText(**ft) if ft else None
        return cls(**d)


def advance(record: DocumentRecord, stage: Stage, fulltext: Optional[FullText] = None) -> DocumentRecord:
    """Return a copy of ``record`` moved to ``stage``; backward moves raise."""
    stage = Stage(stage)
    if _STAGE_RANK[stage] < _STAGE_RANK[record.stage]:
        raise ScreeningError(f"{record.id}: cannot move from {record.stage.value} back to {stage.value}")
    if record.stage is Stage.SCREENED_OUT and stage in (Stage.FULLTEXT_OK, Stage.FULLTEXT_MISSING):
        raise ScreeningError(f"{record.id}: excluded records cannot enter full-text retrieval")
    if record.stage in (Stage.FULLTEXT_OK, Stage.FULLTEXT_MISSING) and stage is not record.stage:
        if not (record.stage is Stage.FULLTEXT_MISSING and stage is Stage.FULLTEXT_OK):
            raise ScreeningError(f"{record.id}: cannot move from {record.stage.value} to {stage.value}")
    return replace(record, stage=stage, fulltext=fulltext if stage is Stage.FULLTEXT_OK else None)


@dataclass(frozen=True)
class ScreeningDecision:
    doc_id: str
    verdict: str  # "include" | "exclude"
    reason: Optional[str] = None

    def __post_init__(self):
        if self.verdict not in ("include", "exclude"):
            raise ScreeningError(f"bad verdict {self.verdict!r} for {self.doc_id}")
        if self.verdict == "exclude":
            if self.reason is None:
                raise ScreeningError(f"exclusion of {self.doc_id} has no reason")
            if self.reason not in EXCLUSION_REASONS:
                raise ScreeningError(f"unknown exclusion reason {self.reason!r}")


@dataclass
class PrismaCounts:
    identified: int = 0
    screened_included: int = 0
    with_doi: int = 0
    open_access_retrieved: int = 0
    publisher_retrieved: int = 0
    fulltext_total: int = 0

    def check(self) -> None:
        if self.fulltext_total != self.open_access_retrieved + self.publisher_retrieved:
            raise CorpusError(
                f"fulltext_total {self.fulltext_total} != open_access {self.open_access_retrieved}"
                f" + publisher {self.publisher_retrieved}"
            )
        if not self.identified >= self.screened_included >= self.with_doi >= self.fulltext_total:
            raise CorpusError(f"PRISMA funnel is not monotone: {self}")

    def to_json(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# metadata ingest

COLUMN_ALIASES = {
    "id": ("id", "eid", "doc_id", "record id"),
    "title": ("title", "article title", "document title"),
    "abstract": ("abstract", "description"),
    "year": ("year", "publication year", "pubyear", "py"),
    "doi": ("doi",),
    "keywords": ("keywords", "author keywords", "index keywords", "de"),
    "venue": ("venue", "source title", "journal", "source"),
}
MANDATORY_COLUMNS = ("title", "abstract", "year")


def _resolve_columns(header: list[str]) -> dict[str, str]:
    lowered = {h.strip().lower(): h for h in header}
    found = {}
    for canonical, aliases in COLUMN_ALIASES.items():
        for alias in aliases:
            if alias in lowered:
                found[canonical] = lowered[alias]
                break
    missing = [c for c in MANDATORY_COLUMNS if c not in found]
    if missing:
        raise MetadataError(f"metadata file lacks mandatory column(s): {', '.join(missing)}")
    return found


def ingest_metadata(path) -> list[DocumentRecord]:
    """Read a bibliographic CSV export into records at stage ``identified``.

    Columns are matched case-insensitively through :data:`COLUMN_ALIASES`.
    Rows with a blank abstract are kept but carry ``exclusion_hint="no_abstract"``.
    """
    path = Path(path)
    if not path.is_file():
        raise MetadataError(f"metadata file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MetadataError(f"{path}: empty file, no header row")
        cols = _resolve_columns(reader.fieldnames)
        records = []
        seen = set()
        for rowno, row in enumerate(reader, start=1):
            get = lambda key: (row.get(cols[key]) or "").strip() if key in cols else ""
            doc_id = get("id") or f"doc-{rowno:05d}"
            if doc_id in seen:
                raise MetadataError(f"duplicate id {doc_id!r} at row {rowno}")
            seen.add(doc_id)
            try:
                year = int(get("year"))
            except ValueError:
                raise MetadataError(f"row {rowno}: year {get('year')!r} is not an integer") from None
            abstract = get("abstract")
            keywords = [k.strip() for k in get("keywords").split(";") if k.strip()]
            records.append(
                DocumentRecord(
                    id=doc_id,
                    title=get("title"),
                    abstract=abstract,
                    year=year,
                    doi=get("doi") or None,
                    keywords=keywords,
                    venue=get("venue"),
                    exclusion_hint=None if abstract else "no_abstract",
                )
            )
    return records


def read_decisions(path) -> list[ScreeningDecision]:
    """Screening decisions from a CSV with columns doc_id, verdict, reason."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            ScreeningDecision(row["doc_id"].strip(), row["verdict"].strip(), (row.get("reason") or "").strip() or None)
            for row in csv.DictReader(fh)
        ]


def count_prisma(records: Iterable[DocumentRecord], open_access: int = 0, publisher: int = 0) -> PrismaCounts:
    records = list(records)
    kept = [r for r in records if r.stage is not Stage.SCREENED_OUT]
    counts = PrismaCounts(
        identified=len(records),
        screened_included=len(kept),
        with_doi=sum(1 for r in kept if r.doi),
        open_access_retrieved=open_access,
        publisher_retrieved=publisher,
        fulltext_total=sum(1 for r in records if r.stage is Stage.FULLTEXT_OK),
    )
    counts.check()
    return counts


def apply_screening(records: list[DocumentRecord], decisions: list[ScreeningDecision]):
    """Apply screening decisions; records without a decision are screened in.

    Returns ``(records, counts, reasons)`` where ``reasons`` maps excluded ids
    to their exclusion reason. Re-applying the same decisions is a no-op.
    """
    by_id = {r.id: r for r in records}
    verdicts = {}
    for d in decisions:
        if d.doc_id not in by_id:
            raise ScreeningError(f"decision references unknown id {d.doc_id!r}")
        verdicts[d.doc_id] = d
    out = []
    reasons = {}
    for r in records:
        d = verdicts.get(r.id)
        target = Stage.SCREENED_OUT if d is not None and d.verdict == "exclude" else Stage.SCREENED_IN
        if d is not None and d.verdict == "exclude":
            reasons[r.id] = d.reason
        if r.stage is Stage.IDENTIFIED or (r.stage in (Stage.SCREENED_IN, Stage.SCREENED_OUT) and d is not None):
            r = advance(r, target)
        elif target is Stage.SCREENED_OUT and r.stage is not Stage.SCREENED_OUT:
            raise ScreeningError(f"{r.id}: cannot exclude a record already at {r.stage.value}")
        out.append(r)
    return out, count_prisma(out), reasons


def write_jsonl(records: Iterable[DocumentRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path) -> list[DocumentRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [DocumentRecord.from_json(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# cleaning

ALLOWED_PUNCTUATION = ".,;:()-%"
# replaced by a space rather than deleted so "AI/ML" stays two words
SEPARATOR_CHARS = "/\\|_+=&~–—‒―"

IDENTIFIER_PATTERNS = {
    "doi_url": re.compile(r"(?i)\bhttps?://(?:dx\.)?doi\.org/\S+"),
    "url": re.compile(r"(?i)\b(?:https?|ftp)://\S+|\bwww\.\S+"),
    "email": re.compile(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+"),
    "doi": re.compile(r"(?i)\b(?:doi:\s*)?10\.\d{4,9}/\S+"),
}

_WS = re.compile(r"\s+")
_HYPHEN_BREAK = re.compile(r"(\w)-[ \t]*\r?\n[ \t]*(\w)")


def _is_allowed(ch: str) -> bool:
    return ch.isalpha() or ch in "0123456789" or ch in ALLOWED_PUNCTUATION or ch == " "


def _filter_chars(text: str) -> str:
    out = []
    for ch in text:
        if ch.isspace() or ch in SEPARATOR_CHARS:
            out.append(" ")
        elif _is_allowed(ch):
            out.append(ch)
    return _WS.sub(" ", "".join(out)).strip()


def clean_abstract(text: str) -> str:
    """Flatten line breaks, drop characters outside the allowed set, collapse spaces."""
    return _filter_chars(text)


def _strip_identifiers(text: str) -> str:
    for pattern in IDENTIFIER_PATTERNS.values():
        text = pattern.sub(" ", text)
    return text


def clean_fulltext(text: str) -> str:
    """Abstract cleaning plus identifier removal and hyphenated line-break repair."""
    text = _HYPHEN_BREAK.sub(r"\1\2", text)
    # deleting characters can splice a new identifier together; iterate to a fixed point
    while True:
        cleaned = _filter_chars(_strip_identifiers(text))
        if cleaned == text:
            return cleaned
        text = cleaned


# ---------------------------------------------------------------------------
# XML full text

DEFAULT_CANDIDATE_TAGS = ("body", "sections", "rawtext")

_BLOCK_TAGS = {
    "p", "para", "simple-para", "section-title", "title", "sec", "section", "list-item",
    "caption", "label", "head", "div", "abstract-sec", "br", "item", "entry", "row",
}


def _local(tag) -> str:
    if not isinstance(tag, str):
        return ""
    return tag.rsplit("}", 1)[-1].rsplit(":", 1)[-1].lower()


def _gather_text(elem, parts: list[str]) -> None:
    block = _local(elem.tag) in _BLOCK_TAGS
    if block:
        parts.append(" ")
    if elem.text:
        parts.append(elem.text)
    for child in elem:
        _gather_text(child, parts)
        if child.tail:
            parts.append(child.tail)
    if block:
        parts.append(" ")


def extract_xml_fulltext(xml: str, candidate_tags=DEFAULT_CANDIDATE_TAGS) -> FullText:
    """Pull the article body out of publisher XML.

    Candidate tags are tried in order against element local names (namespace
    prefixes ignored); the first tag with any non-empty match wins and the
    text of all its matches is concatenated and cleaned.
    """
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise XmlExtractionError("malformed", f"malformed XML: {exc}") from None
    for tag in candidate_tags:
        tag = tag.lower()
        matches = [e for e in root.iter() if _local(e.tag) == tag]
        # nested matches (body inside body) would be counted twice
        outer = []
        for m in matches:
            if not any(m is not o and m in list(o.iter()) for o in matches):
                outer.append(m)
        parts: list[str] = []
        for m in outer:
            _gather_text(m, parts)
            parts.append(" ")
        raw = "".join(parts)
        if raw.strip():
            cleaned = clean_fulltext(raw)
            if cleaned:
                return FullText(source_format="xml", raw_chars=len(raw), cleaned_text=cleaned)
    raise XmlExtractionError("fulltext_missing", "no candidate body tag found")


def plain_fulltext(text: str) -> FullText:
    return FullText(source_format="plain", raw_chars=len(text), cleaned_text=clean_fulltext(text))
