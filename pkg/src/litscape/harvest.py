"""DOI to full-text retrieval via an open-access resolver and a publisher API."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional
from urllib.parse import quote

import httpx

from .corpus import (
    DocumentRecord,
    PrismaCounts,
    Stage,
    XmlExtractionError,
    advance,
    count_prisma,
    extract_xml_fulltext,
    plain_fulltext,
)

log = logging.getLogger(__name__)

OUTCOMES = ("ok", "paywalled", "not_found", "http_error", "no_doi")
DEFAULT_PUBLISHER_PREFIXES = ("10.1016",)
TRANSIENT_STATUS = {429, 500, 502, 503, 504}


class HarvestError(Exception):
    pass


class ProviderHTTPError(HarvestError):
    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class AuthError(HarvestError):
    pass


class NotEntitledError(HarvestError):
    pass


class NotFoundError(HarvestError):
    pass


@dataclass
class ProviderConfig:
    base_url: str
    auth_token: Optional[str] = None
    auth_token_env: Optional[str] = None
    rate_limit: float = 5.0  # requests per second
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rate_limit <= 0:
            raise ValueError("rate_limit must be positive")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    def token(self) -> Optional[str]:
        if self.auth_token:
            return self.auth_token
        if self.auth_token_env:
            return os.environ.get(self.auth_token_env) or None
        return None

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderConfig":
        return cls(**d)


@dataclass
class RetrievalAttempt:
    doc_id: str
    provider: str  # "open_access" | "publisher" | "none"
    outcome: str
    payload_kind: Optional[str] = None  # "pdf_url" | "xml"
    detail: str = ""

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.outcome == "ok" and self.payload_kind is None:
            raise ValueError("an ok attempt needs a payload kind")


class RateLimiter:
    """Serializes requests to one provider, each starting ``1/rate`` s after the previous one ended.

    Spacing from the end of a request rather than its start keeps the rate
    seen by the server under the limit even when connection setup or thread
    scheduling delays a request after it was released.
    """

    def __init__(self, rate: float):
        self.interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next = 0.0

    def __enter__(self):
        self._lock.acquire()
        delay = self._next - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        return self

    def __exit__(self, *exc):
        self._next = time.monotonic() + self.interval
        self._lock.release()

    def wait(self) -> None:
        with self:
            pass


class ResponseCache:
    """Provider responses on disk, one JSON file per (provider, key)."""

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()

    def _path(self, provider: str, key: str) -> Path:
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()[:32]
        return self.root / provider / f"{digest}.json"

    def get(self, provider: str, key: str) -> Optional[dict]:
        p = self._path(provider, key)
        if p.is_file():
            return json.loads(p.read_text(encoding="utf-8"))
        return None

    def put(self, provider: str, key: str, entry: dict) -> None:
        p = self._path(provider, key)
        with self._lock:
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(json.dumps({"key": key, **entry}, sort_keys=True, indent=1), encoding="utf-8")


class Provider:
    """HTTP access for one provider: rate limiting, retries, optional disk cache.

    In ``offline`` mode a cache miss never touches the network and is
    reported as an HTTP failure.
    """

    def __init__(self, name: str, cfg: ProviderConfig, client: Optional[httpx.Client] = None,
                 cache: Optional[ResponseCache] = None, offline: bool = False):
        self.name = name
        self.cfg = cfg
        self.client = client
        self.cache = cache
        self.offline = offline
        self.limiter = RateLimiter(cfg.rate_limit)

    def _client(self) -> httpx.Client:
        if self.client is None:
            self.client = httpx.Client(timeout=self.cfg.timeout)
        return self.client

    def get(self, url: str, key: str, headers: Optional[dict] = None, params: Optional[dict] = None) -> dict:
        """Return ``{"status", "content_type", "body"}``; transient failures are retried."""
        if self.cache is not None:
            hit = self.cache.get(self.name, key)
            if hit is not None:
                return hit
        if self.offline:
            raise ProviderHTTPError(f"{self.name}: offline and {key!r} not cached")
        attempt = 0
        while True:
            with self.limiter:
                try:
                    resp = self._client().get(url, headers=headers or {}, params=params or {},
                                              timeout=self.cfg.timeout)
                    transient = resp.status_code in TRANSIENT_STATUS
                    error = None
                except httpx.TimeoutException as exc:
                    transient, error = True, f"timeout: {exc}"
                except httpx.HTTPError as exc:
                    transient, error = True, f"transport: {exc}"
            if not transient:
                break
            attempt += 1
            if attempt >= self.cfg.retries:
                if error:
                    raise ProviderHTTPError(f"{self.name}: {error}")
                raise ProviderHTTPError(f"{self.name}: HTTP {resp.status_code}", resp.status_code)
            time.sleep(self.cfg.backoff * 2 ** (attempt - 1))
        entry = {
            "status": resp.status_code,
            "content_type": resp.headers.get("content-type", "").split(";")[0].strip(),
            "body": resp.text,
        }
        # 401s and 5xx are not cached; a fixed token or a recovered server should be retried later
        if self.cache is not None and resp.status_code in (200, 403, 404):
            self.cache.put(self.name, key, entry)
        return entry


def route_publisher(doi: Optional[str], prefixes=DEFAULT_PUBLISHER_PREFIXES) -> bool:
    if not doi:
        return False
    doi = doi.strip().lower()
    return any(doi.startswith(p.lower().rstrip("/") + "/") for p in prefixes)


def resolve_open_access(doi: str, provider: Provider, ledger: Optional[list] = None,
                        doc_id: Optional[str] = None) -> Optional[str]:
    """Best open-access location URL for ``doi`` or None when closed."""
    if not doi:
        raise ValueError("doi must be non-empty")
    base = provider.cfg.base_url.rstrip("/")
    params = dict(provider.cfg.params)
    token = provider.cfg.token()
    if token:
        params.setdefault("email", token)

    def record(outcome, kind=None, detail=""):
        if ledger is not None:
            ledger.append(RetrievalAttempt(doc_id or doi, "open_access", outcome, kind, detail))

    try:
        entry = provider.get(f"{base}/{quote(doi, safe='/')}", key=doi, params=params)
    except ProviderHTTPError as exc:
        record("http_error", detail=str(exc))
        raise
    if entry["status"] == 404:
        record("not_found")
        return None
    if entry["status"] != 200:
        record("http_error", detail=f"HTTP {entry['status']}")
        raise ProviderHTTPError(f"resolver returned HTTP {entry['status']}", entry["status"])
    try:
        data = json.loads(entry["body"])
        best = data.get("best_oa_location") or {}
        if not isinstance(best, dict):
            raise TypeError("best_oa_location is not an object")
        url = best.get("url_for_pdf") or best.get("url")
    except (ValueError, TypeError, AttributeError) as exc:
        record("http_error", detail=f"malformed resolver response: {exc}")
        raise ProviderHTTPError(f"malformed resolver response for {doi}: {exc}") from None
    if url:
        record("ok", "pdf_url")
        return url
    record("paywalled")
    return None


def fetch_publisher_fulltext(doi: str, provider: Provider) -> str:
    """Raw XML for ``doi`` from the publisher full-text API."""
    token = provider.cfg.token()
    # offline replays read the response cache and need no credentials
    if not token and not provider.offline:
        raise AuthError("publisher API token not configured")
    base = provider.cfg.base_url.rstrip("/")
    headers = {"Accept": "text/xml"}
    if token:
        headers["X-ELS-APIKey"] = token
    entry = provider.get(f"{base}/{quote(doi, safe='/')}", key=doi, headers=headers,
                         params=dict(provider.cfg.params))
    status = entry["status"]
    if status == 200:
        return entry["body"]
    if status == 401:
        raise AuthError(f"publisher rejected the API token for {doi}")
    if status == 403:
        raise NotEntitledError(f"not entitled to full text of {doi}")
    if status == 404:
        raise NotFoundError(f"publisher has no record of {doi}")
    raise ProviderHTTPError(f"publisher returned HTTP {status}", status)


@dataclass
class HarvestResult:
    records: list
    counts: PrismaCounts
    ledger: list


def counts_from_ledger(records, ledger) -> PrismaCounts:
    """Recompute PRISMA counts from records plus the retrieval ledger.

    A record counts toward the provider of its last ``ok`` attempt that left
    it at ``fulltext_ok``.
    """
    by_id = {r.id: r for r in records}
    source = {}
    for a in ledger:
        if a.outcome == "ok" and a.provider in ("open_access", "publisher") and a.payload_kind is not None:
            source[a.doc_id] = a.provider
        elif a.provider == "open_access" and a.detail.startswith("document:"):
            # resolver hit whose document could not be read
            source.pop(a.doc_id, None)
    oa = pub = 0
    for doc_id, prov in source.items():
        r = by_id.get(doc_id)
        if r is not None and r.stage is Stage.FULLTEXT_OK:
            if prov == "open_access":
                oa += 1
            else:
                pub += 1
    return count_prisma(records, open_access=oa, publisher=pub)


def _fetch_oa_document(url: str, provider: Provider, pdf_text_dir: Optional[Path], doi: str):
    entry = provider.get(url, key="document:" + url)
    if entry["status"] != 200:
        raise ProviderHTTPError(f"document fetch returned HTTP {entry['status']}", entry["status"])
    kind = entry.get("content_type", "")
    if kind.startswith("text/plain"):
        return plain_fulltext(entry["body"])
    if "xml" in kind:
        return extract_xml_fulltext(entry["body"])
    # binary PDFs are parsed upstream; look for the pre-extracted text
    if pdf_text_dir is not None:
        candidate = Path(pdf_text_dir) / (doi.replace("/", "_") + ".txt")
        if candidate.is_file():
            return plain_fulltext(candidate.read_text(encoding="utf-8"))
    raise HarvestError(f"no extracted text for {kind or 'unknown'} document at {url}")


def _harvest_one(record: DocumentRecord, oa: Provider, pub: Optional[Provider], prefixes, pdf_text_dir):
    attempts: list[RetrievalAttempt] = []
    if not record.doi:
        attempts.append(RetrievalAttempt(record.id, "none", "no_doi"))
        return record, attempts
    doi = record.doi
    try:
        url = resolve_open_access(doi, oa, attempts, record.id)
    except HarvestError:
        url = None
    if url:
        try:
            ft = _fetch_oa_document(url, oa, pdf_text_dir, doi)
            return advance(record, Stage.FULLTEXT_OK, ft), attempts
        except (HarvestError, XmlExtractionError) as exc:
            attempts.append(RetrievalAttempt(record.id, "open_access", "http_error", detail=f"document: {exc}"))
    if pub is not None and route_publisher(doi, prefixes):
        try:
            xml = fetch_publisher_fulltext(doi, pub)
            ft = extract_xml_fulltext(xml)
            attempts.append(RetrievalAttempt(record.id, "publisher", "ok", "xml"))
            return advance(record, Stage.FULLTEXT_OK, ft), attempts
        except NotEntitledError as exc:
            attempts.append(RetrievalAttempt(record.id, "publisher", "paywalled", detail=str(exc)))
        except NotFoundError as exc:
            attempts.append(RetrievalAttempt(record.id, "publisher", "not_found", detail=str(exc)))
        except XmlExtractionError as exc:
            attempts.append(RetrievalAttempt(record.id, "publisher", "paywalled", detail=f"{exc.kind}: {exc}"))
        except HarvestError as exc:
            attempts.append(RetrievalAttempt(record.id, "publisher", "http_error", detail=str(exc)))
    return advance(record, Stage.FULLTEXT_MISSING), attempts


def harvest_all(records, oa: Provider, publisher: Optional[Provider] = None,
                prefixes=DEFAULT_PUBLISHER_PREFIXES, workers: int = 4,
                previous_ledger: Optional[list] = None, pdf_text_dir=None) -> HarvestResult:
    """Retrieve full texts for every screened-in record.

    Open access is tried first, then the publisher route for matching DOI
    prefixes. Records already at ``fulltext_ok`` keep their earlier attempts
    from ``previous_ledger`` and are not re-fetched. Excluded records are
    passed through untouched. Output is sorted by record id.
    """
    records = sorted(records, key=lambda r: r.id)
    previous = {}
    for a in previous_ledger or []:
        previous.setdefault(a.doc_id, []).append(a)
    todo = [r for r in records if r.stage in (Stage.SCREENED_IN, Stage.FULLTEXT_MISSING)]

    def work(r):
        try:
            return _harvest_one(r, oa, publisher, prefixes, pdf_text_dir)
        except Exception as exc:  # one bad record must not sink the batch
            log.warning("harvest of %s failed: %s", r.id, exc)
            return advance(r, Stage.FULLTEXT_MISSING), [RetrievalAttempt(r.id, "none", "http_error", detail=str(exc))]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = dict(zip((r.id for r in todo), pool.map(work, todo)))

    out, ledger = [], []
    for r in records:
        if r.id in results:
            new, attempts = results[r.id]
            out.append(new)
            ledger.extend(attempts)
        else:
            out.append(r)
            ledger.extend(previous.get(r.id, []))
    counts = counts_from_ledger(out, ledger)
    return HarvestResult(out, counts, ledger)


def write_ledger(ledger, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for a in ledger:
            fh.write(json.dumps(asdict(a), sort_keys=True) + "\n")


def read_ledger(path) -> list[RetrievalAttempt]:
    with Path(path).open(encoding="utf-8") as fh:
        return [RetrievalAttempt(**json.loads(line)) for line in fh if line.strip()]
