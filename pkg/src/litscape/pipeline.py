"""Stage orchestration, content-hash skipping and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from collections import Counter
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__, corpus, densclust, embedding, harvest, manifold, reports, termstats
from .config import RunConfig
from .llmextract import providers as chat_providers
from .llmextract import tasks
from .llmextract.rulemodel import RuleChatModel
from .llmextract.vocab import AI_LABELS, LCA_STAGE_LABELS, OTHER, default_vocabularies, group_generic

log = logging.getLogger(__name__)

STAGES = ("ingest", "screen", "harvest", "clean", "embed", "reduce", "cluster", "terms", "label", "extract",
          "normalize", "stats", "report")

ARTIFACTS = {
    "identified": "records/identified.jsonl",
    "screened": "records/screened.jsonl",
    "screening": "records/screening.json",
    "harvested": "records/harvested.jsonl",
    "ledger": "records/retrieval_ledger.jsonl",
    "prisma_counts": "records/prisma_counts.json",
    "corpus": "records/corpus.jsonl",
    "embeddings": "vectors/embeddings.npy",
    "embedding_ids": "vectors/embedding_ids.json",
    "proj10": "vectors/projection_10d.npy",
    "proj2": "vectors/projection_2d.npy",
    "proj10_csv": "vectors/projection_10d.csv",
    "proj2_csv": "vectors/projection_2d.csv",
    "projection_meta": "vectors/projection.json",
    "clusters": "clusters/assignments.csv",
    "tree": "clusters/condensed_tree.json",
    "cluster_terms": "terms/cluster_terms.json",
    "specificity": "terms/specificity.csv",
    "cards": "llm/cluster_cards.json",
    "extraction": "llm/extraction.csv",
    "extraction_failures": "llm/extraction_failures.json",
    "normalized": "llm/normalized.csv",
    "stats": "stats/stats.json",
    "scatter": "reports/scatter.svg",
    **{f"report:{f}": f"reports/{f}" for f in reports.REPORT_FILES},
}

ARTIFACT_DIR = "artifacts"
MANIFEST = "manifest.json"


class PipelineError(Exception):
    pass


class DependencyError(PipelineError):
    def __init__(self, stage: str, missing_stage: str, artifact: str):
        super().__init__(f"stage {stage!r} needs {artifact}, produced by stage {missing_stage!r}; run {missing_stage!r} first")
        self.stage = stage
        self.missing_stage = missing_stage
        self.artifact = artifact


class StageError(PipelineError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Stage:
    name: str
    requires: tuple
    produces: tuple
    run: Callable
    # config sections and external files that feed the fingerprint
    settings: Callable
    external: Callable = lambda cfg: ()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n",
                    encoding="utf-8")


def _load_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def _scrub(d):
    """Drop literal secrets from a config snapshot."""
    if isinstance(d, dict):
        return {k: ("***" if k == "auth_token" and v else _scrub(v)) for k, v in d.items()}
    if isinstance(d, list):
        return [_scrub(v) for v in d]
    return d


class Context:
    def __init__(self, cfg: RunConfig, workers: Optional[int] = None):
        self.cfg = cfg
        self.root = Path(cfg.paths.outputs)
        self.art = self.root / ARTIFACT_DIR
        self.workers = workers if workers is not None else cfg.workers
        self._chat = None

    def path(self, key: str) -> Path:
        p = self.art / ARTIFACTS[key]
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def chat(self):
        if self._chat is None:
            inner = RuleChatModel() if self.cfg.chat.provider == "rule" else chat_providers.HttpChatProvider()
            if self.cfg.paths.transcripts is not None:
                self._chat = chat_providers.TranscriptCache(self.cfg.paths.transcripts, inner,
                                                            self.cfg.chat.transcript_mode)
            else:
                self._chat = inner
        return self._chat

    def corpus(self):
        return corpus.read_jsonl(self.path("corpus"))

    def fulltext_docs(self):
        return [r for r in self.corpus() if r.stage is corpus.Stage.FULLTEXT_OK]

    def screened_in_docs(self):
        return [r for r in self.corpus() if r.stage is not corpus.Stage.SCREENED_OUT]

    def doc_text(self, r) -> str:
        e = self.cfg.embedding
        text = r.fulltext.cleaned_text if e.text == "fulltext" and r.fulltext is not None else r.abstract
        if e.prepend_title or not text:
            text = f"{r.title}. {text}".strip()
        return text


# ---------------------------------------------------------------------------
# stages

def _ingest(ctx: Context):
    records = corpus.ingest_metadata(ctx.cfg.paths.metadata)
    corpus.write_jsonl(records, ctx.path("identified"))
    log.info("ingested %d records", len(records))


def _screen(ctx: Context):
    records = corpus.read_jsonl(ctx.path("identified"))
    decisions = corpus.read_decisions(ctx.cfg.paths.decisions) if ctx.cfg.paths.decisions else []
    decided = {d.doc_id for d in decisions}
    # ingest hints (blank abstract) become exclusions unless a reviewer decided otherwise
    decisions += [corpus.ScreeningDecision(r.id, "exclude", r.exclusion_hint)
                  for r in records if r.exclusion_hint and r.id not in decided]
    records, counts, reasons = corpus.apply_screening(records, decisions)
    corpus.write_jsonl(records, ctx.path("screened"))
    _dump_json(ctx.path("screening"), {"counts": counts.to_json(),
                                       "exclusion_reasons": dict(sorted(Counter(reasons.values()).items())),
                                       "excluded": dict(sorted(reasons.items()))})


def _harvest(ctx: Context):
    cfg = ctx.cfg
    if cfg.open_access is None:
        raise PipelineError("harvest needs an 'open_access' provider in the config")
    cache = harvest.ResponseCache(Path(cfg.paths.cache) / "http")
    oa = harvest.Provider("open_access", cfg.open_access, cache=cache, offline=cfg.offline)
    pub = harvest.Provider("publisher", cfg.publisher, cache=cache, offline=cfg.offline) if cfg.publisher else None
    records = corpus.read_jsonl(ctx.path("screened"))
    result = harvest.harvest_all(records, oa, pub, cfg.publisher_prefixes, ctx.workers,
                                 pdf_text_dir=cfg.paths.pdf_text)
    corpus.write_jsonl(result.records, ctx.path("harvested"))
    harvest.write_ledger(result.ledger, ctx.path("ledger"))
    _dump_json(ctx.path("prisma_counts"), result.counts.to_json())
    log.info("harvest: %s", result.counts)


def _clean(ctx: Context):
    out = []
    for r in corpus.read_jsonl(ctx.path("harvested")):
        r.abstract = corpus.clean_abstract(r.abstract)
        if r.fulltext is not None:
            r.fulltext.cleaned_text = corpus.clean_fulltext(r.fulltext.cleaned_text)
        out.append(r)
    corpus.write_jsonl(out, ctx.path("corpus"))


def _embedding_provider(cfg: RunConfig):
    e = cfg.embedding
    if e.provider == "hashing":
        return embedding.HashingProvider(e.dim, model_id=e.model_id)
    token = os.environ.get(e.token_env) if e.token_env else None
    return embedding.RemoteProvider(e.endpoint, e.model_id or embedding.DEFAULT_MODEL_ID, e.dim, token=token)


def _embed(ctx: Context):
    docs = ctx.fulltext_docs()
    provider = _embedding_provider(ctx.cfg)
    cache = embedding.VectorCache(Path(ctx.cfg.paths.cache) / "vectors")
    if docs:
        mat = embedding.embed_batch([ctx.doc_text(r) for r in docs], provider, ctx.cfg.embedding.batch_size, cache,
                                    [r.id for r in docs])
        values = mat.values
    else:
        values = np.zeros((0, provider.dim))
    np.save(ctx.path("embeddings"), values.astype(np.float64), allow_pickle=False)
    _dump_json(ctx.path("embedding_ids"), {"model_id": provider.model_id, "doc_ids": [r.id for r in docs]})


def _reduce(ctx: Context):
    X = np.load(ctx.path("embeddings"), allow_pickle=False)
    p10 = manifold.project(X, ctx.cfg.projection)
    p2 = manifold.project(X, ctx.cfg.projection_2d)
    np.save(ctx.path("proj10"), p10.coords, allow_pickle=False)
    np.save(ctx.path("proj2"), p2.coords, allow_pickle=False)
    ids = _load_json(ctx.path("embedding_ids"))["doc_ids"]
    _write_projection_csv(ctx.path("proj10_csv"), ids, p10.coords)
    _write_projection_csv(ctx.path("proj2_csv"), ids, p2.coords)
    _dump_json(ctx.path("projection_meta"), {"clustering_run": p10.snapshot(), "scatter_run": p2.snapshot(),
                                             "illustrative_2d": True})


def _write_projection_csv(path: Path, ids, coords) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doc_id"] + [f"c{j}" for j in range(coords.shape[1])])
        for doc_id, row in zip(ids, coords):
            w.writerow([doc_id] + [repr(float(v)) for v in row])


def _read_clusters(ctx: Context):
    ids, labels, probs = [], [], []
    with ctx.path("clusters").open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["doc_id"])
            labels.append(int(row["label"]))
            probs.append(float(row["probability"]))
    return ids, densclust.ClusterAssignment(np.array(labels, dtype=np.int64), np.array(probs))


def _cluster(ctx: Context):
    P = np.load(ctx.path("proj10"), allow_pickle=False)
    ids = _load_json(ctx.path("embedding_ids"))["doc_ids"]
    if len(ids) >= 2:
        assignment, tree = densclust.cluster(P, ctx.cfg.clustering)
        tree_json = tree.to_json()
    else:
        assignment = densclust.ClusterAssignment(np.full(len(ids), -1), np.zeros(len(ids)))
        tree_json = json.dumps({"n_points": len(ids), "rows": []}, indent=1)
    with ctx.path("clusters").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doc_id", "label", "probability"])
        for doc_id, lab, p in zip(ids, assignment.labels, assignment.probabilities):
            w.writerow([doc_id, int(lab), repr(float(p))])
    ctx.path("tree").write_text(tree_json + "\n", encoding="utf-8")
    log.info("clusters: %d, noise: %d", assignment.n_clusters, int((assignment.labels < 0).sum()))


def _terms(ctx: Context):
    t = ctx.cfg.terms
    ids, assignment = _read_clusters(ctx)
    by_id = {r.id: r for r in ctx.fulltext_docs()}
    texts = [ctx.doc_text(by_id[i]) for i in ids]
    out = []
    for lab in range(assignment.n_clusters):
        members = [texts[i] for i in np.flatnonzero(assignment.labels == lab)]
        out.append({
            "cluster_id": lab,
            "size": len(members),
            "top_terms": [asdict(s) for s in termstats.tfidf_cluster_terms(members, texts, t.top_n)],
            "top_phrases": [asdict(s) for s in termstats.tfidf_cluster_phrases(members, texts, t.top_n)],
        })
    _dump_json(ctx.path("cluster_terms"), out)

    screened = ctx.screened_in_docs()
    rows = []
    if screened:
        rows = termstats.specificity_rank(_specificity_units(screened, t), t.max_terms)
    with ctx.path("specificity").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "term", "chi2", "frequency"])
        for k, s in enumerate(rows, 1):
            w.writerow([k, s.term, repr(float(s.score)), s.frequency])


def _specificity_units(records, t) -> list:
    if t.partition == "field":
        return [(termstats.phrase_terms(text), name) for r in records
                for name, text in (("title", r.title), ("abstract", r.abstract), ("keywords", "; ".join(r.keywords)))
                if text]
    start = min(r.year for r in records)
    return [(termstats.phrase_terms(_fields_text(r)), termstats.period_label(r.year, start, t.period_years))
            for r in records]


def _fields_text(r) -> str:
    return ". ".join([r.title, r.abstract] + list(r.keywords))


def _label(ctx: Context):
    ids, assignment = _read_clusters(ctx)
    by_id = {r.id: r for r in ctx.fulltext_docs()}
    top = densclust.top_members(assignment, ctx.cfg.terms.card_abstracts)
    cards = []
    for lab in sorted(top):
        abstracts = [by_id[ids[i]].abstract or by_id[ids[i]].title for i in top[lab]]
        cards.append(tasks.label_cluster(abstracts, ctx.cfg.chat.label, ctx.chat(), lab))
    tasks.write_cards_json(cards, ctx.path("cards"))


def _extract(ctx: Context):
    docs = [(r.id, r.fulltext.cleaned_text) for r in ctx.fulltext_docs()]
    records, failures = tasks.extract_all(docs, ctx.cfg.chat.extract, ctx.chat(), ctx.workers, ctx.cfg.lcia_methods)
    tasks.write_extraction_csv(records, ctx.path("extraction"))
    _dump_json(ctx.path("extraction_failures"), failures)
    if failures:
        log.warning("%d documents failed extraction", len(failures))


def _normalize(ctx: Context):
    records = tasks.read_extraction_csv(ctx.path("extraction"))
    vocab = default_vocabularies(ctx.cfg.lcia_methods)
    normalized = tasks.normalize_all(records, vocab, ctx.cfg.chat.extract, ctx.chat(), ctx.workers)
    tasks.write_normalized_csv(normalized, ctx.path("normalized"))


def label_by_year(pairs: Sequence[tuple], labels: Sequence[str]) -> dict:
    """Counts per (year, label) with every year between the extremes present, zeros included."""
    years = [y for y, _ in pairs]
    span = list(range(min(years), max(years) + 1)) if years else []
    col = {lab: j for j, lab in enumerate(labels)}
    counts = [[0] * len(labels) for _ in span]
    for year, lab in pairs:
        if lab is None:
            continue
        counts[year - span[0]][col[lab]] += 1
    return {"years": span, "labels": list(labels), "counts": counts}


def _jsonable_matrix(M) -> list:
    return [[None if (isinstance(v, float) and not np.isfinite(v)) else v for v in row] for row in
            np.asarray(M, dtype=float).tolist()]


def _stats(ctx: Context):
    cfg = ctx.cfg
    t = cfg.terms
    screened = ctx.screened_in_docs()
    trend = termstats.trend_series([(r.year, f"{r.title}. {r.abstract}") for r in screened], t.period_years,
                                   t.trend_top_k)
    year_of = {r.id: r.year for r in ctx.corpus()}
    normalized = tasks.read_normalized_csv(ctx.path("normalized"))
    lby = {
        "ai": label_by_year([(year_of[n.doc_id], group_generic(n.ai_label)) for n in normalized],
                            AI_LABELS + (OTHER,)),
        "lca_stage": label_by_year([(year_of[n.doc_id], n.lca_stage_label) for n in normalized],
                                   LCA_STAGE_LABELS + (OTHER,)),
        "lcia": label_by_year([(year_of[n.doc_id], n.lcia_label) for n in normalized],
                              tuple(cfg.lcia_methods) + (OTHER,)),
    }
    cont = None
    if cfg.paths.term_groups is not None:
        groups = _load_json(Path(cfg.paths.term_groups))
        names = list(groups)
        row = t.row_group or (names[0] if names else None)
        col = t.col_group or (names[1] if len(names) > 1 else None)
        if row not in groups or col not in groups:
            raise PipelineError(f"term groups {row!r} and {col!r} must both be in {cfg.paths.term_groups}")
        m = termstats.contingency([_fields_text(r) for r in screened], groups[row], groups[col], t.alpha)
        cont = {"row_group": row, "col_group": col, "rows": m.rows,
                "cols": m.cols, "observed": _jsonable_matrix(m.observed), "expected": _jsonable_matrix(m.expected),
                "deviation": _jsonable_matrix(m.deviation), "cell_p": _jsonable_matrix(m.cell_p),
                "significant": m.significant.astype(bool).tolist(), "chi2": float(m.chi2), "dof": int(m.dof),
                "p": float(m.p), "alpha": m.alpha, "dropped": m.dropped}
    screening = _load_json(ctx.path("screening"))
    prisma = {**_load_json(ctx.path("prisma_counts")), "exclusion_reasons": screening["exclusion_reasons"],
              "seed": cfg.seed}
    cards = {c.cluster_id: c for c in tasks.read_cards_json(ctx.path("cards"))}
    clusters = []
    for c in _load_json(ctx.path("cluster_terms")):
        card = cards.get(c["cluster_id"])
        clusters.append({"cluster_id": c["cluster_id"], "size": c["size"],
                         "title": card.title if card else "", "description": card.description if card else "",
                         "ai_summary": card.ai_summary if card else "",
                         "top_terms": [s["term"] for s in c["top_terms"]],
                         "top_phrases": [s["term"] for s in c["top_phrases"]]})
    _dump_json(ctx.path("stats"), {"seed": cfg.seed, "trend": [asdict(r) for r in trend], "label_by_year": lby,
                                   "contingency": cont, "prisma": prisma, "clusters": clusters})


def _report(ctx: Context):
    stats = _load_json(ctx.path("stats"))
    out = ctx.path("scatter").parent
    reports.emit_reports(stats, out)
    _, assignment = _read_clusters(ctx)
    coords = np.load(ctx.path("proj2"), allow_pickle=False)
    cards = tasks.read_cards_json(ctx.path("cards"))
    ctx.path("scatter").write_bytes(reports.emit_scatter(coords, assignment.labels, cards))


def _c(*names):
    def pick(cfg: RunConfig):
        snap = cfg.snapshot()
        return {n: snap[n] for n in names}
    return pick


def _chat_settings(which):
    def pick(cfg: RunConfig):
        return {"chat": {"provider": cfg.chat.provider, which: asdict(getattr(cfg.chat, which))},
                "card_abstracts": cfg.terms.card_abstracts, "lcia_methods": list(cfg.lcia_methods)}
    return pick


STAGE_TABLE = {
    "ingest": Stage("ingest", (), ("identified",), _ingest, lambda cfg: {}, lambda cfg: (cfg.paths.metadata,)),
    "screen": Stage("screen", ("identified",), ("screened", "screening"), _screen, lambda cfg: {},
                    lambda cfg: (cfg.paths.decisions,) if cfg.paths.decisions else ()),
    "harvest": Stage("harvest", ("screened",), ("harvested", "ledger", "prisma_counts"), _harvest,
                     _c("open_access", "publisher", "publisher_prefixes", "offline")),
    "clean": Stage("clean", ("harvested",), ("corpus",), _clean, lambda cfg: {}),
    "embed": Stage("embed", ("corpus",), ("embeddings", "embedding_ids"), _embed, _c("embedding")),
    "reduce": Stage("reduce", ("embeddings", "embedding_ids"),
                    ("proj10", "proj2", "proj10_csv", "proj2_csv", "projection_meta"), _reduce,
                    _c("projection", "projection_2d")),
    "cluster": Stage("cluster", ("proj10", "embedding_ids"), ("clusters", "tree"), _cluster, _c("clustering")),
    "terms": Stage("terms", ("clusters", "corpus"), ("cluster_terms", "specificity"), _terms, _c("terms", "embedding")),
    "label": Stage("label", ("clusters", "corpus"), ("cards",), _label, _chat_settings("label")),
    "extract": Stage("extract", ("corpus",), ("extraction", "extraction_failures"), _extract,
                     _chat_settings("extract")),
    "normalize": Stage("normalize", ("extraction",), ("normalized",), _normalize, _chat_settings("extract")),
    "stats": Stage("stats", ("corpus", "normalized", "cards", "cluster_terms", "screening", "prisma_counts"),
                   ("stats",), _stats, _c("terms", "lcia_methods", "seed"),
                   lambda cfg: (cfg.paths.term_groups,) if cfg.paths.term_groups else ()),
    "report": Stage("report", ("stats", "clusters", "proj2", "cards"),
                    ("scatter",) + tuple(f"report:{f}" for f in reports.REPORT_FILES), _report, lambda cfg: {}),
}

PRODUCER = {a: s.name for s in STAGE_TABLE.values() for a in s.produces}


# ---------------------------------------------------------------------------
# manifests

def _rel(ctx: Context, key: str) -> str:
    return f"{ARTIFACT_DIR}/{ARTIFACTS[key]}"


def _external_hashes(ctx: Context, stage: Stage) -> dict:
    out = {}
    for p in stage.external(ctx.cfg):
        p = Path(p)
        out[f"external:{p.name}"] = sha256_file(p)
    return out


def _fingerprint(stage: Stage, settings: dict, inputs: dict) -> str:
    blob = json.dumps({"stage": stage.name, "tool_version": __version__, "settings": settings, "inputs": inputs},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def read_manifest(out_dir) -> Optional[dict]:
    p = Path(out_dir) / MANIFEST
    return _load_json(p) if p.is_file() else None


def _write_manifest(ctx: Context, stages: dict, complete: bool) -> dict:
    manifest = {
        "tool_version": __version__,
        "seed": ctx.cfg.seed,
        "config": _scrub(ctx.cfg.snapshot()),
        "complete": complete,
        "stages": {name: stages[name] for name in STAGES if name in stages},
    }
    ctx.root.mkdir(parents=True, exist_ok=True)
    _dump_json(ctx.root / MANIFEST, manifest)
    return manifest


def _outputs_intact(ctx: Context, entry: dict) -> bool:
    for rel, digest in entry.get("outputs", {}).items():
        p = ctx.root / rel
        if not p.is_file() or sha256_file(p) != digest:
            return False
    return True


def run(cfg: RunConfig, stages: Sequence[str] = STAGES, resume: bool = False,
        workers: Optional[int] = None) -> dict:
    """Run ``stages`` in pipeline order and return the manifest.

    With ``resume``, a stage whose fingerprint (settings plus input hashes)
    matches the previous manifest and whose outputs are intact is skipped.
    A failing stage aborts the run after a partial manifest is written.
    """
    unknown = [s for s in stages if s not in STAGE_TABLE]
    if unknown:
        raise PipelineError(f"unknown stages {unknown}; choose from {list(STAGES)}")
    ctx = Context(cfg, workers)
    previous = read_manifest(ctx.root) or {}
    entries = dict(previous.get("stages", {}))
    wanted = [s for s in STAGES if s in set(stages)]
    for name in wanted:
        stage = STAGE_TABLE[name]
        for art in stage.requires:
            if not (ctx.art / ARTIFACTS[art]).is_file():
                raise DependencyError(name, PRODUCER[art], ARTIFACTS[art])
        inputs = {_rel(ctx, a): sha256_file(ctx.art / ARTIFACTS[a]) for a in stage.requires}
        inputs.update(_external_hashes(ctx, stage))
        settings = stage.settings(cfg)
        fp = _fingerprint(stage, settings, inputs)
        old = previous.get("stages", {}).get(name)
        if resume and old and old.get("status") == "ok" and old.get("fingerprint") == fp and _outputs_intact(ctx, old):
            log.info("stage %s unchanged, skipped", name)
            entries[name] = {**old, "skipped": True}
            continue
        started = _now()
        log.info("stage %s running", name)
        try:
            stage.run(ctx)
        except Exception as exc:
            entries[name] = {"status": "failed", "fingerprint": fp, "inputs": inputs, "outputs": {},
                             "started": started, "finished": _now(), "error": f"{type(exc).__name__}: {exc}"}
            for later in STAGES[STAGES.index(name) + 1:]:
                entries.pop(later, None)
            _write_manifest(ctx, entries, complete=False)
            raise StageError(name, exc) from exc
        outputs = {_rel(ctx, a): sha256_file(ctx.art / ARTIFACTS[a]) for a in stage.produces}
        entries[name] = {"status": "ok", "fingerprint": fp, "inputs": inputs, "outputs": outputs,
                         "started": started, "finished": _now(), "skipped": False, "seed": cfg.seed}
    complete = all(entries.get(s, {}).get("status") == "ok" for s in STAGES)
    return _write_manifest(ctx, entries, complete)


def verify_manifest(out_dir) -> list:
    """Recompute every recorded output hash; returns a list of problems (empty when clean)."""
    root = Path(out_dir)
    manifest = read_manifest(root)
    if manifest is None:
        return [f"no {MANIFEST} in {root}"]
    problems = []
    tracked = set()
    for name, entry in manifest.get("stages", {}).items():
        if entry.get("status") != "ok":
            problems.append(f"{name}: status {entry.get('status')}")
        for rel, digest in entry.get("outputs", {}).items():
            tracked.add(rel)
            p = root / rel
            if not p.is_file():
                problems.append(f"{rel}: missing")
            elif sha256_file(p) != digest:
                problems.append(f"{rel}: hash mismatch")
    art = root / ARTIFACT_DIR
    if art.is_dir():
        for p in sorted(art.rglob("*")):
            rel = p.relative_to(root).as_posix()
            if p.is_file() and rel not in tracked:
                problems.append(f"{rel}: not in manifest")
    return problems
