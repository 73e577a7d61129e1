"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line; the lines are printed in
the pytest terminal summary and also when this file is run as a script.
"""

import hashlib
import json
import random
import time
from pathlib import Path

import numpy as np
import pytest

from litscape import corpus, densclust, manifold, metrics, pipeline, termstats
from litscape.config import load_config
from litscape.densclust import ClusterConfig
from litscape.llmextract import FIELD_KEYS, ParseError, TranscriptCache, default_vocabularies, parse_lines, tasks
from litscape.manifold import ProjectionConfig
from litscape.minicorpus import init_demo

from conftest import gaussian_blobs, run_funnel_fixture
from oracles import adjusted_rand_oracle, chi_square_oracle, hdbscan_leaf_oracle, trustworthiness_oracle

LINES = []


def report(n, ok, detail):
    LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def chi_tables(count, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        r, c = rng.integers(2, 7, size=2)
        t = rng.integers(0, rng.choice([5, 30, 200, 5000]), size=(r, c))
        if t.sum(0).all() and t.sum(1).all():
            out.append(t)
    return out


def small_sets(count, seed=99):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        mcs = int(rng.choice([3, 4]))
        n = int(rng.integers(mcs, 13))
        centers = rng.uniform(-5, 5, size=(int(rng.integers(1, 4)), 2))
        pts = centers[rng.integers(0, len(centers), n)] + rng.normal(scale=rng.uniform(0.2, 2.0), size=(n, 2))
        yield pts, mcs


def memberships(labels):
    groups = {}
    for i, l in enumerate(labels):
        if l >= 0:
            groups.setdefault(int(l), set()).add(i)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def test_criterion_1_chi_square():
    tables = chi_tables(1000)
    t0 = time.perf_counter()
    ours = [termstats.chi_square(t) for t in tables]
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for t, (stat, dof, p) in zip(tables, ours):
        o_stat, o_dof, o_p = chi_square_oracle(t)
        assert dof == o_dof
        worst = max(worst, abs(stat - o_stat) / max(1.0, o_stat), abs(p - o_p))
    known = termstats.chi_square([[10, 20], [30, 40]])[0]
    ok = worst <= 1e-9 and abs(known - 0.79365) <= 1e-5 and elapsed < 5.0
    report(1, ok, f"worst deviation {worst:.2e}, [[10,20],[30,40]] -> {known:.5f}, {elapsed:.2f}s for 1000 tables")


def test_criterion_2_hdbscan_memberships():
    sets = list(small_sets(1000))
    t0 = time.perf_counter()
    labels = [densclust.cluster(pts, ClusterConfig(min_cluster_size=mcs))[0].labels for pts, mcs in sets]
    elapsed = time.perf_counter() - t0
    mismatches = sum(memberships(l) != hdbscan_leaf_oracle(pts, mcs) for l, (pts, mcs) in zip(labels, sets))
    ok = mismatches == 0 and elapsed < 30.0
    report(2, ok, f"{mismatches} mismatches in 1000 sets, {elapsed:.2f}s")


@pytest.fixture(scope="module")
def blob_projection():
    X, truth = gaussian_blobs()
    t0 = time.perf_counter()
    proj = manifold.project(X, ProjectionConfig())
    return X, truth, proj, time.perf_counter() - t0


def test_criterion_3_blob_recovery(blob_projection):
    X, truth, proj, t_proj = blob_projection
    t0 = time.perf_counter()
    a, _ = densclust.cluster(proj.coords, ClusterConfig(min_cluster_size=15, min_samples=1, selection="leaf"))
    elapsed = t_proj + time.perf_counter() - t0
    ari = adjusted_rand_oracle(truth, a.labels)
    assert ari == pytest.approx(metrics.adjusted_rand_index(truth, a.labels), abs=1e-12)
    noise = float(np.mean(a.labels < 0))
    ok = a.n_clusters == 3 and ari >= 0.95 and noise <= 0.10 and elapsed < 60.0
    report(3, ok, f"{a.n_clusters} clusters, ARI {ari:.4f}, noise {noise:.1%}, {elapsed:.2f}s")


def test_criterion_4_projection_quality(blob_projection):
    X, _, proj, _ = blob_projection
    tw = trustworthiness_oracle(X, proj.coords, 10)
    assert tw == pytest.approx(metrics.trustworthiness(X, proj.coords, 10), abs=1e-12)
    graph = manifold.knn_graph(X, 10, "cosine")
    fss = manifold.fuzzy_simplicial_set(graph, 10)
    W = fss.weights.toarray()
    symmetric = bool(np.array_equal(W, W.T))
    free = np.setdiff1d(np.arange(len(X)), fss.clamped)
    residual = float(fss.residuals[free].max())
    again = manifold.project(X, ProjectionConfig()).coords
    same_bits = proj.coords.tobytes() == again.tobytes()
    ok = tw >= 0.90 and symmetric and residual <= 1e-5 and same_bits
    report(4, ok, f"trustworthiness {tw:.4f}, symmetric {symmetric}, max sigma residual {residual:.1e} "
                  f"({len(fss.clamped)} clamped), same-seed bits equal {same_bits}")


def test_criterion_5_tfidf_and_trends():
    toy = ["solar energy storage", "solar panel", "wind energy"]
    idf2, idf1 = np.log(4 / 3) + 1, np.log(2) + 1
    hand = {"solar": (1 / 3 + 1 / 2) * idf2 / 2, "energy": (1 / 3) * idf2 / 2,
            "storage": (1 / 3) * idf1 / 2, "panel": (1 / 2) * idf1 / 2}
    got = {s.term: s.score for s in termstats.tfidf_cluster_terms(toy[:2], toy, top_n=99)}
    tfidf_err = max(abs(got[t] - v) for t, v in hand.items()) if got.keys() == hand.keys() else float("inf")

    rng = random.Random(5)
    words = ["machine learning", "life cycle", "neural network", "carbon footprint", "genetic algorithm",
             "random forest", "concrete", "battery"]
    docs = [(rng.randint(2000, 2025), " and ".join(rng.sample(words, rng.randint(1, 4)))) for _ in range(400)]
    docs += [(2040, "machine learning")]  # leaves empty periods between
    sums = {}
    for row in termstats.trend_series(docs, period_years=4, top_k=6):
        sums[row.period] = sums.get(row.period, 0.0) + row.height
    nonempty = [s for s in sums.values() if s > 0]
    trend_err = max(abs(s - 1.0) for s in nonempty)
    ok = tfidf_err <= 1e-12 and trend_err <= 1e-12 and len(nonempty) < len(sums)
    report(5, ok, f"TF-IDF max error {tfidf_err:.1e}, trend sum error {trend_err:.1e} over {len(nonempty)} "
                  f"non-empty periods ({len(sums) - len(nonempty)} empty)")


_FRAGMENTS = ["Title", "Description", "AI", *FIELD_KEYS, ":", ": ", " ", "\n", "\r\n", "\n\n", "**", "- ", "* ",
              "1. ", "```", "Sure! Here you go:", "Let me know", "None", "value", "é", "\x00", "\t", " ",
              "::", "AI/ML", "LCA", "﻿"]


def _fuzz_input(rng):
    kind = rng.random()
    if kind < 0.05:
        return rng.choice([None, 3, 2.5, [], {}, b"\xff\xfe", bytearray(b"a\nb")])
    if kind < 0.35:
        return "".join(chr(rng.randint(0, 0x2FFF)) for _ in range(rng.randint(0, 60)))
    return "".join(rng.choice(_FRAGMENTS) for _ in range(rng.randint(0, 40)))


def test_criterion_6_parser_fuzz():
    rng = random.Random(6)
    shapes = ((None, 3), (("Title", "Description", "AI"), 3), (FIELD_KEYS, 7))
    crashes, typed = [], 0
    t0 = time.perf_counter()
    for i in range(100_000):
        keys, n = shapes[i % 3]
        payload = _fuzz_input(rng)
        try:
            out = parse_lines(payload, n, keys)
            if len(out) != n:
                crashes.append((payload, "wrong length"))
        except ParseError:
            typed += 1
        except Exception as exc:  # anything untyped is a crash
            crashes.append((payload, repr(exc)))
    elapsed = time.perf_counter() - t0

    three = parse_lines("Title: Concrete surrogates\nDescription: Mix design papers.\nAI: Neural nets.", 3,
                        ("Title", "Description", "AI"))
    seven_text = "\n".join(f"{k}: v{i}" for i, k in enumerate(FIELD_KEYS))
    seven = parse_lines(seven_text, 7, FIELD_KEYS)
    fixtures = three == ["Concrete surrogates", "Mix design papers.", "Neural nets."] and \
        seven == [f"v{i}" for i in range(7)]
    ok = not crashes and fixtures
    report(6, ok, f"100000 inputs, {len(crashes)} crashes, {typed} typed errors, fixtures exact {fixtures}, "
                  f"{elapsed:.1f}s")


class _Tap:
    """Pass-through that keeps every response, keyed by the last prompt."""

    def __init__(self, inner):
        self.inner = inner
        self.seen = {}

    def complete(self, messages, cfg):
        out = self.inner.complete(messages, cfg)
        self.seen[messages[-1]["content"]] = out
        return out


def test_criterion_7_recorded_extraction(tmp_path):
    cfg = load_config(init_demo(tmp_path / "demo"))
    pipeline.run(cfg, stages=pipeline.STAGES[:pipeline.STAGES.index("normalize") + 1])
    art = cfg.paths.outputs / pipeline.ARTIFACT_DIR
    records = {r.doc_id: r for r in tasks.read_extraction_csv(art / "llm/extraction.csv")}
    failures = json.loads((art / "llm/extraction_failures.json").read_text())
    docs = [r for r in corpus.read_jsonl(art / "records/corpus.jsonl") if r.stage is corpus.Stage.FULLTEXT_OK]

    # replay the same transcripts and compare each raw reply against the stored record
    tap = _Tap(TranscriptCache(cfg.paths.transcripts, mode="replay"))
    for d in docs:
        tasks.extract_fields(d.fulltext.cleaned_text, cfg.chat.extract, tap, d.id, cfg.lcia_methods)
    seven_fields = all(len(r.fields()) == 7 for r in records.values()) and len(records) == len(docs)
    none_seen = none_ok = mismatched = 0
    for d in docs:
        raw = tap.seen[tasks.extraction_prompt(d.fulltext.cleaned_text, cfg.lcia_methods)]
        values = parse_lines(raw, 7, FIELD_KEYS)
        for v, stored in zip(values, records[d.id].fields()):
            if v == "None":
                none_seen += 1
                none_ok += stored is None
            elif stored != v:
                mismatched += 1

    vocab = default_vocabularies(cfg.lcia_methods)
    normalized = tasks.read_normalized_csv(art / "llm/normalized.csv")
    labels = [(n.ai_label, vocab["ai"]) for n in normalized] + \
        [(n.lca_stage_label, vocab["lca_stage"]) for n in normalized] + \
        [(n.lcia_label, vocab["lcia"]) for n in normalized]
    present = [(l, v) for l, v in labels if l is not None]
    in_vocab = sum(l in v.allowed() for l, v in present)
    ok = (seven_fields and not failures and not mismatched and none_seen > 0 and none_ok == none_seen
          and in_vocab == len(present) and len(present) > 0)
    report(7, ok, f"{len(records)} records with 7 fields, {none_ok}/{none_seen} 'None' replies absent, "
                  f"{in_vocab}/{len(present)} labels in vocabulary")


def test_criterion_8_prisma_funnel():
    c = run_funnel_fixture().counts
    ok = (c.open_access_retrieved, c.publisher_retrieved, c.fulltext_total) == (72, 137, 209)
    report(8, ok, f"{c.open_access_retrieved} + {c.publisher_retrieved} = {c.fulltext_total}")


def _tree_digest(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_reproducible_runs(tmp_path):
    t0 = time.perf_counter()
    trees = []
    for name in ("first", "second"):
        cfg = load_config(init_demo(tmp_path / name))
        manifest = pipeline.run(cfg)
        assert manifest["complete"]
        trees.append(_tree_digest(cfg.paths.outputs / pipeline.ARTIFACT_DIR))
    elapsed = time.perf_counter() - t0
    differing = sorted(k for k in trees[0].keys() | trees[1].keys() if trees[0].get(k) != trees[1].get(k))
    ok = not differing and elapsed < 300.0
    report(9, ok, f"{len(trees[0])} artifacts, {len(differing)} differ, {elapsed:.1f}s for two runs")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
