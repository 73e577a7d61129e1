import csv
import json
import shutil

import numpy as np
import pytest

from litscape import cli, pipeline, reports
from litscape.config import ConfigError, load_config
from litscape.llmextract.vocab import AI_LABELS, OTHER
from litscape.minicorpus import init_demo
from litscape.pipeline import DependencyError, StageError


def _demo(tmp_path, name="demo", **overrides):
    cfg_path = init_demo(tmp_path / name)
    if overrides:
        data = json.loads(cfg_path.read_text())
        for section, values in overrides.items():
            if isinstance(values, dict):
                data.setdefault(section, {}).update(values)
            else:
                data[section] = values
        cfg_path.write_text(json.dumps(data))
    return cfg_path


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg_path = _demo(root)
    cfg = load_config(cfg_path)
    manifest = pipeline.run(cfg)
    return cfg, manifest, cfg.paths.outputs / pipeline.ARTIFACT_DIR


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_full_run_completes(demo_run):
    cfg, manifest, art = demo_run
    assert manifest["complete"] is True
    assert [s for s in pipeline.STAGES if manifest["stages"][s]["status"] == "ok"] == list(pipeline.STAGES)
    assert pipeline.verify_manifest(cfg.paths.outputs) == []
    assert all(manifest["stages"][s]["seed"] == 42 for s in pipeline.STAGES)


def test_demo_clusters_and_cards(demo_run):
    _, _, art = demo_run
    cards = json.loads((art / "llm/cluster_cards.json").read_text())
    assert [c["title"] for c in cards] == [
        "Sustainable Construction Materials and Processes Optimization",
        "Wastewater Treatment Emission Modeling and Process Control",
        "Battery and Renewable Energy System Footprint Prediction",
    ]
    labels = [int(r["label"]) for r in _read_csv(art / "clusters/assignments.csv")]
    assert sorted(set(labels) - {-1}) == [0, 1, 2]


def test_projection_tables_match_arrays(demo_run):
    _, _, art = demo_run
    ids = json.loads((art / "vectors/embedding_ids.json").read_text())["doc_ids"]
    for name, dim in (("projection_10d", 10), ("projection_2d", 2)):
        arr = np.load(art / f"vectors/{name}.npy")
        rows = _read_csv(art / f"vectors/{name}.csv")
        assert arr.shape == (len(ids), dim)
        assert [r["doc_id"] for r in rows] == ids
        assert np.array_equal(np.array([[float(r[f"c{j}"]) for j in range(dim)] for r in rows]), arr)


def test_prisma_report(demo_run):
    _, _, art = demo_run
    prisma = json.loads((art / "reports/prisma.json").read_text())
    assert prisma["open_access_retrieved"] + prisma["publisher_retrieved"] == prisma["fulltext_total"]
    assert prisma["identified"] - sum(prisma["exclusion_reasons"].values()) == prisma["screened_included"]


def test_extraction_and_normalization_outputs(demo_run):
    _, _, art = demo_run
    extraction = _read_csv(art / "llm/extraction.csv")
    normalized = _read_csv(art / "llm/normalized.csv")
    assert [r["doc_id"] for r in extraction] == [r["doc_id"] for r in normalized]
    assert all(len(r) == 8 for r in extraction)
    allowed = set(AI_LABELS) | {OTHER, "None"}
    assert {r["ai_label"] for r in normalized} <= allowed


def test_label_tables_fill_every_year(demo_run):
    _, _, art = demo_run
    rows = _read_csv(art / "reports/ai_topics_by_year.csv")
    years = [int(r["year"]) for r in rows]
    assert years == list(range(years[0], years[-1] + 1))
    assert list(rows[0]) == ["year", *AI_LABELS, OTHER]


def test_label_by_year_zero_fill_and_generic_grouping():
    table = pipeline.label_by_year([(2018, "ANN"), (2021, "ANN"), (2021, None)], ("ANN", "Other"))
    assert table["years"] == [2018, 2019, 2020, 2021]
    assert table["counts"] == [[1, 0], [0, 0], [0, 0], [1, 0]]


def test_contingency_uses_first_two_groups(demo_run):
    _, _, art = demo_run
    stats = json.loads((art / "stats/stats.json").read_text())
    cont = stats["contingency"]
    assert (cont["row_group"], cont["col_group"]) == ("AI methods", "Application terms")
    obs = np.array(cont["observed"])
    assert obs.shape == (len(cont["rows"]), len(cont["cols"]))
    rows = _read_csv(art / "reports/contingency.csv")
    assert len(rows) == obs.size


def test_trend_heights_per_period(demo_run):
    _, _, art = demo_run
    sums = {}
    for r in _read_csv(art / "reports/trend.csv"):
        sums[r["period"]] = sums.get(r["period"], 0.0) + float(r["height"] or 0)
    assert sums and all(abs(s - 1.0) <= 1e-12 for s in sums.values() if s > 0)


def test_resume_skips_unchanged(demo_run):
    cfg, _, _ = demo_run
    manifest = pipeline.run(cfg, resume=True)
    assert all(manifest["stages"][s]["skipped"] for s in pipeline.STAGES)


def test_resume_reruns_after_setting_change(tmp_path):
    cfg = load_config(_demo(tmp_path))
    pipeline.run(cfg)
    cfg.terms.top_n = 5
    manifest = pipeline.run(cfg, resume=True)
    rerun = {s for s in pipeline.STAGES if not manifest["stages"][s]["skipped"]}
    assert rerun == {"terms", "stats", "report"}


def test_verify_detects_tampering(tmp_path):
    cfg = load_config(_demo(tmp_path))
    pipeline.run(cfg)
    art = cfg.paths.outputs / pipeline.ARTIFACT_DIR
    (art / "reports/trend.csv").write_text("edited\n")
    (art / "stray.txt").write_text("x")
    problems = pipeline.verify_manifest(cfg.paths.outputs)
    assert "artifacts/reports/trend.csv: hash mismatch" in problems
    assert "artifacts/stray.txt: not in manifest" in problems
    assert pipeline.verify_manifest(tmp_path / "nowhere") != []


def test_cluster_without_reduce_names_the_missing_stage(tmp_path):
    cfg = load_config(_demo(tmp_path))
    pipeline.run(cfg, stages=["ingest", "screen", "harvest", "clean", "embed"])
    with pytest.raises(DependencyError) as e:
        pipeline.run(cfg, stages=["cluster"])
    assert e.value.missing_stage == "reduce" and "reduce" in str(e.value)


def test_failure_writes_partial_manifest(tmp_path):
    cfg_path = _demo(tmp_path, terms={"row_group": "no such group"})
    cfg = load_config(cfg_path)
    with pytest.raises(StageError) as e:
        pipeline.run(cfg)
    assert e.value.stage == "stats"
    manifest = pipeline.read_manifest(cfg.paths.outputs)
    assert manifest["complete"] is False
    assert manifest["stages"]["stats"]["status"] == "failed" and "report" not in manifest["stages"]
    assert manifest["stages"]["normalize"]["status"] == "ok"


def test_unknown_stage():
    with pytest.raises(pipeline.PipelineError):
        pipeline.run(None, stages=["bogus"])


# ---------------------------------------------------------------------------
# scatter

def _cards(n):
    return {i: f"Topic {i}" for i in range(n)}


def test_scatter_legend_entries():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(-1, 8), 5)
    svg = reports.emit_scatter(rng.normal(size=(len(labels), 2)), labels, _cards(8)).decode()
    for i in range(8):
        assert f'id="legend-entry-{i}"' in svg
    assert 'id="legend-noise"' in svg and reports.NOISE_COLOR in svg


def test_scatter_is_byte_stable():
    rng = np.random.default_rng(1)
    coords, labels = rng.normal(size=(30, 2)), rng.integers(-1, 3, 30)
    assert reports.emit_scatter(coords, labels, _cards(3)) == reports.emit_scatter(coords, labels, _cards(3))


def test_scatter_empty_and_bad_shapes():
    svg = reports.emit_scatter(np.zeros((0, 2)), np.zeros(0, dtype=int))
    assert svg.startswith(b"<?xml") and b"</svg>" in svg
    with pytest.raises(reports.ReportError):
        reports.emit_scatter(np.zeros((4, 3)), np.zeros(4, dtype=int))
    with pytest.raises(reports.ReportError):
        reports.emit_scatter(np.zeros((4, 2)), np.zeros(3, dtype=int))


def test_reports_require_stats_keys(tmp_path):
    with pytest.raises(reports.ReportError):
        reports.emit_reports({"trend": []}, tmp_path)


# ---------------------------------------------------------------------------
# config and CLI

def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    for payload in ("{", "[]", '{"paths": {}}', '{"paths": {"metadata": "m", "outputs": "o", "cache": "c"}}'):
        bad.write_text(payload)
        with pytest.raises(ConfigError):
            load_config(bad)
    cfg_path = _demo(tmp_path, clustering={"min_cluster_size": 1})
    with pytest.raises(ConfigError):
        load_config(cfg_path)


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_demo(tmp_path, surprise=1))


def test_cli_exit_codes(tmp_path, capsys):
    cfg = str(_demo(tmp_path))
    assert cli.main(["all"]) == cli.EXIT_CONFIG
    assert cli.main(["cluster", "--config", cfg]) == cli.EXIT_DEPENDENCY
    assert cli.main(["verify", "--config", cfg]) == cli.EXIT_VERIFY
    assert cli.main(["all", "--config", cfg]) == cli.EXIT_OK
    assert cli.main(["verify", "--config", cfg]) == cli.EXIT_OK
    assert cli.main(["all", "--config", cfg, "--resume"]) == cli.EXIT_OK
    assert cli.main(["init-demo", str(tmp_path / "demo")]) == cli.EXIT_CONFIG


def test_cli_stage_failure_exit(tmp_path):
    cfg = str(_demo(tmp_path, terms={"row_group": "absent"}))
    assert cli.main(["all", "--config", cfg]) == cli.EXIT_STAGE


def test_cli_transport_failure_exit(tmp_path):
    cfg_path = _demo(tmp_path)
    shutil.rmtree(cfg_path.parent / "transcripts")
    (cfg_path.parent / "transcripts").mkdir()
    assert cli.main(["all", "--config", str(cfg_path)]) == cli.EXIT_TRANSPORT


def test_cli_seed_override(tmp_path):
    # a new seed moves the clusters, so card prompts change and must be answered live
    cfg = str(_demo(tmp_path, chat={"provider": "rule", "transcript_mode": "replay_or_record"}))
    assert cli.main(["all", "--config", cfg, "--seed", "7"]) == cli.EXIT_OK
    manifest = json.loads((tmp_path / "demo/out/manifest.json").read_text())
    assert manifest["stages"]["reduce"]["seed"] == 7


def test_cli_providers_override(tmp_path):
    cfg = str(_demo(tmp_path))
    good = tmp_path / "providers.json"
    good.write_text(json.dumps({"publisher": {"base_url": "https://example.invalid/api", "rate_limit": 2.0}}))
    updated = cli.apply_providers(load_config(cfg), good)
    assert updated.publisher.base_url == "https://example.invalid/api" and updated.open_access is not None
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"embedding": {}}))
    assert cli.main(["harvest", "--config", cfg, "--providers", str(bad)]) == cli.EXIT_CONFIG
    bad.write_text(json.dumps({"publisher": {"base_url": "x", "rate_limit": -1}}))
    assert cli.main(["harvest", "--config", cfg, "--providers", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["ingest", "--config", cfg, "--providers", str(good)]) == cli.EXIT_OK


def test_init_demo_prints_config(tmp_path, capsys):
    assert cli.main(["init-demo", str(tmp_path / "d")]) == cli.EXIT_OK
    assert capsys.readouterr().out.strip().endswith("config.json")
    assert cli.main(["init-demo"]) == cli.EXIT_CONFIG


def test_specificity_partition_by_field(tmp_path):
    cfg = load_config(_demo(tmp_path, terms={"partition": "field"}))
    pipeline.run(cfg, stages=pipeline.STAGES[:pipeline.STAGES.index("terms") + 1])
    rows = _read_csv(cfg.paths.outputs / "artifacts/terms/specificity.csv")
    assert rows and [int(r["rank"]) for r in rows] == list(range(1, len(rows) + 1))
    with pytest.raises(ConfigError):
        load_config(_demo(tmp_path, name="bad", terms={"partition": "venue"}))
