"""Builder for the bundled synthetic demo corpus.

Three planted topics (construction materials, wastewater treatment, energy
storage and generation), a screening file, an offline harvest cache holding
resolver answers, plain-text open-access documents and publisher XML, and
transcripts recorded from :class:`RuleChatModel`.
"""

from __future__ import annotations

import csv
import json
import random
import shutil
from importlib import resources
from pathlib import Path
from xml.sax.saxutils import escape

from .harvest import ResponseCache

OA_BASE = "https://oa-resolver.invalid/v2"
PUBLISHER_BASE = "https://publisher-api.invalid/content/article/doi"
DOC_BASE = "https://repository.invalid/files"

TOPICS = {
    "construction": {
        "subjects": ("recycled aggregate concrete", "geopolymer concrete binders", "cross-laminated timber buildings",
                     "asphalt pavement maintenance", "precast concrete building components",
                     "cement clinker substitution", "masonry wall assemblies", "low-carbon concrete mix design"),
        "terms": ("compressive strength", "embodied carbon", "fly ash", "blast furnace slag", "binder content",
                  "curing conditions", "building envelope", "construction waste", "concrete mix", "cement content"),
        "metrics": ("global warming potential", "embodied carbon", "energy consumption"),
        "venue": "Journal of Building Materials",
        "keywords": "concrete; construction; building materials",
    },
    "wastewater": {
        "subjects": ("activated sludge plants", "sewage sludge incineration", "anaerobic digestion of sewage sludge",
                     "nutrient removal in wastewater treatment", "constructed wetlands for effluent polishing",
                     "membrane bioreactors", "aeration control in wastewater plants", "effluent reuse schemes"),
        "terms": ("nitrous oxide emissions", "influent flow", "dissolved oxygen", "biogas yield", "nitrogen removal",
                  "chemical oxygen demand", "sludge retention time", "effluent quality", "aeration energy",
                  "wastewater treatment plant"),
        "metrics": ("greenhouse gas emissions", "eutrophication", "energy consumption"),
        "venue": "Water Systems Research",
        "keywords": "wastewater; sludge; treatment plant",
    },
    "energy": {
        "subjects": ("lithium-ion battery packs", "photovoltaic modules", "grid-scale battery storage",
                     "wind turbine blades", "residential solar photovoltaic systems", "electric vehicle batteries",
                     "battery recycling routes", "solar electricity supply"),
        "terms": ("state of charge", "cell chemistry", "module efficiency", "electricity mix", "capacity fade",
                  "cathode materials", "solar irradiance", "grid emission factors", "battery pack",
                  "photovoltaic panel"),
        "metrics": ("carbon footprint", "acidification", "cumulative energy demand"),
        "venue": "Energy Systems and Sustainability",
        "keywords": "battery; photovoltaic; electricity",
    },
}

AI_METHODS = ("artificial neural network", "random forest", "support vector regression", "gradient boosting",
              "deep neural network", "gaussian process regression", "kriging", "genetic algorithm",
              "reinforcement learning", "large language model", "principal component analysis",
              "multiple linear regression", "machine learning")
LCIA_METHODS = ("ReCiPe", "TRACI", None, "CML", "Environmental Footprint", "IMPACT 2002+", None, "IPCC", "ILCD")
STAGE_SENTENCES = (
    "The functional unit and the system boundary were fixed before modelling.",
    "A life cycle inventory was compiled from plant records and background databases.",
    "The impact assessment applied characterization factors to every inventory flow.",
    "A sensitivity analysis tested how the conclusions depend on the main assumptions.",
)
TASKS = ("predict", "optimize", "estimate", "classify", "forecast")

N_PER_TOPIC = 16
YEARS = (2016, 2017, 2018, 2019, 2020, 2020, 2021, 2021, 2022, 2022, 2023, 2023, 2024, 2024, 2024, 2023)


def _sentence_pool(topic: dict, rng: random.Random, ai: str, task: str, lcia, subject: str) -> list:
    t = topic["terms"]
    pick = lambda: rng.choice(t)
    s = [
        f"This study examines {subject} from a life cycle perspective.",
        f"We use a {ai} model to {task} {pick()} and {pick()} for {subject}.",
        f"The {ai} was trained on observations of {pick()}, {pick()} and {pick()}.",
        f"Results show that {pick()} and {pick()} dominate the {rng.choice(topic['metrics'])} of {subject}.",
        f"Scenarios varied {pick()} and {pick()} across the studied {subject}.",
        f"Compared with conventional practice, the proposed approach lowers {rng.choice(topic['metrics'])}.",
        f"Data on {pick()} were collected for {rng.randint(12, 480)} cases.",
    ]
    if lcia:
        s.append(f"Impacts were characterized with the {lcia} method.")
    s += rng.sample(STAGE_SENTENCES, rng.randint(1, 3))
    return s


def _documents(seed: int = 7):
    rng = random.Random(seed)
    docs = []
    k = 0
    for t_index, (name, topic) in enumerate(TOPICS.items()):
        for j in range(N_PER_TOPIC):
            k += 1
            subject = topic["subjects"][j % len(topic["subjects"])]
            ai = AI_METHODS[(j * 5 + t_index * 3) % len(AI_METHODS)]
            task = TASKS[(j + t_index) % len(TASKS)]
            lcia = LCIA_METHODS[(j + 2 * t_index) % len(LCIA_METHODS)]
            sentences = _sentence_pool(topic, rng, ai, task, lcia, subject)
            abstract = " ".join(sentences[:5])
            body_sentences = []
            for _ in range(6):
                para = sentences[:]
                rng.shuffle(para)
                body_sentences.append(" ".join(para))
            docs.append({
                "id": f"mc-{k:03d}",
                "topic": name,
                "title": f"{task.capitalize()}ing {subject} with {ai} in life cycle assessment"
                .replace("eing ", "ing "),
                "abstract": abstract,
                "year": YEARS[j],
                "venue": topic["venue"],
                "keywords": topic["keywords"],
                "paragraphs": body_sentences,
                "ai": ai,
                "lcia": lcia,
            })
    return docs


# ids with special handling; everything else is screened in and has a DOI
EXCLUDED = {"mc-004": "off_topic", "mc-021": "language", "mc-038": "doc_type"}
BLANK_ABSTRACT = ("mc-045",)
NO_DOI = ("mc-012", "mc-030")
PAYWALLED = ("mc-009", "mc-027")  # publisher prefix, no entitlement
CLOSED_OTHER = ("mc-016", "mc-040")  # not open, not routed to the publisher


def _doi(doc_id: str, publisher: bool) -> str:
    n = int(doc_id.split("-")[1])
    return f"10.1016/j.demo.{2000 + n}" if publisher else f"10.5555/demo.{2000 + n}"


def _fulltext_plain(d: dict, doi: str) -> str:
    head = (f"{d['title']}\n\nCorresponding author: author{d['id'][3:]}@university.invalid\n"
            f"Available online at https://repository.invalid/{d['id']} (doi:{doi})\n\n")
    body = "\n\n".join(d["paragraphs"])
    # a hyphenated line break, as left by PDF text extraction
    body = body.replace(" life cycle ", " life cy-\ncle ", 1)
    return head + "Introduction\n" + body + "\n\nReferences\n[1] https://doi.org/10.1000/ref.1\n"


def _fulltext_xml(d: dict, doi: str) -> str:
    paras = "".join(f"<ce:para>{escape(p)}</ce:para>" for p in d["paragraphs"])
    return (
        '<?xml version="1.0" encoding="UTF-8"?>'
        '<full-text-retrieval-response xmlns="http://www.elsevier.com/xml/svapi/article/dtd" '
        'xmlns:ce="http://www.elsevier.com/xml/common/dtd" xmlns:dc="http://purl.org/dc/elements/1.1/">'
        f"<coredata><dc:title>{escape(d['title'])}</dc:title><dc:identifier>doi:{doi}</dc:identifier></coredata>"
        "<originalText><ce:sections><ce:section><ce:section-title>Introduction</ce:section-title>"
        f"{paras}</ce:section></ce:sections></originalText></full-text-retrieval-response>"
    )


def build(dest, record_transcripts: bool = True) -> Path:
    """Write the demo corpus into ``dest`` and return the config path."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    docs = _documents()
    cache = ResponseCache(dest / "cache" / "http")

    rows = []
    for i, d in enumerate(docs):
        publisher = i % 5 in (1, 3) or d["id"] in PAYWALLED
        if d["id"] in CLOSED_OTHER:
            publisher = False
        doi = "" if d["id"] in NO_DOI else _doi(d["id"], publisher)
        rows.append({"EID": d["id"], "Title": d["title"],
                     "Abstract": "" if d["id"] in BLANK_ABSTRACT else d["abstract"], "Year": d["year"],
                     "DOI": doi, "Author Keywords": d["keywords"], "Source title": d["venue"]})
        if not doi:
            continue
        if publisher:
            cache.put("open_access", doi, {"status": 200, "content_type": "application/json",
                                           "body": json.dumps({"doi": doi, "best_oa_location": None})})
            if d["id"] in PAYWALLED:
                cache.put("publisher", doi, {"status": 403, "content_type": "text/xml",
                                             "body": "<service-error>not entitled</service-error>"})
            else:
                cache.put("publisher", doi, {"status": 200, "content_type": "text/xml",
                                             "body": _fulltext_xml(d, doi)})
        elif d["id"] in CLOSED_OTHER:
            cache.put("open_access", doi, {"status": 200, "content_type": "application/json",
                                           "body": json.dumps({"doi": doi, "best_oa_location": None})})
        else:
            url = f"{DOC_BASE}/{d['id']}.txt"
            cache.put("open_access", doi, {"status": 200, "content_type": "application/json",
                                           "body": json.dumps({"doi": doi, "best_oa_location": {"url": url}})})
            cache.put("open_access", "document:" + url, {"status": 200, "content_type": "text/plain",
                                                         "body": _fulltext_plain(d, doi)})

    with (dest / "metadata.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    with (dest / "decisions.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doc_id", "verdict", "reason"])
        for doc_id, reason in sorted(EXCLUDED.items()):
            w.writerow([doc_id, "exclude", reason])
    groups = {
        "AI methods": ["neural network", "random forest", "support vector regression", "gradient boosting",
                       "kriging", "genetic algorithm", "reinforcement learning", "large language model"],
        "Application terms": ["concrete", "cement", "sludge", "wastewater", "battery", "photovoltaic", "solar",
                              "timber"],
    }
    (dest / "term_groups.json").write_text(json.dumps(groups, indent=2) + "\n", encoding="utf-8")
    config = {
        "seed": 42,
        "workers": 4,
        "offline": True,
        "paths": {"metadata": "metadata.csv", "decisions": "decisions.csv", "outputs": "out", "cache": "cache",
                  "transcripts": "transcripts", "term_groups": "term_groups.json"},
        "open_access": {"base_url": OA_BASE, "auth_token_env": "LITSCAPE_OA_EMAIL"},
        "publisher": {"base_url": PUBLISHER_BASE, "auth_token_env": "LITSCAPE_PUBLISHER_KEY"},
        "publisher_prefixes": ["10.1016"],
        "embedding": {"provider": "hashing", "dim": 384, "text": "abstract"},
        "projection": {"n_neighbors": 10, "n_components": 10, "min_dist": 0.0},
        "projection_2d": {"n_neighbors": 10, "n_components": 2, "min_dist": 0.1},
        "clustering": {"min_cluster_size": 8, "min_samples": 1, "selection": "leaf"},
        "terms": {"top_n": 10, "max_terms": 500, "period_years": 4, "trend_top_k": 8, "card_abstracts": 15},
        "chat": {"provider": "http", "transcript_mode": "replay"},
    }
    cfg_path = dest / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    if record_transcripts:
        _record(dest, config)
    return cfg_path


def _record(dest: Path, config: dict) -> None:
    """Run the pipeline once with the rule model to fill the transcript directory."""
    from .config import load_config
    from .pipeline import run

    rec = dict(config, chat={"provider": "rule", "transcript_mode": "record"},
               paths=dict(config["paths"], outputs="_recording"))
    rec_path = dest / "_recording.json"
    rec_path.write_text(json.dumps(rec), encoding="utf-8")
    try:
        run(load_config(rec_path), workers=1)
    finally:
        rec_path.unlink()
        shutil.rmtree(dest / "_recording", ignore_errors=True)
        shutil.rmtree(dest / "cache" / "vectors", ignore_errors=True)


def bundled_root():
    return resources.files("litscape").joinpath("data/minicorpus")


def init_demo(dest) -> Path:
    """Copy the bundled corpus into ``dest``; returns its config path."""
    dest = Path(dest)
    if dest.exists() and any(dest.iterdir()):
        raise FileExistsError(f"{dest} exists and is not empty")
    with resources.as_file(bundled_root()) as src:
        shutil.copytree(src, dest, dirs_exist_ok=True)
    return dest / "config.json"
