"""A deterministic, keyword-driven stand-in for a chat model.

It reads the shipped prompt templates, recognizes which task is being asked
and answers in the requested format. The bundled demo corpus records its
transcripts from this model so the whole pipeline runs offline.
"""

from __future__ import annotations

import re
from collections import Counter

from .vocab import lcia_synonyms

# (theme keywords, title, description, AI sentence, application area, claimed benefit)
THEMES = (
    (
        ("concrete", "cement", "building", "construction", "asphalt", "timber", "masonry", "pavement"),
        "Sustainable Construction Materials and Processes Optimization",
        "Studies that couple life cycle assessment with data-driven models to design lower-impact building "
        "materials and construction processes.",
        "Machine learning surrogates predict material properties and embodied impacts so mix designs and "
        "processes can be optimized.",
        "Construction materials",
        "Faster screening of low-carbon material designs",
    ),
    (
        ("wastewater", "sludge", "sewage", "effluent", "treatment plant", "nitrogen", "aeration"),
        "Wastewater Treatment Emission Modeling and Process Control",
        "Studies that assess and reduce the footprint of wastewater and sludge treatment plants.",
        "Learned models forecast influent loads and emissions and tune plant operation.",
        "Wastewater treatment",
        "Lower energy use and emissions in plant operation",
    ),
    (
        ("battery", "batteries", "solar", "photovoltaic", "electricity", "grid", "wind", "lithium"),
        "Battery and Renewable Energy System Footprint Prediction",
        "Studies that estimate the life cycle impacts of batteries, photovoltaics and electricity supply.",
        "Neural and tree-based models predict inventory flows and impacts of energy technologies.",
        "Energy systems",
        "Rapid impact estimates where inventory data are missing",
    ),
)

AI_TERMS = (
    "large language model", "artificial neural network", "deep neural network", "convolutional neural network",
    "neural network", "random forest", "gradient boosting", "decision tree", "support vector regression",
    "support vector machine", "reinforcement learning", "principal component analysis", "gaussian process",
    "kriging", "genetic algorithm", "multiple linear regression", "linear regression", "fuzzy logic",
    "k-means", "bayesian network", "machine learning",
)
TASK_TERMS = (
    ("optimi", "Optimization of design and operating choices"),
    ("classif", "Classification of products or processes"),
    ("forecast", "Forecasting of future loads and impacts"),
    ("predict", "Prediction of impacts from design parameters"),
    ("estimat", "Estimation of missing inventory data"),
)
METRIC_TERMS = (
    "global warming potential", "carbon footprint", "greenhouse gas emissions", "co2 emissions",
    "energy consumption", "eutrophication", "acidification", "water footprint", "embodied carbon",
    "cumulative energy demand",
)
STAGE_TERMS = (
    (("functional unit", "system boundary", "goal and scope"), "Goal and scope definition"),
    (("inventory",), "Life cycle inventory"),
    (("impact assessment", "characterization"), "Life cycle impact assessment"),
    (("sensitivity analysis", "uncertainty analysis", "interpretation"), "Interpretation"),
)
NORMALIZE_HINTS = (
    ("kriging", "Regression"),
    ("gaussian process", "Regression"),
    ("neural", "ANN"),
    ("forest", "Decision Trees"),
    ("boosting", "Decision Trees"),
    ("genetic", "Other"),
    ("inventory", "LCI"),
    ("impact", "LCIA"),
    ("scope", "Goal & Scope Definition"),
)


def _theme(text: str):
    low = text.lower()
    scores = [sum(low.count(k) for k in keys) for keys, *_ in THEMES]
    best = max(range(len(THEMES)), key=lambda i: (scores[i], -i))
    return THEMES[best] if scores[best] else None


def _found(text: str, terms) -> list:
    low = text.lower()
    hits = []
    for t in terms:
        if re.search(r"(?<![a-z])" + re.escape(t) + r"(?![a-z])", low):
            # keep the most specific phrase only
            if not any(t in h for h in hits):
                hits.append(t)
    return hits


def _label_reply(prompt: str) -> str:
    block = prompt.split("Abstracts:", 1)[-1]
    theme = _theme(block)
    if theme is None:
        words = Counter(w for w in re.findall(r"[a-z]{6,}", block.lower()))
        top = " ".join(w.title() for w, _ in words.most_common(3)) or "Miscellaneous"
        return (f"Title: {top} Applications\nDescription: Papers that share the terms {top.lower()}.\n"
                "AI: Data-driven models support the assessments.")
    _, title, desc, ai, *_ = theme
    return f"Title: {title}\nDescription: {desc}\nAI: {ai}"


def _extract_reply(prompt: str) -> str:
    head, _, paper = prompt.partition("\nPaper:\n")
    methods = re.search(r"Common LCIA methodologies: (.*)\.\n", head)
    method_list = [m.strip() for m in methods.group(1).split(",")] if methods else []
    low = paper.lower()

    stages = [label for keys, label in STAGE_TERMS if any(k in low for k in keys)]
    lcia = [m for pattern, m in lcia_synonyms(method_list) if pattern.search(paper)]
    theme = _theme(paper)
    ai = _found(paper, AI_TERMS)
    task = next((label for stem, label in TASK_TERMS if stem in low), None)
    metrics = _found(paper, METRIC_TERMS)
    lines = [
        ("LCA stage", ", ".join(stages)),
        ("LCIA method", ", ".join(lcia)),
        ("Application area", theme[4] if theme else ""),
        ("AI/ML task", task or ""),
        ("AI/ML technology", ", ".join(ai)),
        ("Impact metrics", ", ".join(m.capitalize() for m in metrics)),
        ("Claimed benefit", theme[5] if theme and ai else ""),
    ]
    return "\n".join(f"{k}: {v or 'None'}" for k, v in lines)


def _normalize_reply(prompt: str) -> str:
    choices = re.search(r"^Allowed labels: (.*)$", prompt, re.M)
    value = re.search(r"^Annotation: (.*)$", prompt, re.M)
    allowed = [c.strip() for c in choices.group(1).split(",")] if choices else []
    annotation = value.group(1).lower() if value else ""
    for hint, label in NORMALIZE_HINTS:
        if hint in annotation and label in allowed:
            return label
    for label in allowed:
        if label.lower() in annotation:
            return label
    # a plausible but off-list answer, as real models give
    return annotation.split(",")[0].strip().title() or "Other"


class RuleChatModel:
    """Answers the three shipped task prompts deterministically."""

    model_family = "rule-based"

    def complete(self, messages, cfg=None) -> str:
        prompt = messages[-1]["content"]
        if "exactly three lines" in prompt:
            return _label_reply(prompt)
        if "exactly seven lines" in prompt:
            return _extract_reply(prompt)
        if "Allowed labels:" in prompt:
            return _normalize_reply(prompt)
        return "Other"
