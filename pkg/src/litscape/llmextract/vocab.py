"""Controlled vocabularies and the deterministic synonym tables that feed them."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

OTHER = "Other"
NONE_LABEL = "None"

AI_LABELS = ("ANN", "SVM", "LLM", "Decision Trees", "Reinforcement Learning", "PCA", "Regression")
LCA_STAGE_LABELS = ("Goal & Scope Definition", "LCI", "LCIA", "Interpretation")
DEFAULT_LCIA_METHODS = (
    "TRACI",
    "ReCiPe",
    "CML",
    "IMPACT 2002+",
    "ILCD",
    "Eco-indicator 99",
    "Environmental Footprint",
    "IPCC",
    "USEtox",
    "Cumulative Energy Demand",
    "Ecological Scarcity",
)

# broad labels that say no more than "some AI"; reports fold them into Other
GENERIC_AI_LABELS = (
    "Machine Learning (ML)",
    "Machine Learning",
    "Prediction and Optimization",
    "Probabilistic Analysis",
    "Data Engineering",
    "Artificial Intelligence",
)


def _w(pattern: str) -> re.Pattern:
    return re.compile(r"(?<![^\W_])(?:" + pattern + r")(?![^\W_])", re.IGNORECASE)


# first matching rule wins; order encodes priority when a value names several methods
AI_SYNONYMS = (
    (_w(r"large language models?|llms?|chatgpt|gpt-?\d*|bert|llama-?\d*|mistral"), "LLM"),
    (_w(r"(?:artificial |deep |convolutional |recurrent |graph |feed-?forward )?neural networks?|anns?|cnns?|"
        r"rnns?|lstm|mlps?|multi-?layer perceptrons?|deep learning|autoencoders?"), "ANN"),
    (_w(r"support vector (?:machines?|regression|regressors?|classifiers?)|svms?|svr"), "SVM"),
    (_w(r"random forests?|decision trees?|gradient boost\w*|xgboost|lightgbm|catboost|gbdt|gbm|"
        r"extra trees|regression trees?|cart"), "Decision Trees"),
    (_w(r"reinforcement learning|q-learning|deep q-networks?|dqn"), "Reinforcement Learning"),
    (_w(r"principal component analysis|pca"), "PCA"),
    (_w(r"(?:linear |multiple |polynomial |logistic |ridge |lasso |gaussian process )?regression|"
        r"regressors?|gaussian process(?:es)?"), "Regression"),
)

LCA_STAGE_SYNONYMS = (
    (_w(r"goal(?: and| &)? scope(?: definition)?|scope definition|functional unit|system boundar(?:y|ies)"),
     "Goal & Scope Definition"),
    (_w(r"lcia|life cycle impact assessment|impact assessment|characteri[sz]ation"), "LCIA"),
    (_w(r"lci|life cycle inventory|inventory(?: analysis| data| modell?ing)?"), "LCI"),
    (_w(r"interpretation|sensitivity analysis|uncertainty analysis"), "Interpretation"),
)


def lcia_synonyms(methods) -> tuple:
    rules = []
    for m in methods:
        pattern = re.escape(m).replace(r"\ ", r"[\s\-]*")
        if m.endswith("+"):
            # text cleaning drops "+", so the suffix is optional
            rules.append((re.compile(r"(?<![^\W_])" + pattern[:-2] + r"\+?(?![^\W_])", re.IGNORECASE), m))
        else:
            rules.append((_w(pattern), m))
    return tuple(rules)


@dataclass
class Vocabulary:
    """A closed label set plus an ordered synonym table."""

    category: str
    labels: tuple
    synonyms: tuple = field(default_factory=tuple)

    def allowed(self) -> tuple:
        return self.labels + (OTHER,)

    def lookup(self, value: str) -> Optional[str]:
        for pattern, label in self.synonyms:
            if pattern.search(value):
                return label
        return None

    def validate(self, answer: str) -> str:
        """Map a model answer onto the vocabulary; anything unrecognized is Other."""
        cleaned = answer.strip().splitlines()[0].strip() if answer.strip() else ""
        cleaned = cleaned.strip(" \t\"'`*.").strip()
        if ":" in cleaned and cleaned.split(":", 1)[0].strip().lower() in ("label", "answer"):
            cleaned = cleaned.split(":", 1)[1].strip(" \t\"'`*.")
        for label in self.allowed():
            if cleaned.lower() == label.lower():
                return label
        return OTHER


def default_vocabularies(lcia_methods=DEFAULT_LCIA_METHODS) -> dict:
    return {
        "ai": Vocabulary("AI/ML technology", AI_LABELS, AI_SYNONYMS),
        "lca_stage": Vocabulary("LCA stage", LCA_STAGE_LABELS, LCA_STAGE_SYNONYMS),
        "lcia": Vocabulary("LCIA method", tuple(lcia_methods), lcia_synonyms(lcia_methods)),
    }


def group_generic(label: Optional[str], generic=GENERIC_AI_LABELS) -> Optional[str]:
    """Fold broad AI labels into Other for reporting."""
    if label is None:
        return None
    if label.strip().lower() in {g.lower() for g in generic}:
        return OTHER
    return label
