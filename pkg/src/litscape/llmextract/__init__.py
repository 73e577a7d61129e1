"""Chat-model tasks: cluster cards, seven-field extraction, label normalization."""

from .parsing import ParseError, parse_lines
from .prompts import EXCERPT_CHARS, PromptBudgetError, truncate_at_whitespace
from .providers import (
    EXTRACT_MODEL,
    LABEL_MODEL,
    ChatConfig,
    HttpChatProvider,
    TranscriptCache,
    TranscriptMiss,
    TransportError,
)
from .rulemodel import RuleChatModel
from .tasks import (
    FIELD_KEYS,
    FIELD_NAMES,
    ClusterCard,
    ExtractionError,
    ExtractionRecord,
    LLMParseError,
    NormalizedRecord,
    extract_all,
    extract_fields,
    label_cluster,
    normalize_all,
    normalize_labels,
)
from .vocab import OTHER, Vocabulary, default_vocabularies, group_generic

__all__ = [
    "ParseError", "parse_lines", "EXCERPT_CHARS", "PromptBudgetError", "truncate_at_whitespace",
    "EXTRACT_MODEL", "LABEL_MODEL", "ChatConfig", "HttpChatProvider", "TranscriptCache", "TranscriptMiss",
    "TransportError", "RuleChatModel", "FIELD_KEYS", "FIELD_NAMES", "ClusterCard", "ExtractionError",
    "ExtractionRecord", "LLMParseError", "NormalizedRecord", "extract_all", "extract_fields", "label_cluster",
    "normalize_all", "normalize_labels", "OTHER", "Vocabulary", "default_vocabularies", "group_generic",
]
