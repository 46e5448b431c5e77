"""Python bindings for the recexplain core."""

import json

from . import _core
from ._core import (
    RecexplainError,
    cohens_d,
    display_title,
    mean_and_sem,
    parse_aspect_response,
    select_relevant,
    welch_t_test,
)

__all__ = [
    "RecexplainError",
    "cohens_d",
    "display_title",
    "embed",
    "explain",
    "ingest",
    "mean_and_sem",
    "parse_aspect_response",
    "select_relevant",
    "stats_report",
    "validate_explanation",
    "welch_t_test",
]


def _settings(settings):
    return {key: str(value) for key, value in settings.items()}


def validate_explanation(text, recommended_title, watched_titles):
    return json.loads(_core.validate_explanation(text, recommended_title, list(watched_titles)))


def stats_report(ratings_log):
    return json.loads(_core.stats_report(str(ratings_log)))


def ingest(settings, catalog, format="jsonl", history=""):
    return _core.ingest(_settings(settings), str(catalog), format, str(history))


def embed(settings):
    return _core.embed(_settings(settings))


def explain(settings, recommended_id, user_id, method):
    return json.loads(_core.explain(_settings(settings), recommended_id, user_id, method))
