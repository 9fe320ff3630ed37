"""Python interface to the Bonsai feed engine.

Structured arguments and results are plain dicts and lists.
"""

import json
import os

from . import _core
from ._core import BonsaiError

__all__ = [
    "BonsaiError",
    "bucket_for_score",
    "engagement_score",
    "parse_weights",
    "plan",
    "presets",
    "rank_feed",
    "run",
    "search_catalog",
    "validate_config",
]


def engagement_score(likes, reposts, replies):
    return _core.engagement_score(likes, reposts, replies)


def bucket_for_score(score):
    return _core.bucket_for_score(score)


def parse_weights(text):
    """Preset name or "relevance,engagement,recency"; returns the weights dict."""
    return json.loads(_core.parse_weights(text))


def presets():
    return json.loads(_core.presets())


def validate_config(config):
    """Returns a list of violations; empty when the config is valid."""
    return json.loads(_core.validate_config(json.dumps(config)))


def rank_feed(candidates, eligible, weights):
    return json.loads(_core.rank_feed(json.dumps(candidates), json.dumps(eligible), json.dumps(weights)))


def search_catalog(path, query, kinds=(), limit=10):
    return json.loads(_core.search_catalog(os.fspath(path), query, list(kinds), limit))


def plan(description, mock_rules="", catalog=""):
    """Drafts a feed config with the rule-based mock model."""
    return json.loads(_core.plan(description, os.fspath(mock_rules), os.fspath(catalog)))


def run(config, corpus, mock_rules="", weights="balanced", now=""):
    """Sources, curates and ranks a corpus file once, without persistence."""
    return json.loads(_core.run(json.dumps(config), os.fspath(corpus), os.fspath(mock_rules), weights, now))
