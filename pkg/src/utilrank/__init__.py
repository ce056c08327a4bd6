"""Utility-driven reranking of first-stage retrieval results for RAG pipelines."""

__version__ = "0.1.0"

# Bumped whenever the persisted index / topic model / reranker layout changes.
FORMAT_VERSION = 1
