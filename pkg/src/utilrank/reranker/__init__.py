"""Learning-to-rank models over the 14 query-document features."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from utilrank import FORMAT_VERSION
from utilrank.reranker.dataset import QueryGroup, RankingDataset, load_dataset, top_k_by_utility
from utilrank.reranker.lambdamart import (
    LambdaMARTConfig, TreeEnsemble, feature_importance, mean_ndcg, train_lambdamart,
)
from utilrank.reranker.linear import LinearConfig, LinearRanker, train_linear_ranker
from utilrank.reranker.ndcg import dcg, delta_ndcg, lambda_pairs, ndcg
from utilrank.reranker.trees import RegressionTree

MODEL_MAGIC = "UTILRANK-RERANKER"

Model = Union[TreeEnsemble, LinearRanker]

__all__ = [
    "LambdaMARTConfig", "LinearConfig", "LinearRanker", "QueryGroup", "RankingDataset",
    "RegressionTree", "TreeEnsemble", "ConstantModel", "dcg", "delta_ndcg", "feature_importance",
    "lambda_pairs", "load_dataset", "load_model", "mean_ndcg", "ndcg", "rerank", "save_model",
    "score", "top_k_by_utility", "train_lambdamart", "train_linear_ranker",
]


class ConstantModel:
    """Scores every candidate the same; reranking then falls back to doc_id order."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def predict(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.value, dtype=np.float64)


def score(model, x: np.ndarray) -> float:
    return float(model.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def rerank(model, candidates: Sequence[tuple[str, np.ndarray]]) -> list[tuple[str, float]]:
    """Sort candidates by model score, descending; ties by ascending doc_id."""
    if not candidates:
        return []
    scores = model.predict(np.vstack([x for _, x in candidates]))
    ranked = sorted(zip((d for d, _ in candidates), scores.tolist()), key=lambda t: (-t[1], t[0]))
    return [(d, float(s)) for d, s in ranked]


def model_to_dict(model: Model) -> dict:
    head = {"magic": MODEL_MAGIC, "version": FORMAT_VERSION}
    if isinstance(model, TreeEnsemble):
        return {**head, "kind": "lambdamart", "learning_rate": model.learning_rate,
                "sigma": model.sigma, "g_max": model.g_max, "config": model.config,
                "feature_gain": model.feature_gain.tolist(),
                "trees": [t.to_dict() for t in model.trees]}
    if isinstance(model, LinearRanker):
        return {**head, "kind": "linear", "weights": model.weights.tolist(), "bias": model.bias,
                "mean": model.mean.tolist(), "std": model.std.tolist()}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict) -> Model:
    if d.get("magic") != MODEL_MAGIC:
        raise ValueError("not a reranker model document")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    if d["kind"] == "lambdamart":
        return TreeEnsemble([RegressionTree.from_dict(t) for t in d["trees"]], d["learning_rate"],
                            d["sigma"], np.array(d["feature_gain"]), d["g_max"], d["config"])
    if d["kind"] == "linear":
        return LinearRanker(np.array(d["weights"]), d["bias"], np.array(d["mean"]), np.array(d["std"]))
    raise ValueError(f"unknown model kind {d['kind']!r}")


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1), encoding="utf-8")


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
