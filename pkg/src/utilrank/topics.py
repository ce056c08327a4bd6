"""LDA topic model trained by collapsed Gibbs sampling, with fold-in inference.

The sampling kernels are compiled with numba; all randomness comes from numpy
``Generator`` objects owned by the caller, and the kernels consume pre-drawn
uniforms, so results are reproducible from the seed alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from utilrank import FORMAT_VERSION
from utilrank.corpus import Document

TOPIC_MAGIC = "UTILRANK-LDA"


@dataclass(frozen=True)
class TopicModel:
    num_topics: int
    vocab: dict[str, int]
    phi: np.ndarray  # (num_topics, |vocab|), rows sum to 1
    alpha: float
    beta: float
    rng_seed: int


@numba.njit(cache=True)
def _sweep(words, docs, z, n_dk, n_kw, n_k, alpha, beta, vbeta, u):
    num_topics = n_k.shape[0]
    p = np.empty(num_topics)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        total = 0.0
        for t in range(num_topics):
            total += (n_dk[d, t] + alpha) * (n_kw[t, w] + beta) / (n_k[t] + vbeta)
            p[t] = total
        r = u[i] * total
        k = 0
        while k < num_topics - 1 and p[k] <= r:
            k += 1
        z[i] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1


@numba.njit(cache=True)
def _fold_in_sweep(words, z, n_k, phi, alpha, u):
    num_topics = n_k.shape[0]
    p = np.empty(num_topics)
    for i in range(words.shape[0]):
        w = words[i]
        n_k[z[i]] -= 1
        total = 0.0
        for t in range(num_topics):
            total += phi[t, w] * (n_k[t] + alpha)
            p[t] = total
        r = u[i] * total
        k = 0
        while k < num_topics - 1 and p[k] <= r:
            k += 1
        z[i] = k
        n_k[k] += 1


def train_lda(
    docs: Sequence[Document],
    num_topics: int = 100,
    iterations: int = 500,
    alpha: float | None = None,
    beta: float = 0.01,
    seed: int = 42,
    subset: int | None = None,
) -> TopicModel:
    """Fit LDA on the tokens of ``docs``.

    ``alpha`` defaults to ``50 / num_topics``. ``subset`` trains on a seeded
    random sample of that many documents instead of the whole collection.
    """
    if num_topics < 2:
        raise ValueError("num_topics must be >= 2")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if alpha is None:
        alpha = 50.0 / num_topics
    rng = np.random.default_rng(seed)

    texts = [d.tokens for d in docs if d.tokens]
    if subset is not None and subset < len(texts):
        keep = np.sort(rng.choice(len(texts), size=subset, replace=False))
        texts = [texts[i] for i in keep]
    if not texts:
        raise ValueError("no non-empty documents to train on")

    vocab: dict[str, int] = {}
    for toks in texts:
        for t in toks:
            vocab.setdefault(t, len(vocab))
    words = np.array([vocab[t] for toks in texts for t in toks], dtype=np.int64)
    doc_of = np.repeat(np.arange(len(texts)), [len(t) for t in texts]).astype(np.int64)

    z = rng.integers(num_topics, size=words.shape[0]).astype(np.int64)
    n_dk = np.zeros((len(texts), num_topics), dtype=np.int64)
    n_kw = np.zeros((num_topics, len(vocab)), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_kw, (z, words), 1)
    n_k = n_kw.sum(axis=1)

    vbeta = len(vocab) * beta
    for _ in range(iterations):
        _sweep(words, doc_of, z, n_dk, n_kw, n_k, alpha, beta, vbeta, rng.random(words.shape[0]))

    phi = (n_kw + beta) / (n_k[:, None] + vbeta)
    phi /= phi.sum(axis=1, keepdims=True)
    return TopicModel(num_topics, vocab, phi, float(alpha), float(beta), int(seed))


def infer_theta(model: TopicModel, tokens: Sequence[str], fold_in_iterations: int = 50,
                seed: int = 0) -> np.ndarray:
    """Topic distribution of an unseen text, sampling with ``phi`` held fixed.

    Out-of-vocabulary tokens are ignored; with nothing left the result is uniform.
    """
    M = model.num_topics
    words = np.array([model.vocab[t] for t in tokens if t in model.vocab], dtype=np.int64)
    if words.size == 0:
        return np.full(M, 1.0 / M)
    rng = np.random.default_rng(seed)
    z = rng.integers(M, size=words.size).astype(np.int64)
    n_k = np.bincount(z, minlength=M).astype(np.int64)
    for _ in range(fold_in_iterations):
        _fold_in_sweep(words, z, n_k, model.phi, model.alpha, rng.random(words.size))
    theta = (n_k + model.alpha) / (words.size + M * model.alpha)
    return theta / theta.sum()


def topic_cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(max(cos, 0.0), 1.0)


def top_topic_coverage(q_theta: np.ndarray, d_theta: np.ndarray, a: int) -> float:
    """Mass ``d_theta`` puts on the ``a`` largest topics of ``q_theta``.

    Ties among query topics go to the lower topic index.
    """
    q_theta = np.asarray(q_theta)
    if not 1 <= a <= q_theta.shape[0]:
        raise ValueError(f"a={a} out of range 1..{q_theta.shape[0]}")
    top = np.argsort(-q_theta, kind="stable")[:a]
    return float(np.asarray(d_theta)[top].sum())


def save_topic_model(model: TopicModel, path: str | Path) -> None:
    words = sorted(model.vocab, key=model.vocab.__getitem__)
    payload = {
        "magic": TOPIC_MAGIC,
        "version": FORMAT_VERSION,
        "num_topics": model.num_topics,
        "vocab_size": len(words),
        "alpha": model.alpha,
        "beta": model.beta,
        "seed": model.rng_seed,
        "vocab": words,
        "phi": model.phi.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_topic_model(path: str | Path) -> TopicModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("magic") != TOPIC_MAGIC:
        raise ValueError(f"{path}: not a topic model file")
    if payload.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported topic model version {payload.get('version')}")
    M, V = payload["num_topics"], payload["vocab_size"]
    phi = np.array(payload["phi"], dtype=np.float64).reshape(M, V)
    vocab = {w: i for i, w in enumerate(payload["vocab"])}
    return TopicModel(M, vocab, phi, payload["alpha"], payload["beta"], payload["seed"])
