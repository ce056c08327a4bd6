"""Answer metrics, generator clients and per-document utility labeling."""

from __future__ import annotations

import json
import logging
import os
import re
import string
import time
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from utilrank.corpus import Index, Query, retrieve

log = logging.getLogger(__name__)

UNKNOWN_ANSWER = "i do not know"

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation) | {"—", "–", "‘", "’", "“", "”"}
_FACT = re.compile(r"fact\(\s*([^\s()]+?)\s*->\s*([^()]+?)\s*\)")


def normalize_answer(s: str) -> str:
    """Lowercase, replace punctuation by spaces, drop articles, collapse whitespace."""
    s = s.lower()
    s = "".join(" " if ch in _PUNCT else ch for ch in s)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def accuracy(prediction: str, golds: Iterable[str]) -> float:
    golds = list(golds)
    if not golds:
        raise ValueError("accuracy needs at least one gold answer")
    pred = normalize_answer(prediction)
    return float(any(normalize_answer(g) in pred for g in golds))


def _f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if common == 0:
        return 0.0
    p = common / len(pred_tokens)
    r = common / len(gold_tokens)
    return 2 * p * r / (p + r)


def f1_score(prediction: str, golds: Iterable[str]) -> float:
    golds = list(golds)
    if not golds:
        raise ValueError("f1_score needs at least one gold answer")
    pred = normalize_answer(prediction).split()
    return max(_f1(pred, normalize_answer(g).split()) for g in golds)


METRICS = {"accuracy": accuracy, "f1": f1_score}


# -- generators --------------------------------------------------------------

class GeneratorError(RuntimeError):
    pass


@dataclass
class GeneratorClient:
    """Black-box answer generator.

    ``kind="remote"`` talks to an OpenAI-compatible chat completions endpoint;
    ``kind="mock"`` is a deterministic stand-in that answers only from facts
    written as ``fact(subject -> answer)`` in the prompt context.
    """

    kind: str = "mock"
    endpoint: str = ""
    model_name: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    seed: int = 42
    question_marker: str = "Question:"

    def __post_init__(self):
        if self.kind not in ("remote", "mock"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint and self.model_name):
            raise ValueError("remote generator needs endpoint and model_name")


def mock_answer(prompt: str, question_marker: str = "Question:") -> str:
    head, sep, question = prompt.rpartition(question_marker)
    if not sep:
        head, question = prompt, ""
    q_terms = set(re.findall(r"\w+", question.lower()))
    for subject, answer in _FACT.findall(head):
        if subject.lower() in q_terms:
            return answer
    return UNKNOWN_ANSWER


def _post_chat(client: GeneratorClient, prompt: str) -> str:
    body = json.dumps({
        "model": client.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
        "seed": client.seed,
    }).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get("GENERATOR_API_KEY")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    req = urllib.request.Request(client.endpoint.rstrip("/") + "/chat/completions",
                                 data=body, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=client.timeout) as resp:
        payload = json.loads(resp.read().decode("utf-8"))
    return payload["choices"][0]["message"]["content"] or ""


def generate(client: GeneratorClient, prompt: str, context: str = "") -> str:
    """One completion for ``prompt``. ``context`` is only used in error messages."""
    if client.kind == "mock":
        return mock_answer(prompt, client.question_marker)
    where = f" ({context})" if context else ""
    last: Exception | None = None
    for attempt in range(client.max_retries + 1):
        try:
            return _post_chat(client, prompt)
        except urllib.error.HTTPError as exc:
            excerpt = exc.read()[:200].decode("utf-8", "replace")
            # Client errors will not go away on retry.
            if 400 <= exc.code < 500 and exc.code != 429:
                raise GeneratorError(f"HTTP {exc.code}{where}: {excerpt}") from exc
            last = GeneratorError(f"HTTP {exc.code}{where}: {excerpt}")
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            last = exc
        except (KeyError, IndexError, ValueError) as exc:
            raise GeneratorError(f"malformed response{where}: {exc}") from exc
        if attempt < client.max_retries:
            time.sleep(min(0.25 * 2 ** attempt, 4.0))
    raise GeneratorError(f"generator unreachable after {client.max_retries + 1} attempts{where}: {last}")


# -- utility labels ----------------------------------------------------------

@dataclass(frozen=True)
class UtilityRecord:
    query_id: str
    doc_id: str
    utility: float
    grade: int
    generator_output: str
    retrieval_rank: int = 0


def to_grade(utility: float, g_max: int) -> int:
    # Python's round() is half-to-even; grades use half-up.
    return int(utility * g_max + 0.5)


def label_utilities(
    client: GeneratorClient,
    queries: Sequence[Query],
    index: Index,
    n: int = 10,
    metric: str = "f1",
    g_max: int = 4,
    template: str | None = None,
    char_budget: int = 1500,
    max_in_flight: int = 1,
    stats: dict | None = None,
) -> list[UtilityRecord]:
    """Label the top ``n`` retrieved documents of every query with their utility.

    Each document is placed alone in the prompt; its utility is ``metric`` of the
    generator output against the query's gold answers. Records come back
    grouped by query (input order), best utility first, ties by retrieval rank.
    Queries whose generation fails are skipped; ``stats["skipped"]`` counts them.
    """
    from utilrank.pipeline import DEFAULT_TEMPLATE, build_prompt

    if n < 1:
        raise ValueError("n must be >= 1")
    score = METRICS[metric]
    template = template or DEFAULT_TEMPLATE
    jobs = []
    for q in queries:
        if not q.gold_answers:
            raise ValueError(f"query {q.query_id!r} has no gold answers")
        for rank, (doc_id, _) in enumerate(retrieve(index, q, n), start=1):
            jobs.append((q, doc_id, rank))

    def run(job):
        q, doc_id, _ = job
        prompt = build_prompt(q, [index.document(doc_id)], template, char_budget)
        try:
            return generate(client, prompt, context=f"query {q.query_id}, doc {doc_id}")
        except GeneratorError as exc:
            return exc

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_in_flight) as pool:
            outputs = list(pool.map(run, jobs))
    else:
        outputs = [run(j) for j in jobs]

    by_query: dict[str, list[UtilityRecord]] = {}
    failed: set[str] = set()
    for (q, doc_id, rank), out in zip(jobs, outputs):
        if isinstance(out, Exception):
            if q.query_id not in failed:
                log.warning("skipping query %s: %s", q.query_id, out)
            failed.add(q.query_id)
            continue
        u = score(out, q.gold_answers)
        by_query.setdefault(q.query_id, []).append(
            UtilityRecord(q.query_id, doc_id, u, to_grade(u, g_max), out, rank))

    records = []
    for q in queries:
        if q.query_id in failed:
            continue
        group = by_query.get(q.query_id, [])
        records.extend(sorted(group, key=lambda r: (-r.utility, r.retrieval_rank)))
    if stats is not None:
        stats["skipped"] = len(failed)
    if failed:
        log.warning("%d queries skipped because of generator errors", len(failed))
    return records


def write_utilities(records: Iterable[UtilityRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "query_id": r.query_id, "doc_id": r.doc_id, "utility": r.utility,
                "grade": r.grade, "output": r.generator_output, "rank": r.retrieval_rank,
            }, ensure_ascii=False) + "\n")


def read_utilities(path: str | Path) -> list[UtilityRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = json.loads(line)
                out.append(UtilityRecord(o["query_id"], o["doc_id"], float(o["utility"]),
                                         int(o["grade"]), o.get("output", ""), int(o.get("rank", 0))))
    return out


def read_dataset(path: str | Path) -> list[Query]:
    queries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            o = json.loads(line)
            qid = str(o["query_id"])
            if qid in seen:
                raise ValueError(f"duplicate query_id {qid!r}")
            seen.add(qid)
            queries.append(Query.from_text(qid, o["question"], o.get("answers", [])))
    return queries


def write_dataset(queries: Iterable[Query], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"query_id": q.query_id, "question": q.text,
                                 "answers": list(q.gold_answers)}, ensure_ascii=False) + "\n")
