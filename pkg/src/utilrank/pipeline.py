"""End-to-end orchestration: training-set construction, inference and evaluation."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from utilrank.corpus import Document, Index, Query, retrieve
from utilrank.features import TopicCache, batch_extract, write_feature_file
from utilrank.reranker import (
    ConstantModel, LambdaMARTConfig, LinearConfig, QueryGroup, RankingDataset, rerank,
    top_k_by_utility, train_lambdamart, train_linear_ranker,
)
from utilrank.stats import paired_ttest
from utilrank.utility import (
    GeneratorClient, GeneratorError, UtilityRecord, accuracy, f1_score, generate, label_utilities,
    write_utilities,
)

log = logging.getLogger(__name__)

DEFAULT_TEMPLATE = "Context: {contexts}\n\nQuestion: {question}\nAnswer:"


@dataclass
class PipelineConfig:
    """Every knob of the pipeline; mirrored one-to-one by the config file and CLI flags."""

    # artifact paths
    corpus: str = "corpus.jsonl"
    dataset: str = "train.jsonl"
    eval_dataset: str = "test.jsonl"
    index: str = "index.json"
    topic_model: str = "lda.json"
    features: str = "features.txt"
    utilities: str = "utilities.jsonl"
    model: str = "reranker.json"
    linear_model: str = "linear.json"
    run: str = "run.trec"
    predictions: str = "predictions.jsonl"
    report: str = "report.json"
    figure: str = "report.png"
    importance_figure: str = "importance.png"
    # retrieval / context
    n_retrieve: int = 10
    context_size: int = 5
    k1: float = 1.2
    b: float = 0.75
    # topics
    num_topics: int = 100
    topic_a: int = 20
    lda_iters: int = 500
    lda_alpha: float = 0.0  # 0 selects 50 / num_topics
    lda_beta: float = 0.01
    lda_subset: int = 0  # 0 trains on every document
    fold_in_iters: int = 50
    # utility labels
    metric: str = "f1"
    g_max: int = 4
    train_top_k: int = 0  # 0 keeps all N labeled candidates
    prompt_template: str = DEFAULT_TEMPLATE
    doc_char_budget: int = 1500
    generator: str = "mock"
    endpoint: str = ""
    model_name: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 1
    # LambdaMART
    num_trees: int = 300
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_rows_per_leaf: int = 1
    sigma: float = 1.0
    sigma_outer: bool = True
    ndcg_cutoff: int = 5
    early_stop_rounds: int = 30
    validation_fraction: float = 0.1
    # linear ranker
    linear_lr: float = 0.5
    linear_epochs: int = 300
    # misc
    seed: int = 42
    run_tag: str = "utilrank"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.context_size > self.n_retrieve:
            raise ValueError("context_size must not exceed n_retrieve")
        if not 1 <= self.topic_a <= self.num_topics:
            raise ValueError("topic_a must lie in 1..num_topics")
        if self.metric not in ("accuracy", "f1"):
            raise ValueError(f"unknown metric {self.metric!r}")

    def lambdamart(self) -> LambdaMARTConfig:
        return LambdaMARTConfig(self.num_trees, self.learning_rate, self.max_leaves,
                                self.min_rows_per_leaf, self.sigma, self.sigma_outer,
                                self.ndcg_cutoff, self.early_stop_rounds, self.seed)

    def linear(self) -> LinearConfig:
        return LinearConfig(self.linear_lr, self.linear_epochs, self.seed, self.early_stop_rounds,
                            self.ndcg_cutoff)

    def client(self) -> GeneratorClient:
        return GeneratorClient(self.generator, self.endpoint, self.model_name, self.timeout,
                               self.max_retries, self.seed)

    def path(self, key: str, workdir: str | Path | None = None) -> Path:
        p = Path(getattr(self, key))
        return p if workdir is None or p.is_absolute() else Path(workdir) / p


def config_fields() -> dict[str, type]:
    hints = {"int": int, "float": float, "str": str, "bool": bool}
    return {f.name: hints[f.type] for f in dataclasses.fields(PipelineConfig)}


def parse_value(key: str, raw: str):
    kind = config_fields()[key]
    if kind is bool:
        low = raw.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"{key}: expected a boolean, got {raw!r}")
        return low in ("1", "true", "yes", "on")
    if kind is str:
        return raw.encode("utf-8").decode("unicode_escape") if key == "prompt_template" else raw
    return kind(raw)


def read_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    known = config_fields()
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = parse_value(key, value.strip())
    return out


def write_config_file(config: PipelineConfig, path: str | Path) -> None:
    lines = []
    for f in dataclasses.fields(PipelineConfig):
        v = getattr(config, f.name)
        if f.name == "prompt_template":
            v = v.encode("unicode_escape").decode("ascii")
        lines.append(f"{f.name} = {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- prompts -----------------------------------------------------------------

def build_prompt(q: Query, docs: Sequence[Document], template: str = DEFAULT_TEMPLATE,
                 char_budget: int = 1500) -> str:
    """Fill ``template`` with the question and the documents in rank order.

    With no documents, everything before the line holding ``{question}`` is dropped.
    """
    if "{question}" not in template or "{contexts}" not in template:
        raise ValueError("prompt template needs {contexts} and {question} placeholders")
    if not docs:
        lines = template.split("\n")
        start = next(i for i, ln in enumerate(lines) if "{question}" in ln)
        return "\n".join(lines[start:]).replace("{question}", q.text)
    contexts = "\n\n".join(d.text[:char_budget] for d in docs)
    return template.replace("{contexts}", contexts).replace("{question}", q.text)


# -- training set ------------------------------------------------------------

def build_training_set(config: PipelineConfig, queries: Sequence[Query], index: Index,
                       topics: TopicCache, client: GeneratorClient | None = None,
                       workdir: str | Path | None = None) -> RankingDataset:
    """Retrieve, label and featurize every query into a ranking dataset.

    Group rows keep first-stage retrieval order. Utility records and the
    feature file are written to the configured paths when ``workdir`` is given.
    """
    if not queries:
        raise ValueError("dataset has no queries")
    client = client or config.client()
    stats: dict = {}
    records = label_utilities(client, queries, index, config.n_retrieve, config.metric,
                              config.g_max, config.prompt_template, config.doc_char_budget,
                              config.max_in_flight, stats)
    dataset, rows = assemble_training_set(config, queries, records, index, topics)
    log.info("training set: %d groups, %d rows, %d queries skipped",
             len(dataset), len(rows), stats.get("skipped", 0))
    if workdir is not None:
        write_utilities(records, config.path("utilities", workdir))
        write_feature_file(rows, config.path("features", workdir))
    return dataset


def assemble_training_set(config: PipelineConfig, queries: Sequence[Query],
                          records: Sequence[UtilityRecord], index: Index, topics: TopicCache):
    """Featurize labeled candidates; returns the dataset and its feature-file rows."""
    by_query: dict[str, list] = {}
    for r in records:
        by_query.setdefault(r.query_id, []).append(r)
    groups, rows = [], []
    for q in queries:
        recs = sorted(by_query.get(q.query_id, []), key=lambda r: r.retrieval_rank)
        if not recs:
            continue
        feats = batch_extract(index, topics, q, [r.doc_id for r in recs], config.topic_a)
        group = QueryGroup(q.query_id, [r.doc_id for r in recs], np.array([x for _, x in feats]),
                           [r.grade for r in recs], [r.utility for r in recs])
        if config.train_top_k:
            group = top_k_by_utility(group, config.train_top_k)
        groups.append(group)
        for did, x, g in zip(group.doc_ids, group.features, group.grades):
            rows.append((int(g), q.query_id, did, x))
    return RankingDataset(groups), rows


def train_models(config: PipelineConfig, data: RankingDataset) -> dict:
    """Fit both rerankers, holding out a seeded by-query validation split."""
    train, valid = data.split(config.validation_fraction, config.seed)
    if len(train) == 0:
        train, valid = data, None
    return {
        "lambdamart": train_lambdamart(train, config.lambdamart(), validation=valid or None,
                                       g_max=config.g_max),
        "linear": train_linear_ranker(train, config.linear(), validation=valid or None),
    }


# -- inference ---------------------------------------------------------------

@dataclass
class InferenceResult:
    query_id: str
    answer: str
    doc_ids: list[str]
    scores: list[float]
    error: str | None = None

    def to_json(self) -> dict:
        d = {"query_id": self.query_id, "answer": self.answer, "doc_ids": self.doc_ids}
        if self.error:
            d["error"] = self.error
        return d


Ordering = Callable[[Query, list[tuple[str, float]]], list[tuple[str, float]]]


def reranker_ordering(model, index: Index, topics: TopicCache, topic_a: int) -> Ordering:
    def order(q, retrieved):
        cands = batch_extract(index, topics, q, [d for d, _ in retrieved], topic_a)
        return rerank(model, cands)
    return order


def first_stage_ordering(q, retrieved):
    return list(retrieved)


def no_context(q, retrieved):
    return []


def answer_queries(config: PipelineConfig, queries: Sequence[Query], index: Index,
                   ordering: Ordering, client: GeneratorClient | None = None) -> list[InferenceResult]:
    client = client or config.client()
    out = []
    for q in queries:
        ranked = ordering(q, retrieve(index, q, config.n_retrieve))
        ranked = ranked[:config.context_size]
        docs = [index.document(d) for d, _ in ranked]
        prompt = build_prompt(q, docs, config.prompt_template, config.doc_char_budget)
        try:
            answer, err = generate(client, prompt, context=f"query {q.query_id}"), None
        except GeneratorError as exc:
            log.error("query %s: %s", q.query_id, exc)
            answer, err = "", str(exc)
        out.append(InferenceResult(q.query_id, answer, [d for d, _ in ranked],
                                   [s for _, s in ranked], err))
    return out


def run_inference(config: PipelineConfig, model, queries: Sequence[Query], index: Index,
                  topics: TopicCache, client: GeneratorClient | None = None) -> list[InferenceResult]:
    """Retrieve N, rerank with ``model``, keep the top k, prompt and generate."""
    return answer_queries(config, queries, index,
                          reranker_ordering(model, index, topics, config.topic_a), client)


def format_run(results: Iterable[InferenceResult], tag: str) -> str:
    lines = []
    for r in results:
        for rank, (d, s) in enumerate(zip(r.doc_ids, r.scores), start=1):
            lines.append(f"{r.query_id} Q0 {d} {rank} {float(s)!r} {tag}")
    return "".join(ln + "\n" for ln in lines)


def write_run(results: Iterable[InferenceResult], path: str | Path, tag: str) -> None:
    Path(path).write_text(format_run(results, tag), encoding="utf-8")


def write_predictions(results: Iterable[InferenceResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = json.loads(line)
                out[str(o["query_id"])] = o.get("answer", "")
    return out


# -- evaluation --------------------------------------------------------------

@dataclass
class SystemScores:
    accuracy: float
    f1: float
    per_query_accuracy: list[float]
    per_query_f1: list[float]


@dataclass
class EvalReport:
    query_ids: list[str]
    systems: dict[str, SystemScores]
    significance: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query_ids": self.query_ids,
            "systems": {k: dataclasses.asdict(v) for k, v in self.systems.items()},
            "significance": self.significance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_table(self) -> str:
        name_w = max([len("system")] + [len(s) for s in self.systems])
        lines = [f"{'system':<{name_w}}  {'accuracy':>8}  {'f1':>8}"]
        for name, s in self.systems.items():
            lines.append(f"{name:<{name_w}}  {s.accuracy:>8.4f}  {s.f1:>8.4f}")
        if self.significance:
            pair_w = max(len(k) for k in self.significance)
            lines.append("")
            lines.append(f"{'paired t-test':<{pair_w}}  {'metric':>8}  {'t':>8}  {'p':>8}  sig@5%")
            for pair, by_metric in self.significance.items():
                for metric, r in by_metric.items():
                    t = "inf" if r["t_statistic"] is None else f"{r['t_statistic']:.4f}"
                    lines.append(f"{pair:<{pair_w}}  {metric:>8}  {t:>8}  {r['p_value']:>8.4f}  "
                                 f"{'yes' if r['significant_at_5pct'] else 'no'}")
        return "\n".join(lines) + "\n"


def _ttest_entry(a, b) -> dict:
    res = paired_ttest(a, b)
    t = res.t_statistic if np.isfinite(res.t_statistic) else None
    return {"t_statistic": t, "p_value": res.p_value, "df": res.df,
            "significant_at_5pct": res.significant_at_5pct}


def evaluate(systems: Mapping[str, Mapping[str, str]],
             golds: Mapping[str, Sequence[str]]) -> EvalReport:
    """Mean accuracy / max-F1 per system and paired t-tests between every pair.

    ``systems`` maps a system name to ``{query_id: answer}``; all must cover
    exactly the queries in ``golds``.
    """
    if not systems:
        raise ValueError("nothing to evaluate")
    qids = sorted(golds)
    if not qids:
        raise ValueError("no queries to evaluate")
    for name, preds in systems.items():
        diff = sorted(set(preds) ^ set(golds))
        if diff:
            raise ValueError(f"system {name!r} misaligned with gold queries: {diff[:20]}")
    scores = {}
    for name, preds in systems.items():
        acc = [accuracy(preds[q], golds[q]) for q in qids]
        f1 = [f1_score(preds[q], golds[q]) for q in qids]
        scores[name] = SystemScores(float(np.mean(acc)), float(np.mean(f1)), acc, f1)
    report = EvalReport(qids, scores)
    if len(qids) >= 2:
        for a, b in combinations(systems, 2):
            report.significance[f"{a} vs {b}"] = {
                "accuracy": _ttest_entry(scores[a].per_query_accuracy, scores[b].per_query_accuracy),
                "f1": _ttest_entry(scores[a].per_query_f1, scores[b].per_query_f1),
            }
    return report


SYSTEMS = ("zero_shot", "k_shot", "lure_rag", "ur_rag_linear")


def compare_systems(config: PipelineConfig, queries: Sequence[Query], index: Index,
                    topics: TopicCache, models: Mapping[str, object],
                    client: GeneratorClient | None = None):
    """Run every baseline and learned reranker over the same queries.

    ``models`` needs ``lambdamart`` and ``linear`` entries. Returns the
    report and the per-system inference results.
    """
    if not queries:
        raise ValueError("no queries to compare on")
    orderings = {
        "zero_shot": no_context,
        "k_shot": first_stage_ordering,
        "lure_rag": reranker_ordering(models["lambdamart"], index, topics, config.topic_a),
        "ur_rag_linear": reranker_ordering(models["linear"], index, topics, config.topic_a),
    }
    results = {name: answer_queries(config, queries, index, orderings[name], client)
               for name in SYSTEMS}
    golds = {q.query_id: list(q.gold_answers) for q in queries}
    preds = {name: {r.query_id: r.answer for r in res} for name, res in results.items()}
    return evaluate(preds, golds), results


__all__ = [
    "ConstantModel", "DEFAULT_TEMPLATE", "EvalReport", "InferenceResult", "PipelineConfig",
    "SYSTEMS", "answer_queries", "build_prompt", "build_training_set", "compare_systems",
    "evaluate", "first_stage_ordering", "format_run", "read_config_file", "run_inference",
    "train_models", "write_run",
]
