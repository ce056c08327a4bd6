"""Command-line interface.

Every command accepts ``--config FILE`` (flat ``key = value`` lines) and one
flag per configuration key; flags win over the file. Paths are resolved
against ``--workdir``. Logs go to stderr, data to files and stdout.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from utilrank import FORMAT_VERSION, __version__

log = logging.getLogger("utilrank")

COMMANDS = (
    "make-synthetic", "index", "split-passages", "train-lda", "label-utility", "build-features",
    "train-reranker", "rerank", "infer", "evaluate", "compare", "feature-importance",
)

# Short spellings accepted by some commands, mapped onto config keys.
_ALIASES = {"train-lda": {"--topics": "num_topics", "--iters": "lda_iters"}}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class Invocation:
    command: str
    config_path: str | None
    overrides: dict = field(default_factory=dict)
    verbosity: int = 0
    workdir: str = "."
    options: dict = field(default_factory=dict)


def _config_arguments(parser: argparse.ArgumentParser, command: str) -> None:
    from utilrank.pipeline import PipelineConfig, config_fields, parse_value

    group = parser.add_argument_group("configuration overrides")
    aliases = _ALIASES.get(command, {})
    defaults = PipelineConfig()
    for key, kind in config_fields().items():
        flags = [f"--{key.replace('_', '-')}"] + [a for a, k in aliases.items() if k == key]

        def conv(raw, key=key):
            try:
                return parse_value(key, raw)
            except ValueError as exc:
                raise argparse.ArgumentTypeError(str(exc)) from None

        extra = {"nargs": "?", "const": True} if kind is bool else {}
        group.add_argument(*flags, dest=f"cfg__{key}", type=conv, default=argparse.SUPPRESS,
                           metavar=key.upper(), help=f"(default: {getattr(defaults, key)!r})"[:80],
                           **extra)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="utilrank", description="Utility-driven reranking for RAG.")
    parser.add_argument("--version", action="version",
                        version=f"utilrank {__version__} (model format {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    helps = {
        "make-synthetic": "write the fact-planted offline corpus and train/test queries",
        "index": "build the BM25 index from the corpus",
        "split-passages": "cut documents into fixed-length word passages",
        "train-lda": "train the LDA topic model",
        "label-utility": "label retrieved documents with generator utility",
        "build-features": "featurize labeled candidates into a feature file",
        "train-reranker": "train a reranker (lambdamart or linear) on a feature file",
        "rerank": "rerank a feature file with a trained model, emitting a TREC run",
        "infer": "retrieve, rerank, prompt and generate for the evaluation queries",
        "evaluate": "score prediction files against gold answers",
        "compare": "run all baselines and rerankers and compare them",
        "feature-importance": "report gain-based feature importance of a LambdaMART model",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--workdir", default=".", help="directory artifact paths are relative to")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name == "train-reranker":
            p.add_argument("kind", choices=("lambdamart", "linear"))
        if name == "make-synthetic":
            p.add_argument("--num-train", type=int, default=200)
            p.add_argument("--num-test", type=int, default=100)
            p.add_argument("--hard-fraction", type=float, default=0.6)
        if name == "split-passages":
            p.add_argument("--input", required=True)
            p.add_argument("--output", required=True)
            p.add_argument("--words", type=int, default=100)
        if name == "evaluate":
            p.add_argument("--system", action="append", default=[], metavar="NAME=PATH",
                           help="prediction file of a system (repeatable)")
        _config_arguments(p, name)
    return parser


def parse_args(argv: list[str] | None = None) -> Invocation:
    ns = build_parser().parse_args(argv)
    if ns.command is None:
        raise UsageError("utilrank: a command is required (see --help)")
    overrides, options = {}, {}
    for k, v in vars(ns).items():
        if k.startswith("cfg__"):
            overrides[k[5:]] = v
        elif k not in ("command", "config", "workdir", "verbose"):
            options[k] = v
    return Invocation(ns.command, ns.config, overrides, ns.verbose, ns.workdir, options)


def load_config(inv: Invocation):
    from utilrank.pipeline import PipelineConfig, read_config_file

    values = read_config_file(inv.config_path) if inv.config_path else {}
    values.update(inv.overrides)
    return PipelineConfig(**values)


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing input file: {path}")
    return path


# -- command implementations -------------------------------------------------

class _Context:
    """Lazily loaded artifacts for one invocation."""

    def __init__(self, inv: Invocation, cfg):
        self.inv, self.cfg, self.workdir = inv, cfg, Path(inv.workdir)
        self._index = self._topics = None

    def path(self, key):
        return self.cfg.path(key, self.workdir)

    @property
    def index(self):
        if self._index is None:
            from utilrank.corpus import load_index
            self._index = load_index(_require(self.path("index")))
        return self._index

    @property
    def topics(self):
        if self._topics is None:
            from utilrank.features import TopicCache
            from utilrank.topics import load_topic_model
            model = load_topic_model(_require(self.path("topic_model")))
            self._topics = TopicCache(model, self.cfg.fold_in_iters, self.cfg.seed)
        return self._topics

    def queries(self, key="dataset"):
        from utilrank.utility import read_dataset
        return read_dataset(_require(self.path(key)))

    def model(self, key="model"):
        from utilrank.reranker import load_model
        return load_model(_require(self.path(key)))


def cmd_make_synthetic(ctx):
    from utilrank.corpus import write_corpus
    from utilrank.synthetic import make_fact_corpus
    from utilrank.utility import write_dataset

    o = ctx.inv.options
    docs, train, test = make_fact_corpus(o["num_train"], o["num_test"], ctx.cfg.n_retrieve,
                                         o["hard_fraction"], ctx.cfg.context_size, seed=ctx.cfg.seed)
    ctx.workdir.mkdir(parents=True, exist_ok=True)
    write_corpus(docs, ctx.path("corpus"))
    write_dataset(train, ctx.path("dataset"))
    write_dataset(test, ctx.path("eval_dataset"))
    return f"{len(docs)} documents, {len(train)} train / {len(test)} test queries -> {ctx.workdir}"


def cmd_index(ctx):
    from utilrank.corpus import build_index, read_corpus, save_index

    index = build_index(read_corpus(_require(ctx.path("corpus"))), ctx.cfg.k1, ctx.cfg.b)
    save_index(index, ctx.path("index"))
    return f"indexed {index.num_docs} documents, {len(index.doc_freq)} terms -> {ctx.path('index')}"


def cmd_split_passages(ctx):
    from utilrank.corpus import read_corpus, split_passages, write_corpus

    o = ctx.inv.options
    passages = [p for d in read_corpus(_require(Path(o["input"]))) for p in split_passages(d, o["words"])]
    write_corpus(passages, o["output"])
    return f"{len(passages)} passages -> {o['output']}"


def cmd_train_lda(ctx):
    from utilrank.topics import save_topic_model, train_lda

    cfg = ctx.cfg
    docs = [ctx.index.document(d) for d in ctx.index.doc_ids]
    model = train_lda(docs, cfg.num_topics, cfg.lda_iters, cfg.lda_alpha or None, cfg.lda_beta,
                      cfg.seed, cfg.lda_subset or None)
    save_topic_model(model, ctx.path("topic_model"))
    return f"LDA with {model.num_topics} topics over {len(model.vocab)} terms -> {ctx.path('topic_model')}"


def cmd_label_utility(ctx):
    from utilrank.utility import label_utilities, write_utilities

    cfg = ctx.cfg
    stats = {}
    records = label_utilities(cfg.client(), ctx.queries(), ctx.index, cfg.n_retrieve, cfg.metric,
                              cfg.g_max, cfg.prompt_template, cfg.doc_char_budget,
                              cfg.max_in_flight, stats)
    write_utilities(records, ctx.path("utilities"))
    return (f"{len(records)} utility records ({stats.get('skipped', 0)} queries skipped)"
            f" -> {ctx.path('utilities')}")


def cmd_build_features(ctx):
    from utilrank.features import write_feature_file
    from utilrank.pipeline import assemble_training_set
    from utilrank.utility import read_utilities

    records = read_utilities(_require(ctx.path("utilities")))
    data, rows = assemble_training_set(ctx.cfg, ctx.queries(), records, ctx.index, ctx.topics)
    write_feature_file(rows, ctx.path("features"))
    return f"{len(rows)} feature rows for {len(data)} queries -> {ctx.path('features')}"


def _load_training_data(ctx):
    from utilrank.reranker import load_dataset
    from utilrank.utility import read_utilities

    utils = None
    if ctx.path("utilities").exists():
        utils = {(r.query_id, r.doc_id): r.utility for r in read_utilities(ctx.path("utilities"))}
    return load_dataset(_require(ctx.path("features")), utils, ctx.cfg.g_max)


def cmd_train_reranker(ctx):
    from utilrank.reranker import (
        mean_ndcg, save_model, train_lambdamart, train_linear_ranker,
    )
    from utilrank.reranker.lambdamart import _split_scores

    cfg = ctx.cfg
    data = _load_training_data(ctx)
    train, valid = data.split(cfg.validation_fraction, cfg.seed)
    if len(train) == 0:
        train, valid = data, None
    valid = valid or None
    if ctx.inv.options["kind"] == "lambdamart":
        model = train_lambdamart(train, cfg.lambdamart(), validation=valid, g_max=cfg.g_max)
        out = ctx.path("model")
        detail = f"{len(model.trees)} trees"
    else:
        model = train_linear_ranker(train, cfg.linear(), validation=valid)
        out = ctx.path("linear_model")
        detail = "linear"
    save_model(model, out)
    X, _ = train.stacked()
    nd = mean_ndcg(train, _split_scores(train, model.predict(X)), cfg.ndcg_cutoff)
    return f"{detail}, train NDCG@{cfg.ndcg_cutoff} {nd:.4f} -> {out}"


def cmd_rerank(ctx):
    from utilrank.pipeline import InferenceResult, write_run
    from utilrank.reranker import rerank

    model = ctx.model()
    data = _load_training_data(ctx)
    results = []
    for g in data.groups:
        ranked = rerank(model, list(zip(g.doc_ids, g.features)))
        results.append(InferenceResult(g.query_id, "", [d for d, _ in ranked], [s for _, s in ranked]))
    write_run(results, ctx.path("run"), ctx.cfg.run_tag)
    return f"reranked {len(results)} queries -> {ctx.path('run')}"


def cmd_infer(ctx):
    from utilrank.pipeline import run_inference, write_predictions, write_run

    results = run_inference(ctx.cfg, ctx.model(), ctx.queries("eval_dataset"), ctx.index, ctx.topics)
    write_predictions(results, ctx.path("predictions"))
    write_run(results, ctx.path("run"), ctx.cfg.run_tag)
    failed = sum(r.error is not None for r in results)
    return (f"{len(results)} queries answered ({failed} failed) -> "
            f"{ctx.path('predictions')}, {ctx.path('run')}")


def _write_report(ctx, report):
    from utilrank.plotting import plot_system_comparison

    ctx.path("report").write_text(report.to_json(), encoding="utf-8")
    plot_system_comparison(report, ctx.path("figure"))
    sys.stdout.write(report.to_table())


def cmd_evaluate(ctx):
    from utilrank.pipeline import evaluate, read_predictions

    specs = ctx.inv.options["system"] or [f"system={ctx.cfg.predictions}"]
    systems = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            raise UsageError(f"--system expects NAME=PATH, got {spec!r}")
        p = Path(path)
        systems[name] = read_predictions(_require(p if p.is_absolute() else ctx.workdir / p))
    golds = {q.query_id: list(q.gold_answers) for q in ctx.queries("eval_dataset")}
    report = evaluate(systems, golds)
    _write_report(ctx, report)
    return f"report -> {ctx.path('report')}, figure -> {ctx.path('figure')}"


def cmd_compare(ctx):
    from utilrank.pipeline import compare_systems, write_run

    models = {"lambdamart": ctx.model("model"), "linear": ctx.model("linear_model")}
    report, results = compare_systems(ctx.cfg, ctx.queries("eval_dataset"), ctx.index, ctx.topics,
                                      models)
    for name, res in results.items():
        write_run(res, ctx.workdir / f"run.{name}.trec", name)
    _write_report(ctx, report)
    return f"report -> {ctx.path('report')}, figure -> {ctx.path('figure')}"


def cmd_feature_importance(ctx):
    from utilrank.features import FEATURE_NAMES
    from utilrank.plotting import plot_feature_importance
    from utilrank.reranker import TreeEnsemble, feature_importance

    model = ctx.model()
    if not isinstance(model, TreeEnsemble):
        raise ValueError("feature importance needs a LambdaMART model")
    imp = feature_importance(model)
    for i, share in imp:
        sys.stdout.write(f"f{i:<3d} {FEATURE_NAMES[i - 1]:<16s} {share:.6f}\n")
    plot_feature_importance(imp, ctx.path("importance_figure"))
    return f"sum of shares {sum(s for _, s in imp):.6f}, figure -> {ctx.path('importance_figure')}"


HANDLERS = {
    "make-synthetic": cmd_make_synthetic,
    "index": cmd_index,
    "split-passages": cmd_split_passages,
    "train-lda": cmd_train_lda,
    "label-utility": cmd_label_utility,
    "build-features": cmd_build_features,
    "train-reranker": cmd_train_reranker,
    "rerank": cmd_rerank,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "feature-importance": cmd_feature_importance,
}


def run(inv: Invocation) -> int:
    level = logging.WARNING - 10 * min(inv.verbosity, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(inv)
        summary = HANDLERS[inv.command](_Context(inv, cfg))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported, mapped to the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(summary)
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        inv = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    return run(inv)


if __name__ == "__main__":
    sys.exit(main())
