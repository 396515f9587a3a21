"""End-to-end experiments: prompt, complete, parse, grade, aggregate."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .dataset import Dataset, SchemaStyle, load_dataset, serialize_schema
from .demos import Demonstration, attach_reasoning, attach_schemas, load_corpus, select_demonstrations
from .errors import (
    CacheMiss,
    ConfigError,
    EndpointError,
    MalformedRecord,
    MissingFile,
    MissingPrediction,
    NoSqlFound,
    RunError,
    Timeout,
    UnknownExampleId,
)
from .grading import AggregateReport, ExampleOutcome, GoldCache, Limits, aggregate, evaluate_example
from .llm import Backend, CompletionRequest, LiveBackend, MockBackend, load_replay
from .prompts import PromptStrategy, StrategyKind, build_prompt, build_refine_prompt, parse_response
from .report import render_report, report_to_dict
from .sqlkit import normalize_sql

log = logging.getLogger(__name__)


@dataclass
class StrategyConfig:
    kind: str = "standard"
    shots: str = "few"
    clause_order: str = "select-last"
    link_granularity: str = "tables-all-columns"
    stage1: str = "standard"
    name: str | None = None


@dataclass
class BackendConfig:
    kind: str = "replay"
    model_name: str = "gpt-3.5-turbo"
    base_url: str = "https://api.openai.com/v1"
    replay_path: str | None = None
    record_path: str | None = None
    mock_path: str | None = None
    temperature: float = 0.3
    top_p: float = 1.0
    max_tokens: int = 1024
    concurrency: int = 4
    max_attempts: int = 5


@dataclass
class DemoConfig:
    corpus: str | None = None
    k: int = 5
    seed: int = 0


@dataclass
class ExperimentConfig:
    dataset_root: str
    split: str = "dev"
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    demos: DemoConfig = field(default_factory=DemoConfig)
    trials: int = 3
    schema_style: str = "compact"
    timeout: float = 30.0
    row_cap: int = 100_000
    tolerance: float = 1e-6
    workers: int = 4
    limit: int | None = None
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        nested = {"strategy": StrategyConfig, "backend": BackendConfig, "demos": DemoConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in d.items():
            if key in nested and isinstance(value, dict):
                sub_known = {f.name for f in fields(nested[key])}
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown {key} field(s): {', '.join(sorted(bad))}")
                value = nested[key](**value)
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        path = Path(path)
        if not path.is_file():
            raise MissingFile(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.workers < 1 or self.backend.concurrency < 1:
            raise ConfigError("workers and concurrency must be at least 1")
        try:
            StrategyKind(self.strategy.kind)
            StrategyKind(self.strategy.stage1)
            SchemaStyle(self.schema_style)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.strategy.stage1 == StrategyKind.GR.value:
            raise ConfigError("the refine stage cannot also be the first stage")
        if self.strategy.shots not in ("zero", "few"):
            raise ConfigError(f"shots must be zero or few, got {self.strategy.shots!r}")
        if self.backend.kind not in ("live", "replay", "mock"):
            raise ConfigError(f"unknown backend {self.backend.kind!r}")
        if not Path(self.dataset_root).is_dir():
            raise MissingFile(self.dataset_root)
        required = {"replay": self.backend.replay_path, "mock": self.backend.mock_path}
        if self.backend.kind in required:
            path = required[self.backend.kind]
            if not path:
                raise ConfigError(f"{self.backend.kind} backend needs a file path")
            if not Path(path).is_file():
                raise MissingFile(path)
        if self.demos.corpus and not Path(self.demos.corpus).is_file():
            raise MissingFile(self.demos.corpus)


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind == "replay":
        return load_replay(cfg.replay_path)
    if cfg.kind == "mock":
        return MockBackend.from_file(cfg.mock_path)
    cache = load_replay(cfg.record_path) if cfg.record_path and Path(cfg.record_path).is_file() else None
    return LiveBackend(
        cfg.base_url,
        record_to=cfg.record_path,
        cache=cache,
        concurrency=cfg.concurrency,
        max_attempts=cfg.max_attempts,
    )


def pick_demos(corpus: Sequence[Demonstration], k: int, seed: int) -> list[Demonstration]:
    if k > len(corpus):
        raise ConfigError(f"asked for {k} demonstrations but the corpus holds {len(corpus)}")
    if k == len(corpus):
        return list(corpus)
    chosen = select_demonstrations([(d.question, d.sql, d.db_id) for d in corpus], k, seed)
    return attach_reasoning(chosen, corpus)


def build_strategy(cfg: StrategyConfig, demos: Sequence[Demonstration]) -> PromptStrategy:
    demos = tuple(demos) if cfg.shots == "few" else ()
    params = dict(clause_order=cfg.clause_order, granularity=cfg.link_granularity, demos=demos)
    if cfg.kind == StrategyKind.GR.value:
        return PromptStrategy(StrategyKind.GR, stage1=PromptStrategy(cfg.stage1, **params), **params)
    return PromptStrategy(cfg.kind, **params)


@dataclass
class RunArtifact:
    config: dict
    strategy: dict
    traces: list[dict]
    report: AggregateReport
    timing: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "strategy": self.strategy,
            "report": report_to_dict(self.report),
            "timing": self.timing,
            "traces": self.traces,
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "run.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with (out / "trace.jsonl").open("w", encoding="utf-8") as fh:
            for t in self.traces:
                fh.write(json.dumps(t, sort_keys=True, ensure_ascii=False) + "\n")
        (out / "report.json").write_bytes(render_report(self.report, "json"))
        (out / "report.csv").write_bytes(render_report(self.report, "csv"))
        (out / "report.md").write_bytes(render_report(self.report, "markdown"))


def report_from_traces(traces: Sequence[dict], name: str) -> AggregateReport:
    """Recompute the aggregate report from persisted per-example traces."""
    by_trial: dict[int, list[ExampleOutcome]] = {}
    for t in sorted(traces, key=lambda t: (t["trial"], t["index"])):
        by_trial.setdefault(t["trial"], []).append(ExampleOutcome.from_dict(t["outcome"]))
    return aggregate([by_trial[k] for k in sorted(by_trial)], name)


def _complete(backend: Backend, cfg: BackendConfig, prompt: str, trial: int) -> str:
    req = CompletionRequest(cfg.model_name, prompt, cfg.temperature, cfg.top_p, cfg.max_tokens, trial)
    return backend.complete(req)


def run_experiment(
    cfg: ExperimentConfig,
    backend: Backend | None = None,
    dataset: Dataset | None = None,
) -> RunArtifact:
    """Run every example for every trial and grade the results.

    Generate-and-refine makes two sequential completions per example: the
    stage-2 prompt embeds the SQL parsed from stage 1. Unparseable answers are
    graded as invalid; backend failures abort the run with the example named.
    """
    cfg.validate()
    started = time.monotonic()
    ds = dataset or load_dataset(cfg.dataset_root, cfg.split)
    examples = ds.examples[: cfg.limit] if cfg.limit else ds.examples
    style = SchemaStyle(cfg.schema_style)
    schema_texts: dict[str, str] = {}

    def schema_text(db_id: str) -> str:
        if db_id not in schema_texts:
            schema_texts[db_id] = serialize_schema(ds.schemas[db_id], style)
        return schema_texts[db_id]

    demos: list[Demonstration] = []
    if cfg.strategy.shots == "few":
        corpus = load_corpus(cfg.demos.corpus)
        demos = pick_demos(corpus, cfg.demos.k, cfg.demos.seed)
        missing = [d.db_id for d in demos if d.db_id not in ds.schemas]
        if missing:
            raise ConfigError(f"demonstration database(s) not in the schema catalog: {', '.join(sorted(set(missing)))}")
        demos = attach_schemas(demos, {d.db_id: schema_text(d.db_id) for d in demos})
    strategy = build_strategy(cfg.strategy, demos)
    name = cfg.strategy.name or strategy.label
    limits = Limits(cfg.timeout, cfg.row_cap, cfg.tolerance)
    client = backend or make_backend(cfg.backend)
    gold_cache = GoldCache()
    first_stage = strategy.stage1 if strategy.kind is StrategyKind.GR else strategy
    for ex in examples:
        schema_text(ex.db_id)  # fill the cache before workers read it

    def work(trial: int, index: int) -> dict:
        ex = examples[index]
        schema = schema_texts[ex.db_id]
        prompts, responses = [build_prompt(strategy, ex.question, schema)], []
        trace = {"example_id": ex.example_id, "index": index, "trial": trial, "db_id": ex.db_id}
        parse_error = None
        try:
            responses.append(_complete(client, cfg.backend, prompts[0], trial))
            try:
                parsed = parse_response(first_stage, responses[0])
                sql, linked = parsed.final_sql, parsed.linked_schema
            except NoSqlFound as exc:
                sql, linked, parse_error = "", None, str(exc)
            if strategy.kind is StrategyKind.GR:
                trace["stage1_sql"] = sql
                if sql:
                    prompts.append(build_refine_prompt(ex.question, schema, sql, strategy.demos))
                    responses.append(_complete(client, cfg.backend, prompts[1], trial))
                    try:
                        sql = parse_response(strategy, responses[1]).final_sql
                    except NoSqlFound as exc:
                        sql, parse_error = "", str(exc)
        except (CacheMiss, EndpointError, Timeout) as exc:
            raise RunError(ex.example_id, trial, exc) from exc
        outcome = evaluate_example(ex, sql, ds.databases(ex.db_id), limits, gold_cache)
        if parse_error:
            outcome = replace(outcome, error=f"NoSqlFound: {parse_error}")
        trace.update(
            prompts=prompts,
            responses=responses,
            predicted_sql=sql,
            linked_schema=list(linked) if linked else None,
            outcome=outcome.to_dict(),
        )
        return trace

    jobs = [(t, i) for t in range(cfg.trials) for i in range(len(examples))]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        traces = list(pool.map(lambda job: work(*job), jobs))
    traces.sort(key=lambda t: (t["trial"], t["index"]))
    report = report_from_traces(traces, name)
    artifact = RunArtifact(
        config=cfg.to_dict(),
        strategy=strategy.describe(),
        traces=traces,
        report=report,
        timing={
            "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "elapsed_s": round(time.monotonic() - started, 3),
        },
    )
    if cfg.output_dir:
        artifact.write(cfg.output_dir)
    return artifact


def read_predictions(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    preds = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                example_id, sql = rec["example_id"], rec["sql"]
                if not isinstance(example_id, str) or not isinstance(sql, str):
                    raise TypeError("example_id and sql must be strings")
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecord(f"line {lineno}", str(exc), str(path)) from None
            preds[example_id] = sql
    return preds


def evaluate_offline(
    ds: Dataset,
    predictions: str | Path,
    limits: Limits = Limits(),
    workers: int = 4,
    name: str = "predictions",
) -> AggregateReport:
    """Grade a JSON-lines predictions file as a single trial."""
    preds = read_predictions(predictions)
    known = {ex.example_id for ex in ds.examples}
    unknown = sorted(set(preds) - known)
    if unknown:
        raise UnknownExampleId(f"unknown example id(s): {', '.join(unknown)}")
    missing = [ex.example_id for ex in ds.examples if ex.example_id not in preds]
    if missing:
        raise MissingPrediction(missing)
    cache = GoldCache()

    def grade(ex):
        return evaluate_example(ex, normalize_sql(preds[ex.example_id]), ds.databases(ex.db_id), limits, cache)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(grade, ds.examples))
    return aggregate([outcomes], name)
