"""Divide-and-prompt text-to-SQL: prompting strategies, LLM backends and execution grading."""

from .dataset import (
    Dataset,
    DatabaseSchema,
    DatasetExample,
    SchemaStyle,
    load_dataset,
    serialize_schema,
    validate_dataset,
)
from .demos import Demonstration, load_corpus, select_demonstrations
from .errors import DnPError
from .execution import ExecutionResult, execute_sql, results_equal
from .grading import AggregateReport, ExampleOutcome, Limits, aggregate, evaluate_example, hand_entered
from .harness import ExperimentConfig, RunArtifact, evaluate_offline, run_experiment
from .llm import (
    CompletionRecord,
    CompletionRequest,
    LiveBackend,
    MockBackend,
    ReplayBackend,
    cache_key,
    complete,
    load_replay,
)
from .prompts import (
    ClauseOrder,
    LinkGranularity,
    PromptStrategy,
    StrategyKind,
    build_prompt,
    build_refine_prompt,
    parse_response,
)
from .report import render_report
from .sqlkit import (
    ClauseSet,
    DifficultyLevel,
    assemble_clauses,
    classify_difficulty,
    is_order_sensitive,
    normalize_sql,
    split_clauses,
)

__version__ = "0.1.0"
