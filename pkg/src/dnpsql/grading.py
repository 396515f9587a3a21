"""Per-example grading (VA / EX / TS) and per-tier, per-trial aggregation."""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from statistics import fmean
from typing import Iterable, Sequence

from .errors import DnPError, EmptyInput, ParseError, RowCapExceeded, SqlError, Timeout, TrialMismatch
from .execution import (
    DEFAULT_ROW_CAP,
    DEFAULT_TIMEOUT,
    DEFAULT_TOLERANCE,
    ExecutionResult,
    execute_sql,
    results_equal,
)
from .sqlkit import DifficultyLevel, classify_difficulty, is_order_sensitive

TIER_KEYS = ("easy", "medium", "hard", "extra", "all")


@dataclass(frozen=True)
class Limits:
    timeout: float = DEFAULT_TIMEOUT
    row_cap: int = DEFAULT_ROW_CAP
    tolerance: float = DEFAULT_TOLERANCE


@dataclass(frozen=True)
class DatabaseSet:
    """The original database of an example plus its optional test-suite variants."""

    original: Path
    suite: tuple[Path, ...] = ()


@dataclass(frozen=True)
class ExampleOutcome:
    example_id: str
    predicted_sql: str
    valid: bool
    execution_match: bool
    test_suite_match: bool | None
    difficulty: DifficultyLevel
    error: str | None = None
    gold_skipped: bool = False

    def __post_init__(self):
        if self.execution_match and not self.valid:
            raise ValueError("execution_match implies valid")
        if self.test_suite_match and not self.execution_match:
            raise ValueError("test_suite_match implies execution_match")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["difficulty"] = self.difficulty.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExampleOutcome:
        return cls(**{**d, "difficulty": DifficultyLevel(d["difficulty"])})


class GoldCache:
    """Memoizes gold executions; safe to share between worker threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._results: dict[tuple[str, str], ExecutionResult | DnPError] = {}

    def get(self, db: Path, sql: str, limits: Limits) -> ExecutionResult:
        key = (str(db), sql)
        with self._lock:
            hit = self._results.get(key)
        if hit is None:
            try:
                hit = execute_sql(db, sql, limits.timeout, limits.row_cap)
            except DnPError as exc:
                hit = exc
            with self._lock:
                self._results.setdefault(key, hit)
        if isinstance(hit, DnPError):
            raise hit
        return hit


def gold_difficulty(gold_sql: str) -> DifficultyLevel:
    # unparseable gold queries land in the hardest tier rather than vanishing
    try:
        return classify_difficulty(gold_sql)
    except ParseError:
        return DifficultyLevel.EXTRA


def evaluate_example(
    example,
    predicted_sql: str,
    dbs: DatabaseSet,
    limits: Limits = Limits(),
    gold_cache: GoldCache | None = None,
) -> ExampleOutcome:
    """Grade one prediction. Every failure is encoded in the outcome."""
    cache = gold_cache or GoldCache()
    difficulty = gold_difficulty(example.gold_sql)
    try:
        order_sensitive = is_order_sensitive(example.gold_sql)
    except ParseError:
        order_sensitive = False

    def run_pred(db):
        return execute_sql(db, predicted_sql, limits.timeout, limits.row_cap)

    valid, error, pred_result = False, None, None
    try:
        pred_result = run_pred(dbs.original)
        valid = True
    except RowCapExceeded as exc:
        valid, error = True, f"row cap: {exc}"
    except (SqlError, Timeout) as exc:
        error = f"{type(exc).__name__}: {exc}"

    try:
        gold_result = cache.get(dbs.original, example.gold_sql, limits)
    except DnPError as exc:
        return ExampleOutcome(
            example.example_id, predicted_sql, valid, False, None, difficulty,
            error=f"gold failed: {exc}", gold_skipped=True,
        )

    match = pred_result is not None and results_equal(pred_result, gold_result, order_sensitive, limits.tolerance)

    suite_match = None
    if dbs.suite:
        suite_match = match
        for variant in dbs.suite:
            if not suite_match:
                break
            try:
                gold_v = cache.get(variant, example.gold_sql, limits)
            except DnPError:
                continue
            try:
                pred_v = run_pred(variant)
            except DnPError:
                suite_match = False
                break
            suite_match = results_equal(pred_v, gold_v, order_sensitive, limits.tolerance)
    return ExampleOutcome(example.example_id, predicted_sql, valid, match, suite_match, difficulty, error=error)


# -- aggregation --------------------------------------------------------------------


def pct(value: float | None) -> float | None:
    """Round a percentage half-up to one decimal."""
    if value is None:
        return None
    return float(Decimal(repr(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class TierMetrics:
    va: float | None
    ex: float | None
    ts: float | None
    count: int = 0
    ts_coverage: int = 0


@dataclass(frozen=True)
class TrialMetrics:
    tiers: dict[str, TierMetrics]

    def __getitem__(self, tier: str) -> TierMetrics:
        return self.tiers[tier]


@dataclass(frozen=True)
class StrategyReport:
    name: str
    trial_count: int
    mean: TrialMetrics
    trials: tuple[TrialMetrics, ...] = field(default=())


@dataclass(frozen=True)
class AggregateReport:
    strategies: tuple[StrategyReport, ...] = ()

    def __add__(self, other: AggregateReport) -> AggregateReport:
        return AggregateReport(self.strategies + other.strategies)


def _tier_metrics(outcomes: Sequence[ExampleOutcome]) -> TierMetrics:
    counted = [o for o in outcomes if not o.gold_skipped]
    n = len(counted)
    if n == 0:
        return TierMetrics(None, None, None, 0, 0)
    coverage = sum(o.test_suite_match is not None for o in counted)
    va = 100.0 * sum(o.valid for o in counted) / n
    ex = 100.0 * sum(o.execution_match for o in counted) / n
    ts = None
    if coverage:
        # examples without suite variants are graded on the original database alone
        ts_hits = sum(o.execution_match if o.test_suite_match is None else o.test_suite_match for o in counted)
        ts = 100.0 * ts_hits / n
    return TierMetrics(va, ex, ts, n, coverage)


def trial_metrics(outcomes: Sequence[ExampleOutcome]) -> TrialMetrics:
    tiers = {}
    for level in DifficultyLevel:
        tiers[level.value] = _tier_metrics([o for o in outcomes if o.difficulty is level])
    tiers["all"] = _tier_metrics(outcomes)
    return TrialMetrics(tiers)


def _mean(values: Iterable[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return fmean(present) if present else None


def mean_metrics(trials: Sequence[TrialMetrics]) -> TrialMetrics:
    tiers = {}
    for key in TIER_KEYS:
        rows = [t[key] for t in trials]
        tiers[key] = TierMetrics(
            _mean(r.va for r in rows),
            _mean(r.ex for r in rows),
            _mean(r.ts for r in rows),
            rows[0].count,
            rows[0].ts_coverage,
        )
    return TrialMetrics(tiers)


def aggregate(outcomes: Sequence[Sequence[ExampleOutcome]], name: str = "") -> AggregateReport:
    """Score each trial, then average the trials, overall and per tier."""
    if not outcomes or not any(outcomes):
        raise EmptyInput("no outcomes to aggregate")
    ids = [sorted(o.example_id for o in trial) for trial in outcomes]
    for n, trial_ids in enumerate(ids[1:], start=1):
        if trial_ids != ids[0]:
            raise TrialMismatch(f"trial {n} covers a different example set than trial 0")
    per_trial = tuple(trial_metrics(trial) for trial in outcomes)
    return AggregateReport((StrategyReport(name, len(per_trial), mean_metrics(per_trial), per_trial),))


def hand_entered(name: str, va: float, ex: float, ts: float, tier_ex: dict[str, float] | None = None) -> StrategyReport:
    """A single-trial strategy row built from published numbers rather than outcomes."""
    tiers = {key: TierMetrics(None, None, None) for key in TIER_KEYS}
    for key, value in (tier_ex or {}).items():
        tiers[key] = TierMetrics(None, value, None)
    tiers["all"] = TierMetrics(va, ex, ts)
    metrics = TrialMetrics(tiers)
    return StrategyReport(name, 1, metrics, (metrics,))


def metric_order_violations(report: AggregateReport) -> list[str]:
    """Every (strategy, trial, tier) where TS <= EX <= VA fails."""
    bad = []
    for strat in report.strategies:
        for label, metrics in [("mean", strat.mean)] + [(f"trial {i}", t) for i, t in enumerate(strat.trials)]:
            for key, m in metrics.tiers.items():
                if m.va is None or m.ex is None:
                    continue
                if m.ex > m.va + 1e-9 or (m.ts is not None and m.ts > m.ex + 1e-9):
                    bad.append(f"{strat.name} {label} {key}: VA={m.va} EX={m.ex} TS={m.ts}")
    return bad
