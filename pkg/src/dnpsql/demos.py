"""Few-shot demonstrations: the hand-written corpus and question clustering.

Corpus file format (JSON array)::

    [{"question": "...", "db_id": "...", "sql": "...",
      "reasoning": {"cot": [...], "cc": [...], "sl:exact": [...], ...},
      "refine": {"initial_sql": "...", "reasoning": [...]}}]

``reasoning`` maps a reasoning key (see ``PromptStrategy.reasoning_key``) to
the ordered step strings; ``refine`` is optional and supplies the worked
example for the second stage of generate-and-refine.
"""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientDiversity, MalformedRecord, MissingFile

_WORD = re.compile(r"[a-z0-9]+")
CATCH_ALL = "*"


@dataclass(frozen=True)
class RefineExample:
    initial_sql: str
    reasoning: tuple[str, ...]


@dataclass(frozen=True)
class Demonstration:
    question: str
    sql: str
    db_id: str
    reasoning: Mapping[str, tuple[str, ...]] = field(default_factory=dict, hash=False)
    refine: RefineExample | None = None
    schema_text: str = ""

    def steps(self, key: str | None) -> tuple[str, ...]:
        if key is None:
            return ()
        return tuple(self.reasoning.get(key, ()))


def default_corpus_path():
    return resources.files("dnpsql") / "data" / "demonstrations.json"


def load_corpus(path: str | Path | None = None) -> list[Demonstration]:
    """Read a demonstration corpus; the packaged one when ``path`` is None."""
    source = default_corpus_path() if path is None else Path(path)
    if path is not None and not Path(path).is_file():
        raise MissingFile(path)
    try:
        raw = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"line {exc.lineno}", exc.msg, str(source)) from None
    demos = []
    for i, rec in enumerate(raw):
        try:
            refine = None
            if rec.get("refine"):
                refine = RefineExample(rec["refine"]["initial_sql"], tuple(rec["refine"]["reasoning"]))
            demos.append(
                Demonstration(
                    question=rec["question"],
                    sql=rec["sql"],
                    db_id=rec["db_id"],
                    reasoning={k: tuple(v) for k, v in rec.get("reasoning", {}).items()},
                    refine=refine,
                )
            )
        except (KeyError, TypeError) as exc:
            raise MalformedRecord(i, f"bad demonstration: {exc}", str(source)) from None
    return demos


def attach_schemas(demos: Sequence[Demonstration], schema_texts: Mapping[str, str]) -> list[Demonstration]:
    """Fill in each demonstration's own schema text, keyed by db_id."""
    out = []
    for d in demos:
        if d.db_id not in schema_texts:
            raise MissingFile(f"schema for demonstration database {d.db_id!r}")
        out.append(replace(d, schema_text=schema_texts[d.db_id]))
    return out


def _key(question: str) -> str:
    return " ".join(_WORD.findall(question.lower()))


def attach_reasoning(selected: Sequence[Demonstration], corpus: Sequence[Demonstration]) -> list[Demonstration]:
    """Swap selected demonstrations for their hand-written corpus entries."""
    by_question = {_key(d.question): d for d in corpus}
    out = []
    for d in selected:
        hit = by_question.get(_key(d.question))
        if hit is None:
            raise KeyError(f"no hand-written reasoning for demonstration {d.question!r}")
        out.append(replace(hit, schema_text=d.schema_text or hit.schema_text))
    return out


# -- clustering --------------------------------------------------------------------


def leading_token(question: str) -> str:
    m = _WORD.search(question.lower())
    return m.group() if m else ""


def _bag(questions: Sequence[str]) -> np.ndarray:
    """Binary bag-of-words matrix over the questions' own vocabulary."""
    token_sets = [set(_WORD.findall(q.lower())) for q in questions]
    vocab = {w: i for i, w in enumerate(sorted(set().union(*token_sets)))}
    mat = np.zeros((len(questions), max(len(vocab), 1)))
    for row, toks in enumerate(token_sets):
        for t in toks:
            mat[row, vocab[t]] = 1.0
    return mat


def _nearest_to_centroid(questions: Sequence[str]) -> int:
    mat = _bag(questions)
    centroid = mat.mean(axis=0)
    norms = np.linalg.norm(mat, axis=1) * (np.linalg.norm(centroid) or 1.0)
    sims = mat @ centroid / np.where(norms == 0, 1.0, norms)
    return int(np.argmax(sims))  # first index wins ties


def _sample(indices: list[int], limit: int, rng: np.random.Generator) -> list[int]:
    if len(indices) <= limit:
        return indices
    return sorted(rng.choice(indices, size=limit, replace=False).tolist())


def _jaccard_distances(questions: Sequence[str]) -> np.ndarray:
    mat = _bag(questions)
    inter = mat @ mat.T
    sizes = mat.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(union > 0, inter / union, 1.0)
    return 1.0 - sim


def _k_medoids(dist: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100) -> tuple[list[int], np.ndarray]:
    n = len(dist)
    medoids = [int(rng.integers(n))]
    while len(medoids) < k:
        nearest = dist[:, medoids].min(axis=1)
        if nearest.sum() == 0:
            break
        medoids.append(int(rng.choice(n, p=nearest / nearest.sum())))
    labels = dist[:, medoids].argmin(axis=1)
    for _ in range(max_iter):
        updated = []
        for c in range(len(medoids)):
            members = np.flatnonzero(labels == c)
            if len(members) == 0:
                updated.append(medoids[c])
                continue
            within = dist[np.ix_(members, members)].sum(axis=1)
            updated.append(int(members[np.argmin(within)]))
        new_labels = dist[:, updated].argmin(axis=1)
        if updated == medoids and (new_labels == labels).all():
            break
        medoids, labels = updated, new_labels
    return medoids, labels


def select_demonstrations(
    questions: Sequence[tuple[str, str, str]],
    k: int = 5,
    seed: int = 0,
    method: str = "leading-token",
    min_cluster_fraction: float = 0.01,
    max_points: int = 1000,
) -> list[Demonstration]:
    """Cluster (question, sql, db_id) triples and return one representative each.

    ``leading-token`` groups questions by their first word, folding words that
    lead fewer than ``min_cluster_fraction`` of the questions into one catch-all
    group, keeps the ``k`` largest groups and picks the member closest to each
    group's bag-of-words centroid. ``k-medoids`` clusters on token-overlap
    (Jaccard) distance instead and returns the medoids. Large groups are
    subsampled to ``max_points`` with ``seed``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not questions:
        raise InsufficientDiversity("no questions to cluster")
    rng = np.random.default_rng(seed)
    texts = [q for q, _, _ in questions]

    if method == "leading-token":
        leaders = [leading_token(q) for q in texts]
        counts = Counter(leaders)
        floor = min_cluster_fraction * len(texts)
        groups: dict[str, list[int]] = defaultdict(list)
        for i, lead in enumerate(leaders):
            groups[lead if counts[lead] >= floor and lead else CATCH_ALL].append(i)
        ordered = sorted(groups, key=lambda g: (g == CATCH_ALL, -len(groups[g]), g))
        if len(ordered) < k:
            raise InsufficientDiversity(f"only {len(ordered)} question clusters for k={k}")
        picks = []
        for g in ordered[:k]:
            members = _sample(groups[g], max_points, rng)
            picks.append(members[_nearest_to_centroid([texts[i] for i in members])])
    elif method == "k-medoids":
        pool = _sample(list(range(len(texts))), max_points, rng)
        distinct = len({_key(texts[i]) for i in pool})
        if distinct < k:
            raise InsufficientDiversity(f"only {distinct} distinct questions for k={k}")
        medoids, labels = _k_medoids(_jaccard_distances([texts[i] for i in pool]), k, rng)
        sizes = np.bincount(labels, minlength=len(medoids))
        if len(set(medoids)) < k or (sizes == 0).any():
            raise InsufficientDiversity(f"k-medoids formed fewer than {k} clusters")
        order = sorted(range(len(medoids)), key=lambda c: (-sizes[c], medoids[c]))
        picks = [pool[medoids[c]] for c in order]
    else:
        raise ValueError(f"unknown clustering method {method!r}")

    return [Demonstration(question=questions[i][0], sql=questions[i][1], db_id=questions[i][2]) for i in picks]
