"""FEditScore: dependency-graph validation and gated, weighted scoring.

Questions come in three categories. Instruction-critical questions (ICQ) are
roots carrying the largest fixed weight, context-preserving questions (CPQ)
are independent roots with a small fixed weight, and instruction-dependent
questions (IDQ) hang below an ICQ with a weight that decays with depth::

    w_idq(l) = 1 + w_icq * t_decay ** l

A question only counts as satisfied when it and every ancestor were answered
"yes". The score is the weighted sum of satisfied questions divided by the
weighted sum of all questions.

Everything here is pure and works with either ``float`` or
``fractions.Fraction`` weights; the latter gives exact rational results.
"""

from __future__ import annotations

import enum
import math
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Mapping

__all__ = [
    "AnswerMismatch",
    "AnswerSet",
    "CategoryViolation",
    "CycleDetected",
    "DanglingParent",
    "Decision",
    "DependencyGraph",
    "DomainError",
    "EmptyGraph",
    "GraphError",
    "Question",
    "QuestionCategory",
    "QuestionScore",
    "ScoreReport",
    "ValidatedGraph",
    "Verdict",
    "Weights",
    "feditscore",
    "filter_decision",
    "gate",
    "idq_weight",
    "normalize_question_text",
    "question_weight",
    "validate_graph",
]


class GraphError(ValueError):
    """Base class for structural problems in a dependency graph."""


class EmptyGraph(GraphError):
    pass


class DanglingParent(GraphError):
    def __init__(self, missing: Mapping[str, tuple[str, ...]]):
        self.missing = dict(missing)
        detail = "; ".join(f"{qid} -> {', '.join(ps)}" for qid, ps in sorted(self.missing.items()))
        super().__init__(f"unresolved parent ids: {detail}")


class CycleDetected(GraphError):
    def __init__(self, cycle: tuple[str, ...]):
        self.cycle = cycle
        super().__init__("cycle detected: " + " -> ".join(cycle + cycle[:1]))


class CategoryViolation(GraphError):
    pass


class AnswerMismatch(ValueError):
    def __init__(self, missing: Iterable[str], extra: Iterable[str]):
        self.missing = tuple(sorted(missing))
        self.extra = tuple(sorted(extra))
        super().__init__(f"answers do not match graph (missing={list(self.missing)}, extra={list(self.extra)})")


class DomainError(ValueError):
    pass


class QuestionCategory(str, enum.Enum):
    ICQ = "ICQ"
    IDQ = "IDQ"
    CPQ = "CPQ"

    @classmethod
    def parse(cls, value: str) -> "QuestionCategory":
        try:
            return cls(value.strip().upper())
        except (ValueError, AttributeError):
            raise ValueError(f"unknown question category: {value!r}") from None


class Verdict(str, enum.Enum):
    YES = "yes"
    NO = "no"
    UNPARSEABLE = "unparseable"

    @classmethod
    def parse(cls, value: str) -> "Verdict":
        try:
            return cls(value.strip().lower())
        except (ValueError, AttributeError):
            raise ValueError(f"unknown verdict: {value!r}") from None


class Decision(str, enum.Enum):
    KEEP = "Keep"
    DROP = "Drop"


_WS = re.compile(r"\s+")


def normalize_question_text(text: str) -> str:
    """Trim, collapse internal whitespace and guarantee a trailing ``?``."""
    text = _WS.sub(" ", text).strip()
    if not text.rstrip("?").strip():
        raise ValueError("question text is empty")
    if not text.endswith("?"):
        text = text.rstrip(".!;: ") + "?"
    return text


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    category: QuestionCategory
    parents: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("question id must be a non-empty string")
        object.__setattr__(self, "text", normalize_question_text(self.text))
        if not isinstance(self.category, QuestionCategory):
            object.__setattr__(self, "category", QuestionCategory.parse(self.category))
        object.__setattr__(self, "parents", frozenset(self.parents))


@dataclass(frozen=True)
class DependencyGraph:
    """Questions keyed by id, plus the id of the sample they evaluate."""

    questions: Mapping[str, Question]
    sample_id: str = ""

    @classmethod
    def from_questions(cls, questions: Iterable[Question], sample_id: str = "") -> "DependencyGraph":
        table: dict[str, Question] = {}
        for q in questions:
            if q.id in table:
                raise ValueError(f"duplicate question id: {q.id!r}")
            table[q.id] = q
        return cls(questions=table, sample_id=sample_id)

    def __len__(self) -> int:
        return len(self.questions)


@dataclass(frozen=True)
class Weights:
    w_icq: Real = 3.0
    w_cpq: Real = 1.0
    t_decay: Real = 0.3
    alpha: Real = 0.8

    def __post_init__(self) -> None:
        if not self.w_cpq > 0:
            raise DomainError(f"w_cpq must be positive, got {self.w_cpq}")
        if not self.w_icq >= self.w_cpq:
            raise DomainError(f"w_icq must be >= w_cpq, got {self.w_icq} < {self.w_cpq}")
        if not 0 < self.t_decay < 1:
            raise DomainError(f"t_decay out of range (0, 1): {self.t_decay}")
        if not 0 <= self.alpha <= 1:
            raise DomainError(f"alpha out of range [0, 1]: {self.alpha}")

    @classmethod
    def exact_defaults(cls) -> "Weights":
        return cls(w_icq=Fraction(3), w_cpq=Fraction(1), t_decay=Fraction(3, 10), alpha=Fraction(4, 5))


@dataclass(frozen=True)
class AnswerSet:
    verdicts: Mapping[str, Verdict]
    sample_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "verdicts",
            {k: v if isinstance(v, Verdict) else Verdict.parse(v) for k, v in self.verdicts.items()},
        )


@dataclass(frozen=True)
class ValidatedGraph:
    """A graph that passed :func:`validate_graph`, with derived structure cached."""

    graph: DependencyGraph
    order: tuple[str, ...]
    depths: Mapping[str, int | None]
    ancestors: Mapping[str, frozenset[str]]

    @property
    def questions(self) -> Mapping[str, Question]:
        return self.graph.questions


def _find_cycle(questions: Mapping[str, Question]) -> tuple[str, ...] | None:
    white, grey, black = 0, 1, 2
    color = dict.fromkeys(questions, white)
    for start in sorted(questions):
        if color[start] != white:
            continue
        # iterative DFS along parent edges; path holds the grey chain
        path: list[str] = []
        stack: list[tuple[str, Iterable[str]]] = [(start, iter(sorted(questions[start].parents)))]
        color[start] = grey
        path.append(start)
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                color[node] = black
                continue
            if color[nxt] == grey:
                return tuple(path[path.index(nxt):])
            if color[nxt] == white:
                color[nxt] = grey
                path.append(nxt)
                stack.append((nxt, iter(sorted(questions[nxt].parents))))
    return None


def validate_graph(graph: DependencyGraph) -> ValidatedGraph:
    """Check structure and precompute topological order, depths and ancestor sets.

    Raises EmptyGraph, DanglingParent, CycleDetected or CategoryViolation,
    checked in that order.
    """
    qs = graph.questions
    if not qs:
        raise EmptyGraph("graph has no questions")
    for key, q in qs.items():
        if key != q.id:
            raise ValueError(f"question keyed as {key!r} has id {q.id!r}")

    missing = {q.id: tuple(sorted(q.parents - qs.keys())) for q in qs.values() if q.parents - qs.keys()}
    if missing:
        raise DanglingParent(missing)

    cycle = _find_cycle(qs)
    if cycle is not None:
        raise CycleDetected(cycle)

    if not any(q.category is QuestionCategory.ICQ for q in qs.values()):
        raise CategoryViolation("graph has no ICQ question")
    for q in sorted(qs.values(), key=lambda q: q.id):
        if q.category is QuestionCategory.ICQ and q.parents:
            raise CategoryViolation(f"ICQ {q.id!r} must not have parents")
        if q.category is QuestionCategory.CPQ and q.parents:
            raise CategoryViolation(f"CPQ {q.id!r} must not have parents")
        if q.category is QuestionCategory.IDQ:
            if not q.parents:
                raise CategoryViolation(f"IDQ {q.id!r} has no parent")
            bad = sorted(p for p in q.parents if qs[p].category is QuestionCategory.CPQ)
            if bad:
                raise CategoryViolation(f"IDQ {q.id!r} depends on CPQ {', '.join(bad)}; IDQ ancestry must reach an ICQ")

    children: dict[str, list[str]] = {k: [] for k in qs}
    indegree = {k: len(q.parents) for k, q in qs.items()}
    for q in qs.values():
        for p in q.parents:
            children[p].append(q.id)

    ready = deque(sorted(k for k, d in indegree.items() if d == 0))
    order: list[str] = []
    while ready:
        node = ready.popleft()
        order.append(node)
        for child in sorted(children[node]):
            indegree[child] -= 1
            if indegree[child] == 0:
                ready.append(child)

    ancestors: dict[str, frozenset[str]] = {}
    for node in order:
        acc: set[str] = set()
        for p in qs[node].parents:
            acc.add(p)
            acc |= ancestors[p]
        ancestors[node] = frozenset(acc)

    # multi-source BFS from every ICQ: nearest-ICQ edge distance
    dist: dict[str, int] = {}
    frontier = deque()
    for k, q in qs.items():
        if q.category is QuestionCategory.ICQ:
            dist[k] = 0
            frontier.append(k)
    while frontier:
        node = frontier.popleft()
        for child in children[node]:
            if child not in dist:
                dist[child] = dist[node] + 1
                frontier.append(child)

    depths: dict[str, int | None] = {}
    for k, q in qs.items():
        depths[k] = dist[k] if q.category is QuestionCategory.IDQ else None

    return ValidatedGraph(graph=graph, order=tuple(order), depths=depths, ancestors=ancestors)


def idq_weight(depth: int, weights: Weights):
    """Weight of an IDQ ``depth`` edges below its nearest ICQ."""
    if isinstance(depth, bool) or not isinstance(depth, int) or depth < 1:
        raise DomainError(f"IDQ depth must be an integer >= 1, got {depth!r}")
    power = 1
    for _ in range(depth):
        power = power * weights.t_decay
    return 1 + weights.w_icq * power


def question_weight(validated: ValidatedGraph, qid: str, weights: Weights):
    cat = validated.questions[qid].category
    if cat is QuestionCategory.ICQ:
        return weights.w_icq
    if cat is QuestionCategory.CPQ:
        return weights.w_cpq
    return idq_weight(validated.depths[qid], weights)


def gate(validated: ValidatedGraph, answers: AnswerSet) -> dict[str, int]:
    """Gated indicator per question: 1 iff it and all its ancestors are "yes"."""
    keys = validated.questions.keys()
    given = answers.verdicts.keys()
    if keys != given:
        raise AnswerMismatch(keys - given, given - keys)
    yes = {k for k, v in answers.verdicts.items() if v is Verdict.YES}
    return {k: int(k in yes and validated.ancestors[k] <= yes) for k in validated.order}


def _total(values: list):
    if all(isinstance(v, (int, float)) for v in values):
        return math.fsum(values)
    return sum(values, Fraction(0))


@dataclass(frozen=True)
class QuestionScore:
    depth: int | None
    weight: Real
    delta: int


@dataclass(frozen=True)
class ScoreReport:
    per_question: Mapping[str, QuestionScore]
    numerator: Real
    denominator: Real
    score: Real
    decision: Decision
    sample_id: str = ""
    unparseable: tuple[str, ...] = field(default=())

    def to_document(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "score": float(self.score),
            "decision": self.decision.value,
            "numerator": float(self.numerator),
            "denominator": float(self.denominator),
            "per_question": {
                qid: {"depth": qs.depth, "weight": float(qs.weight), "delta": qs.delta}
                for qid, qs in sorted(self.per_question.items())
            },
            "unparseable": list(self.unparseable),
        }


def filter_decision(score: Real, weights: Weights) -> Decision:
    return Decision.KEEP if score >= weights.alpha else Decision.DROP


def feditscore(validated: ValidatedGraph, answers: AnswerSet, weights: Weights | None = None) -> ScoreReport:
    weights = weights or Weights()
    deltas = gate(validated, answers)
    per_question: dict[str, QuestionScore] = {}
    earned, possible = [], []
    for qid in validated.order:
        w = question_weight(validated, qid, weights)
        per_question[qid] = QuestionScore(depth=validated.depths[qid], weight=w, delta=deltas[qid])
        possible.append(w)
        earned.append(w if deltas[qid] else 0 * w)
    numerator = _total(earned)
    denominator = _total(possible)
    score = numerator / denominator
    unparseable = tuple(sorted(k for k, v in answers.verdicts.items() if v is Verdict.UNPARSEABLE))
    return ScoreReport(
        per_question=per_question,
        numerator=numerator,
        denominator=denominator,
        score=score,
        decision=filter_decision(score, weights),
        sample_id=validated.graph.sample_id or answers.sample_id,
        unparseable=unparseable,
    )
