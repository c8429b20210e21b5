"""JSON documents exchanged between stages: graphs, answers and score reports.

Each document is one JSON object. Files may hold a single object or one
object per line.
"""

from __future__ import annotations

import json
from typing import Any, Iterator

from .scoring import AnswerSet, DependencyGraph, Question, QuestionCategory, ScoreReport, Verdict

GRAPH_FIELDS = ("sample_id", "questions")
QUESTION_FIELDS = ("id", "text", "category", "parents")
ANSWER_FIELDS = ("sample_id", "verdicts")


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class SchemaViolation(ValueError):
    """A document or backend reply that does not fit the expected schema.

    ``raw`` keeps the offending text so it can be persisted for audit.
    """

    def __init__(self, message: str, raw: str | None = None):
        self.raw = raw
        super().__init__(message)


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None


def _check_keys(obj: Any, allowed: tuple[str, ...], required: tuple[str, ...], what: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{what} must be an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise SchemaViolation(f"{what} has unknown fields: {', '.join(unknown)}")
    absent = [k for k in required if k not in obj]
    if absent:
        raise SchemaViolation(f"{what} is missing fields: {', '.join(absent)}")


def graph_from_obj(obj: Any) -> DependencyGraph:
    _check_keys(obj, GRAPH_FIELDS, ("questions",), "graph document")
    sample_id = obj.get("sample_id", "")
    if not isinstance(sample_id, str):
        raise SchemaViolation("sample_id must be a string")
    raw_questions = obj["questions"]
    if not isinstance(raw_questions, list):
        raise SchemaViolation("questions must be a list")
    seen: set[str] = set()
    questions = []
    for i, rq in enumerate(raw_questions):
        _check_keys(rq, QUESTION_FIELDS, ("id", "text", "category"), f"question #{i}")
        qid, text, parents = rq["id"], rq["text"], rq.get("parents", [])
        if not isinstance(qid, str) or not qid:
            raise SchemaViolation(f"question #{i}: id must be a non-empty string")
        if qid in seen:
            raise ParseError(f"duplicate question id {qid!r}")
        seen.add(qid)
        if not isinstance(text, str):
            raise SchemaViolation(f"question {qid!r}: text must be a string")
        if not isinstance(parents, list) or not all(isinstance(p, str) for p in parents):
            raise SchemaViolation(f"question {qid!r}: parents must be a list of ids")
        try:
            category = QuestionCategory.parse(rq["category"])
            questions.append(Question(id=qid, text=text, category=category, parents=frozenset(parents)))
        except ValueError as exc:
            raise SchemaViolation(f"question {qid!r}: {exc}") from None
    return DependencyGraph.from_questions(questions, sample_id=sample_id)


def parse_graph_document(text: str) -> DependencyGraph:
    """Strictly parse one graph document; structure is not validated here."""
    return graph_from_obj(_load_json(text))


def graph_to_obj(graph: DependencyGraph) -> dict:
    return {
        "sample_id": graph.sample_id,
        "questions": [
            {"id": q.id, "text": q.text, "category": q.category.value, "parents": sorted(q.parents)}
            for q in graph.questions.values()
        ],
    }


def serialize_graph(graph: DependencyGraph) -> str:
    return json.dumps(graph_to_obj(graph), ensure_ascii=False)


def answers_from_obj(obj: Any) -> AnswerSet:
    _check_keys(obj, ANSWER_FIELDS, ("verdicts",), "answer document")
    verdicts = obj["verdicts"]
    if not isinstance(verdicts, dict):
        raise SchemaViolation("verdicts must be an object")
    try:
        parsed = {k: Verdict.parse(v) for k, v in verdicts.items()}
    except ValueError as exc:
        raise SchemaViolation(str(exc)) from None
    return AnswerSet(verdicts=parsed, sample_id=obj.get("sample_id", ""))


def parse_answer_document(text: str) -> AnswerSet:
    return answers_from_obj(_load_json(text))


def answers_to_obj(answers: AnswerSet) -> dict:
    return {
        "sample_id": answers.sample_id,
        "verdicts": {k: v.value for k, v in sorted(answers.verdicts.items())},
    }


def serialize_report(report: ScoreReport) -> str:
    return json.dumps(report.to_document(), ensure_ascii=False)


def iter_documents(text: str) -> Iterator[Any]:
    """Yield JSON objects from a file holding one object or one per line."""
    stripped = text.strip()
    if not stripped:
        return
    try:
        yield json.loads(stripped)
        return
    except json.JSONDecodeError:
        pass
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, lineno, exc.colno) from None
