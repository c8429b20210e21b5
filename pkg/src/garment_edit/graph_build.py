"""Dependency-graph extraction from an edit instruction and edited description."""

from __future__ import annotations

from dataclasses import dataclass, field

from .backends import BackendRequest, Client, Role
from .cache import StageCache, stage_key
from .documents import ParseError, SchemaViolation, graph_to_obj, parse_graph_document
from .scoring import DependencyGraph, GraphError, QuestionCategory, validate_graph
from .templates import PromptTemplate, load_template

DEFAULT_MAX_QUESTIONS = 40


class EmptyExtraction(SchemaViolation):
    """The backend produced no instruction-critical question."""


@dataclass(frozen=True)
class ExtractionRequest:
    sample_id: str
    edit_instruction: str
    edited_description: str
    template_version: str = ""

    def __post_init__(self) -> None:
        if not self.edit_instruction.strip():
            raise ValueError("edit_instruction must be non-empty")
        if not self.edited_description.strip():
            raise ValueError("edited_description must be non-empty")


@dataclass(frozen=True)
class Attribute:
    key: str
    value: str

    def __post_init__(self) -> None:
        if not self.key.strip():
            raise ValueError("attribute key must be non-empty")


@dataclass(frozen=True)
class Component:
    name: str
    attributes: tuple[Attribute, ...] = ()


@dataclass(frozen=True)
class ComponentParse:
    components: tuple[Component, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        names = [c.name for c in self.components]
        if len(names) != len(set(names)):
            raise ValueError("component names must be unique")

    @classmethod
    def from_obj(cls, obj: list) -> "ComponentParse":
        return cls(
            tuple(
                Component(c["name"], tuple(Attribute(a["key"], a["value"]) for a in c.get("attributes", [])))
                for c in obj
            )
        )


def extraction_prompt(req: ExtractionRequest, template: PromptTemplate) -> str:
    return template.render({"edit_instruction": req.edit_instruction, "edited_description": req.edited_description})


def parse_extraction_reply(text: str, sample_id: str, max_questions: int = DEFAULT_MAX_QUESTIONS) -> DependencyGraph:
    """Parse and validate a backend reply; any defect becomes SchemaViolation carrying the raw text."""
    try:
        graph = parse_graph_document(text.strip())
    except (ParseError, SchemaViolation) as exc:
        raise SchemaViolation(f"unparseable graph reply: {exc}", raw=text) from None
    if len(graph) > max_questions:
        raise SchemaViolation(f"graph has {len(graph)} questions, cap is {max_questions}", raw=text)
    if not any(q.category is QuestionCategory.ICQ for q in graph.questions.values()):
        raise EmptyExtraction("backend produced no ICQ", raw=text)
    graph = DependencyGraph(questions=graph.questions, sample_id=sample_id)
    try:
        validate_graph(graph)
    except GraphError as exc:
        raise SchemaViolation(f"graph failed validation: {exc}", raw=text) from None
    return graph


def build_graph(
    req: ExtractionRequest,
    backend: Client,
    template: PromptTemplate | None = None,
    *,
    max_questions: int = DEFAULT_MAX_QUESTIONS,
    cache: StageCache | None = None,
) -> DependencyGraph:
    """One structured request covering parsing, linking, question generation and labelling."""
    template = template or load_template("extraction")
    key = stage_key(
        "graph",
        {"edit_instruction": req.edit_instruction, "edited_description": req.edited_description},
        template.version,
        Role.STRUCTURED_TEXT.value,
    )
    text = None
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            text = hit["text"]
    if text is None:
        request = BackendRequest(
            role=Role.STRUCTURED_TEXT,
            task="graph",
            fields={"prompt": extraction_prompt(req, template)},
            meta={"sample_id": req.sample_id, "edit_instruction": req.edit_instruction, "edited_description": req.edited_description},
        )
        text = backend.call(request).text
        if cache is not None:
            cache.put(key, {"text": text})
    return parse_extraction_reply(text, req.sample_id, max_questions)


def graph_document(graph: DependencyGraph) -> dict:
    return graph_to_obj(graph)
