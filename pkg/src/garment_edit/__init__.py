"""Garment-edit triplet synthesis with FEditScore-based filtering."""

from .scoring import (
    AnswerSet,
    Decision,
    DependencyGraph,
    Question,
    QuestionCategory,
    ScoreReport,
    ValidatedGraph,
    Verdict,
    Weights,
    feditscore,
    filter_decision,
    gate,
    idq_weight,
    validate_graph,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerSet",
    "Decision",
    "DependencyGraph",
    "Question",
    "QuestionCategory",
    "ScoreReport",
    "ValidatedGraph",
    "Verdict",
    "Weights",
    "feditscore",
    "filter_decision",
    "gate",
    "idq_weight",
    "validate_graph",
]
