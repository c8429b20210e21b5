"""Yes/no question answering on an edited image."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..images import ImageRef
from ..scoring import Question, Verdict
from .base import BackendRequest, Client, Role

_LEADING_NOISE = re.compile(r"^[\s\"'`*_>#\-\[\(]+")
_LABEL = re.compile(r"^(answer|a|final answer)\s*[:\-]\s*", re.IGNORECASE)
_YES_NO = re.compile(r"^(yes|no)\b")


def normalize_verdict(raw_reply: str) -> Verdict:
    """Map a free-text reply to a verdict by its leading word.

    Leading whitespace, quotes and markdown markers are dropped, as is an
    ``Answer:`` label. The first word must be exactly ``yes`` or ``no``
    (case-insensitive); anything else is unparseable.
    """
    text = _LEADING_NOISE.sub("", raw_reply)
    text = _LABEL.sub("", text)
    text = _LEADING_NOISE.sub("", text).lower()
    m = _YES_NO.match(text)
    if m is None:
        return Verdict.UNPARSEABLE
    return Verdict.YES if m.group(1) == "yes" else Verdict.NO


@dataclass(frozen=True)
class VqaVerdict:
    question_id: str
    raw_reply: str
    verdict: Verdict


def vqa_request(image_bytes: bytes, question: Question) -> BackendRequest:
    return BackendRequest(
        role=Role.VQA,
        task="vqa",
        fields={"question": question.text, "instruction": "Answer with yes or no."},
        images=(image_bytes,),
        meta={"question_id": question.id, "category": question.category.value},
    )


def ask_vqa(image: ImageRef, question: Question, client: Client, image_bytes: bytes | None = None) -> VqaVerdict:
    if client.endpoint.role is not Role.VQA:
        raise ValueError(f"ask_vqa needs a VQA endpoint, got {client.endpoint.role.value}")
    data = image_bytes if image_bytes is not None else image.read_bytes()
    reply = client.call(vqa_request(data, question))
    return VqaVerdict(question_id=question.id, raw_reply=reply.text, verdict=normalize_verdict(reply.text))
