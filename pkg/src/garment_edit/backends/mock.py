"""Deterministic offline backend for all three roles.

Replies come from a fixtures directory when a file named after the request
digest exists (``<digest>.txt`` for text, ``<digest>.png`` for images);
otherwise they are generated from a small built-in garment scenario table,
seeded so that identical requests always get identical replies.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
from pathlib import Path
from typing import Any

from PIL import Image

from ..digests import canonical_json
from .base import BackendReply, BackendRequest, Role

VQA_POLICIES = ("seeded", "all_yes", "all_no", "icq_only")
GRAPH_SHAPES = ("full", "icq_cpq")

# (original, instruction, edited, ICQs, IDQs as (text, parent key), CPQs)
SCENARIOS: dict[str, list[dict[str, Any]]] = {
    "color_alteration": [
        {
            "original": "A gray turtleneck sweater with a ribbed texture",
            "instruction": "Change the color of the sweater to blue",
            "edited": "A blue turtleneck sweater with a ribbed texture",
            "icq": ["Is the sweater blue?"],
            "idq": [("Does the blue sweater keep its ribbed texture?", "icq0"), ("Is the blue color uniform across the ribbed knit?", "idq0")],
            "cpq": ["Does the sweater have a turtleneck collar?"],
        },
        {
            "original": "A white cotton shirt with a pointed collar and long sleeves",
            "instruction": "Make the shirt pale pink",
            "edited": "A pale pink cotton shirt with a pointed collar and long sleeves",
            "icq": ["Is the shirt pale pink?"],
            "idq": [("Are the sleeves also pale pink?", "icq0")],
            "cpq": ["Does the shirt have a pointed collar?", "Does the shirt have long sleeves?"],
        },
    ],
    "material_replacement": [
        {
            "original": "A navy cotton blazer with notched lapels and two front buttons",
            "instruction": "Replace the cotton fabric of the blazer with velvet",
            "edited": "A navy velvet blazer with notched lapels and two front buttons",
            "icq": ["Is the blazer made of velvet?"],
            "idq": [("Does the velvet show a soft sheen?", "icq0")],
            "cpq": ["Does the blazer have notched lapels?", "Does the blazer have two front buttons?"],
        },
        {
            "original": "A black cotton midi skirt with an elastic waistband",
            "instruction": "Change the skirt material to silk",
            "edited": "A black silk midi skirt with an elastic waistband",
            "icq": ["Is the skirt made of silk?"],
            "idq": [("Does the silk fabric drape smoothly?", "icq0"), ("Is the silk surface glossy along the folds?", "idq0")],
            "cpq": ["Does the skirt have an elastic waistband?"],
        },
    ],
    "structural_alteration": [
        {
            "original": "Blue denim jeans with a flared leg and five pockets",
            "instruction": "Reshape the jeans into a straight cut",
            "edited": "Blue denim jeans with a straight leg and five pockets",
            "icq": ["Do the jeans have a straight cut?"],
            "idq": [("Is the straight leg width even from knee to hem?", "icq0")],
            "cpq": ["Are the jeans made of blue denim?", "Do the jeans have five pockets?"],
        },
        {
            "original": "A red A-line dress with short sleeves and a round neckline",
            "instruction": "Turn the dress into a bodycon silhouette",
            "edited": "A red bodycon dress with short sleeves and a round neckline",
            "icq": ["Does the dress have a bodycon silhouette?"],
            "idq": [("Does the bodycon dress follow the waist closely?", "icq0")],
            "cpq": ["Does the dress have short sleeves?"],
        },
    ],
    "object_addition": [
        {
            "original": "A beige trench coat with a belt and double-breasted buttons",
            "instruction": "Add a hood to the trench coat",
            "edited": "A beige trench coat with a hood, a belt and double-breasted buttons",
            "icq": ["Does the trench coat have a hood?"],
            "idq": [("Is the hood beige like the coat?", "icq0"), ("Is the hood attached at the collar?", "icq0")],
            "cpq": ["Does the coat have a belt?"],
        },
        {
            "original": "A plain white T-shirt with a crew neck",
            "instruction": "Add a chest pocket to the T-shirt",
            "edited": "A plain white T-shirt with a crew neck and a chest pocket",
            "icq": ["Does the T-shirt have a chest pocket?"],
            "idq": [("Is the chest pocket on the left side?", "icq0")],
            "cpq": ["Does the T-shirt have a crew neck?"],
        },
    ],
    "object_removal": [
        {
            "original": "A green hoodie with a kangaroo pocket and drawstrings",
            "instruction": "Remove the kangaroo pocket from the hoodie",
            "edited": "A green hoodie with drawstrings and a plain front",
            "icq": ["Is the kangaroo pocket gone from the hoodie?"],
            "idq": [("Is the front of the hoodie plain where the pocket was?", "icq0")],
            "cpq": ["Does the hoodie have drawstrings?", "Is the hoodie green?"],
        },
        {
            "original": "A brown leather jacket with epaulettes and a zip front",
            "instruction": "Remove the epaulettes from the jacket",
            "edited": "A brown leather jacket with a zip front and plain shoulders",
            "icq": ["Are the epaulettes removed from the jacket?"],
            "idq": [("Are the shoulders smooth leather without straps?", "icq0")],
            "cpq": ["Does the jacket have a zip front?"],
        },
    ],
    "object_replacement": [
        {
            "original": "A gray cardigan with plastic buttons and ribbed cuffs",
            "instruction": "Replace the buttons of the cardigan with wooden toggles",
            "edited": "A gray cardigan with wooden toggles and ribbed cuffs",
            "icq": ["Does the cardigan have wooden toggles?"],
            "idq": [("Are the wooden toggles light brown?", "icq0"), ("Are the toggles fastened with loops?", "icq0")],
            "cpq": ["Does the cardigan have ribbed cuffs?"],
        },
        {
            "original": "A yellow polo shirt with a ribbed collar and a small logo",
            "instruction": "Swap the polo collar for a mandarin collar",
            "edited": "A yellow shirt with a mandarin collar and a small logo",
            "icq": ["Does the shirt have a mandarin collar?"],
            "idq": [("Is the mandarin collar yellow?", "icq0")],
            "cpq": ["Does the shirt have a small logo?"],
        },
    ],
}


def _unit(*parts: Any) -> float:
    h = hashlib.sha256(canonical_json([str(p) for p in parts]).encode()).digest()
    return int.from_bytes(h[:8], "big") / 2**64


def _pick(options: list, *parts: Any):
    return options[int(_unit(*parts) * len(options))]


def scenario_for_instruction(instruction: str) -> dict[str, Any] | None:
    for items in SCENARIOS.values():
        for sc in items:
            if sc["instruction"] == instruction:
                return sc
    return None


def scenario_graph(sc: dict[str, Any], shape: str = "full") -> dict:
    questions = []
    for i, text in enumerate(sc["icq"]):
        questions.append({"id": f"icq{i}", "text": text, "category": "ICQ", "parents": []})
    if shape == "full":
        for i, (text, parent) in enumerate(sc["idq"]):
            questions.append({"id": f"idq{i}", "text": text, "category": "IDQ", "parents": [parent]})
        cpqs = sc["cpq"]
    else:
        questions = questions[:1]
        cpqs = sc["cpq"][:1]
    for i, text in enumerate(cpqs):
        questions.append({"id": f"cpq{i}", "text": text, "category": "CPQ", "parents": []})
    return {"questions": questions}


class MockBackend:
    """Offline stand-in for every role; thread-safe, with a call transcript."""

    def __init__(
        self,
        seed: int = 0,
        fixtures_dir: str | os.PathLike | None = None,
        vqa_policy: str = "seeded",
        yes_rate: float = 0.85,
        graph_shape: str = "full",
    ):
        if vqa_policy not in VQA_POLICIES:
            raise ValueError(f"unknown vqa_policy {vqa_policy!r}; expected one of {VQA_POLICIES}")
        if graph_shape not in GRAPH_SHAPES:
            raise ValueError(f"unknown graph_shape {graph_shape!r}; expected one of {GRAPH_SHAPES}")
        self.seed = seed
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir else None
        self.vqa_policy = vqa_policy
        self.yes_rate = yes_rate
        self.graph_shape = graph_shape
        self._lock = threading.Lock()
        self.transcript: list[dict[str, Any]] = []

    @property
    def calls(self) -> int:
        return len(self.transcript)

    def calls_for(self, role: Role) -> int:
        return sum(1 for t in self.transcript if t["role"] == Role(role).value)

    def send(self, request: BackendRequest, timeout: float) -> BackendReply:
        digest = request.digest()
        reply, source = self._fixture(digest)
        if reply is None:
            reply, source = self._generate(request), "generated"
        with self._lock:
            self.transcript.append({"role": Role(request.role).value, "task": request.task, "digest": digest, "source": source})
        return reply

    def write_transcript(self, path: str | os.PathLike) -> None:
        # worker threads interleave calls; sort so the file is reproducible
        rows = sorted(self.transcript, key=lambda t: (t["role"], t["task"], t["digest"]))
        Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")

    def _fixture(self, digest: str) -> tuple[BackendReply | None, str]:
        if self.fixtures_dir is None:
            return None, ""
        text_path = self.fixtures_dir / f"{digest}.txt"
        if text_path.exists():
            return BackendReply(text=text_path.read_text(encoding="utf-8")), "fixture"
        for ext in ("png", "jpg", "webp"):
            img_path = self.fixtures_dir / f"{digest}.{ext}"
            if img_path.exists():
                return BackendReply(image=img_path.read_bytes()), "fixture"
        return None, ""

    def _generate(self, request: BackendRequest) -> BackendReply:
        if request.task == "triplet":
            return self._triplet(request)
        if request.task == "graph":
            return self._graph(request)
        if request.task == "edit_image":
            return self._edit_image(request)
        if request.task == "vqa":
            return self._vqa(request)
        raise ValueError(f"mock backend has no generator for task {request.task!r}")

    def _triplet(self, request: BackendRequest) -> BackendReply:
        category = request.meta["category"]
        image_digest = hashlib.sha256(request.images[0]).hexdigest() if request.images else ""
        sc = _pick(SCENARIOS[category], self.seed, image_digest, category, request.meta.get("index", 0))
        body = {"original_description": sc["original"], "edit_instruction": sc["instruction"], "edited_description": sc["edited"]}
        return BackendReply(text=json.dumps(body))

    def _graph(self, request: BackendRequest) -> BackendReply:
        instruction = request.meta.get("edit_instruction", "")
        sc = scenario_for_instruction(instruction)
        if sc is None:
            doc = {
                "questions": [
                    {"id": "icq0", "text": f"Has this edit been applied: {instruction.rstrip('.')}?", "category": "ICQ", "parents": []},
                    {"id": "cpq0", "text": "Are the unedited parts of the garment unchanged?", "category": "CPQ", "parents": []},
                ]
            }
        else:
            doc = scenario_graph(sc, self.graph_shape)
        return BackendReply(text=json.dumps(doc))

    def _edit_image(self, request: BackendRequest) -> BackendReply:
        instruction = request.fields.get("instruction", "")
        tint = tuple(int(255 * _unit(self.seed, instruction, c)) for c in "rgb")
        with Image.open(io.BytesIO(request.images[0])) as im:
            base = im.convert("RGB")
        overlay = Image.new("RGB", base.size, tint)
        out = Image.blend(base, overlay, 0.35)
        buf = io.BytesIO()
        out.save(buf, format="PNG")
        return BackendReply(image=buf.getvalue())

    def _vqa(self, request: BackendRequest) -> BackendReply:
        question = request.fields.get("question", "")
        category = request.meta.get("category", "")
        if self.vqa_policy == "all_yes":
            yes = True
        elif self.vqa_policy == "all_no":
            yes = False
        elif self.vqa_policy == "icq_only":
            yes = category == "ICQ"
        else:
            image_digest = hashlib.sha256(request.images[0]).hexdigest() if request.images else ""
            yes = _unit(self.seed, image_digest, question) < self.yes_rate
        return BackendReply(text="Yes." if yes else "No, it does not look that way.")
