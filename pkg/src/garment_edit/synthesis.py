"""Text-triplet synthesis over the six garment edit categories, and edited-image requests."""

from __future__ import annotations

import enum
import json
import logging
import os
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .backends import BackendRequest, Client, ContentRejected, Role
from .cache import StageCache, stage_key
from .documents import SchemaViolation
from .images import ImageRef, ImageStore, check_resolution, probe
from .templates import PromptTemplate, load_template

log = logging.getLogger(__name__)


class EditCategory(str, enum.Enum):
    OBJECT_REMOVAL = "object_removal"
    OBJECT_REPLACEMENT = "object_replacement"
    OBJECT_ADDITION = "object_addition"
    MATERIAL_REPLACEMENT = "material_replacement"
    COLOR_ALTERATION = "color_alteration"
    STRUCTURAL_ALTERATION = "structural_alteration"

    @property
    def display_name(self) -> str:
        return self.value.replace("_", " ").title()

    @property
    def definition(self) -> str:
        return _DEFINITIONS[self]

    @classmethod
    def parse(cls, value: str) -> "EditCategory":
        key = value.strip().replace(" ", "_").replace("-", "_")
        # accept snake_case, Title Case and CamelCase spellings
        for cat in cls:
            if key.lower() == cat.value or key == cat.name or key == cat.display_name.replace(" ", ""):
                return cat
        raise ValueError(f"unknown edit category: {value!r}")


_DEFINITIONS = {
    EditCategory.OBJECT_REMOVAL: "Take a named component off the garment, such as a pocket or a hood.",
    EditCategory.OBJECT_REPLACEMENT: "Swap one garment element for a different design of that element.",
    EditCategory.OBJECT_ADDITION: "Put a new decorative or functional element onto the garment.",
    EditCategory.MATERIAL_REPLACEMENT: "Change what the garment is made of, for example cotton to silk.",
    EditCategory.COLOR_ALTERATION: "Change the garment color and keep its texture intact.",
    EditCategory.STRUCTURAL_ALTERATION: "Change the silhouette or cut, for example flared to straight.",
}

# first words accepted as imperative; anything else only logs a warning
IMPERATIVE_VERBS = frozenset(
    "add alter adjust attach change convert crop darken dye extend give lengthen lighten make modify move "
    "recolor remove replace reshape restyle shorten substitute swap take transform trim turn update widen "
    "narrow switch put insert delete eliminate apply use".split()
)


@dataclass(frozen=True)
class TextTriplet:
    original_description: str
    edit_instruction: str
    edited_description: str
    category: EditCategory

    def __post_init__(self) -> None:
        for name in ("original_description", "edit_instruction", "edited_description"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, " ".join(value.split()))
        object.__setattr__(self, "category", EditCategory(self.category))

    @property
    def looks_imperative(self) -> bool:
        first = self.edit_instruction.split()[0].strip(".,:;!").lower()
        return first in IMPERATIVE_VERBS

    def to_obj(self) -> dict:
        return {
            "original_description": self.original_description,
            "edit_instruction": self.edit_instruction,
            "edited_description": self.edited_description,
            "category": self.category.value,
        }

    @classmethod
    def from_obj(cls, obj: Mapping) -> "TextTriplet":
        return cls(obj["original_description"], obj["edit_instruction"], obj["edited_description"], EditCategory(obj["category"]))


def category_templates(directory: str | os.PathLike | None = None) -> dict[EditCategory, PromptTemplate]:
    return {cat: load_template(cat.value, directory) for cat in EditCategory}


def render_prompt(template: PromptTemplate, image_meta: ImageRef | Mapping, category: EditCategory) -> str:
    if isinstance(image_meta, ImageRef):
        meta = {"image_id": image_meta.id, "width": image_meta.width, "height": image_meta.height}
    else:
        meta = dict(image_meta)
    bindings = {
        "category": category.display_name,
        "category_snake": category.value,
        "category_definition": category.definition,
        **{k: v for k, v in meta.items()},
    }
    if "original_image_hint" not in bindings and {"width", "height"} <= meta.keys():
        bindings["original_image_hint"] = f"garment photo {meta.get('image_id', '')}, {meta['width']}x{meta['height']} pixels".replace("  ", " ")
    return template.render(bindings)


def parse_triplet_reply(text: str, category: EditCategory) -> TextTriplet:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        raise SchemaViolation("triplet reply is not JSON", raw=text) from None
    if not isinstance(obj, dict):
        raise SchemaViolation("triplet reply is not a JSON object", raw=text)
    fields = ("original_description", "edit_instruction", "edited_description")
    empty = [f for f in fields if not isinstance(obj.get(f), str) or not obj[f].strip()]
    if empty:
        raise SchemaViolation(f"triplet reply missing or empty: {', '.join(empty)}", raw=text)
    if "category" in obj:
        try:
            if EditCategory.parse(str(obj["category"])) is not category:
                raise SchemaViolation(f"triplet reply category {obj['category']!r} != requested {category.value}", raw=text)
        except ValueError:
            raise SchemaViolation(f"triplet reply has unknown category {obj['category']!r}", raw=text) from None
    return TextTriplet(obj["original_description"], obj["edit_instruction"], obj["edited_description"], category)


def triplet_request(image: ImageRef, category: EditCategory, template: PromptTemplate, index: int = 0, image_bytes: bytes | None = None) -> BackendRequest:
    data = image_bytes if image_bytes is not None else image.read_bytes()
    return BackendRequest(
        role=Role.STRUCTURED_TEXT,
        task="triplet",
        fields={"prompt": render_prompt(template, image, category)},
        images=(data,),
        meta={"category": category.value, "index": index, "image_id": image.id},
    )


def generate_triplet(
    image: ImageRef,
    category: EditCategory,
    backend: Client,
    template: PromptTemplate | None = None,
    *,
    index: int = 0,
    cache: StageCache | None = None,
) -> TextTriplet:
    template = template or load_template(category.value)
    key = stage_key("triplet", {"image": image.sha256, "category": category.value, "index": index}, template.version, Role.STRUCTURED_TEXT.value)
    text = None
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            text = hit["text"]
    if text is None:
        text = backend.call(triplet_request(image, category, template, index)).text
        if cache is not None:
            cache.put(key, {"text": text})
    triplet = parse_triplet_reply(text, category)
    if not triplet.looks_imperative:
        log.warning("edit instruction does not start with a known verb: %r", triplet.edit_instruction)
    return triplet


def edit_request(original_bytes: bytes, triplet: TextTriplet) -> BackendRequest:
    return BackendRequest(
        role=Role.IMAGE_EDIT,
        task="edit_image",
        fields={"instruction": triplet.edit_instruction, "target_description": triplet.edited_description},
        images=(original_bytes,),
        meta={"category": triplet.category.value},
    )


def generate_edited_image(
    original: ImageRef,
    triplet: TextTriplet,
    backend: Client,
    store: ImageStore,
    *,
    template_version: str = "",
    cache: StageCache | None = None,
) -> ImageRef:
    """Ask the image backend for the edit, store the result by digest and return its ref.

    Raises ContentRejected when the backend refuses and ResolutionTooLow when
    the returned image is under the resolution floor.
    """
    key = stage_key(
        "edit_image",
        {"original": original.sha256, "triplet": triplet.to_obj()},
        template_version,
        Role.IMAGE_EDIT.value,
    )
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            ref = ImageRef.from_obj(hit)
            if os.path.exists(ref.location):
                return ref
    reply = backend.call(edit_request(original.read_bytes(), triplet))
    if not reply.image:
        raise ContentRejected("image backend returned no image")
    width, height, _ = probe(reply.image)
    check_resolution(width, height, "edited image")
    ref = store.put(reply.image)
    if cache is not None:
        cache.put(key, ref.to_obj())
    return ref


def schedule(images: Sequence[ImageRef], triplets_per_category: int = 1) -> Iterator[tuple[ImageRef, EditCategory, int]]:
    """Round-robin plan: every category for every image before any repeat."""
    for index in range(triplets_per_category):
        for image in images:
            for category in EditCategory:
                yield image, category, index
