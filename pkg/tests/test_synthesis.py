import io
import json
import os
from pathlib import Path

import pytest
from PIL import Image

from garment_edit.backends import BackendEndpoint, BackendError, BackendReply, Client, ContentRejected, MockBackend, Role
from garment_edit.cache import StageCache
from garment_edit.digests import sha256_bytes
from garment_edit.documents import SchemaViolation
from garment_edit.images import ImageStore, ResolutionTooLow, load_image_ref
from garment_edit.synthesis import (
    EditCategory,
    TextTriplet,
    category_templates,
    generate_edited_image,
    generate_triplet,
    render_prompt,
    schedule,
)
from garment_edit.templates import MissingSlot, PromptTemplate

from conftest import make_image


def png(size=(512, 512), color=(10, 20, 30)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


class Replies:
    def __init__(self, reply):
        self.reply = reply
        self.calls = 0

    def send(self, request, timeout):
        self.calls += 1
        if isinstance(self.reply, Exception):
            raise self.reply
        return self.reply


def client(role, transport):
    return Client(BackendEndpoint(role, max_retries=0), transport)


@pytest.fixture
def sweater(tmp_path):
    return load_image_ref(make_image(tmp_path / "gray_turtleneck.png"))


def test_six_categories():
    assert len(EditCategory) == 6
    assert {c.display_name for c in EditCategory} == {
        "Object Removal",
        "Object Replacement",
        "Object Addition",
        "Material Replacement",
        "Color Alteration",
        "Structural Alteration",
    }


@pytest.mark.parametrize("raw", ["ColorAlteration", "color_alteration", "Color Alteration", "COLOR_ALTERATION"])
def test_category_parse(raw):
    assert EditCategory.parse(raw) is EditCategory.COLOR_ALTERATION


def test_render_prompt_descriptor():
    t = PromptTemplate("t", "Propose a {category} edit for {original_image_hint}.")
    out = render_prompt(t, {"width": 640, "height": 512, "image_id": "x"}, EditCategory.OBJECT_REMOVAL)
    assert "Object Removal" in out and "640x512" in out


def test_render_prompt_missing_slot():
    with pytest.raises(MissingSlot):
        render_prompt(PromptTemplate("t", "Use {fabric}"), {"width": 1, "height": 1}, EditCategory.OBJECT_REMOVAL)


@pytest.mark.parametrize("category", list(EditCategory))
def test_bundled_templates_render_deterministically(category, sweater):
    t = category_templates()[category]
    first = render_prompt(t, sweater, category)
    assert first == render_prompt(t, sweater, category)
    assert category.display_name in first and "{" + "category" + "}" not in first
    assert "original_image_hint" in t.slots


def test_color_example(sweater):
    reply = {
        "original_description": "A gray turtleneck sweater with a ribbed texture",
        "edit_instruction": "Change the color of the sweater to blue",
        "edited_description": "A blue turtleneck sweater with a ribbed texture",
    }
    t = generate_triplet(sweater, EditCategory.COLOR_ALTERATION, client(Role.STRUCTURED_TEXT, Replies(BackendReply(json.dumps(reply)))))
    assert t == TextTriplet(reply["original_description"], reply["edit_instruction"], reply["edited_description"], EditCategory.COLOR_ALTERATION)
    assert t.looks_imperative


def test_mock_triplet_matches_category(sweater):
    mock = MockBackend(seed=1)
    for cat in EditCategory:
        t = generate_triplet(sweater, cat, client(Role.STRUCTURED_TEXT, mock))
        assert t.category is cat


@pytest.mark.parametrize(
    "reply",
    [
        {"original_description": "a", "edit_instruction": "", "edited_description": "b"},
        {"original_description": "a", "edited_description": "b"},
        {"original_description": "a", "edit_instruction": "Add a hood", "edited_description": "b", "category": "object_removal"},
        ["not", "an", "object"],
        "plain prose",
    ],
)
def test_bad_triplet_reply(reply, sweater):
    text = reply if isinstance(reply, str) else json.dumps(reply)
    with pytest.raises(SchemaViolation) as err:
        generate_triplet(sweater, EditCategory.OBJECT_ADDITION, client(Role.STRUCTURED_TEXT, Replies(BackendReply(text))))
    assert err.value.raw == text


def test_non_imperative_warns(sweater, caplog):
    reply = {"original_description": "a", "edit_instruction": "The sweater should be blue", "edited_description": "b"}
    generate_triplet(sweater, EditCategory.COLOR_ALTERATION, client(Role.STRUCTURED_TEXT, Replies(BackendReply(json.dumps(reply)))))
    assert "known verb" in caplog.text


TRIPLET = TextTriplet(
    "A gray turtleneck sweater with a ribbed texture",
    "Change the color of the sweater to blue",
    "A blue turtleneck sweater with a ribbed texture",
    EditCategory.COLOR_ALTERATION,
)


def test_edited_image_fixture_digest(sweater, tmp_path):
    data = png()
    ref = generate_edited_image(sweater, TRIPLET, client(Role.IMAGE_EDIT, Replies(BackendReply(image=data))), ImageStore(tmp_path / "out"))
    assert ref.sha256 == sha256_bytes(data)
    assert (ref.width, ref.height) == (512, 512)
    rel = Path(ref.location).relative_to(tmp_path / "out")
    assert rel.parts == ("images", ref.sha256[:2], f"{ref.sha256}.png")
    assert ref.read_bytes() == data


def test_edited_image_too_small(sweater, tmp_path):
    with pytest.raises(ResolutionTooLow):
        generate_edited_image(sweater, TRIPLET, client(Role.IMAGE_EDIT, Replies(BackendReply(image=png((256, 256))))), ImageStore(tmp_path))


def test_content_rejected(sweater, tmp_path):
    with pytest.raises(BackendError) as err:
        generate_edited_image(sweater, TRIPLET, client(Role.IMAGE_EDIT, Replies(ContentRejected("policy"))), ImageStore(tmp_path))
    assert isinstance(err.value.cause, ContentRejected)


def test_edited_image_cached(sweater, tmp_path):
    transport = Replies(BackendReply(image=png()))
    store, cache = ImageStore(tmp_path / "out"), StageCache(tmp_path / "cache")
    c = client(Role.IMAGE_EDIT, transport)
    a = generate_edited_image(sweater, TRIPLET, c, store, template_version="v1", cache=cache)
    b = generate_edited_image(sweater, TRIPLET, c, store, template_version="v1", cache=cache)
    assert a == b and transport.calls == 1
    generate_edited_image(sweater, TRIPLET, c, store, template_version="v2", cache=cache)
    assert transport.calls == 2


def test_store_is_idempotent(tmp_path):
    store = ImageStore(tmp_path)
    data = png()
    assert store.put(data) == store.put(data)
    files = [p for p in (tmp_path / "images").rglob("*") if p.is_file()]
    assert len(files) == 1 and not any(p.name.startswith(".tmp") for p in files)


def test_low_res_original_rejected(tmp_path):
    with pytest.raises(ResolutionTooLow):
        load_image_ref(make_image(tmp_path / "small.png", size=(511, 800)))


def test_round_robin_coverage(tmp_path):
    images = [load_image_ref(make_image(tmp_path / f"{i}.png", color=(i, i, i))) for i in range(3)]
    plan = list(schedule(images, triplets_per_category=2))
    assert len(plan) == 3 * 6 * 2
    first_pass = plan[:18]
    assert {(img.sha256, cat) for img, cat, _ in first_pass} == {(img.sha256, cat) for img in images for cat in EditCategory}
    assert all(k == 0 for *_, k in first_pass) and all(k == 1 for *_, k in plan[18:])


def test_triplet_invariants():
    with pytest.raises(ValueError):
        TextTriplet("a", "  ", "c", EditCategory.OBJECT_ADDITION)
