import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from garment_edit.backends import BackendEndpoint, Client, MockBackend, Role
from garment_edit.cache import StageCache
from garment_edit.documents import (
    ParseError,
    SchemaViolation,
    graph_to_obj,
    parse_answer_document,
    parse_graph_document,
    serialize_graph,
)
from garment_edit.graph_build import (
    ComponentParse,
    EmptyExtraction,
    ExtractionRequest,
    build_graph,
    extraction_prompt,
    parse_extraction_reply,
)
from garment_edit.scoring import QuestionCategory, Verdict, validate_graph
from garment_edit.templates import MissingSlot, PromptTemplate, load_template

from helpers import random_graph

SWEATER = ExtractionRequest("s1", "Change the color of the sweater to blue", "A blue turtleneck sweater with a ribbed texture")


class Canned:
    """Transport returning one fixed text; counts calls."""

    def __init__(self, text):
        self.text = text
        self.calls = 0

    def send(self, request, timeout):
        from garment_edit.backends import BackendReply

        self.calls += 1
        return BackendReply(text=self.text)


def st_client(transport):
    return Client(BackendEndpoint(Role.STRUCTURED_TEXT, max_retries=0), transport)


# --- parse_graph_document --------------------------------------------------


def test_minimal_document():
    g = parse_graph_document('{"sample_id": "s", "questions": [{"id": "q1", "text": "Is it blue?", "category": "ICQ", "parents": []}]}')
    assert len(g) == 1 and g.questions["q1"].category is QuestionCategory.ICQ


def test_duplicate_id_is_parse_error():
    doc = {"sample_id": "s", "questions": [{"id": "q", "text": "A?", "category": "ICQ"}, {"id": "q", "text": "B?", "category": "CPQ"}]}
    with pytest.raises(ParseError):
        parse_graph_document(json.dumps(doc))


@pytest.mark.parametrize(
    "raw, expected",
    [("ICQ", "ICQ"), ("icq", "ICQ"), ("Icq", "ICQ"), (" idq ", "IDQ"), ("iDq", "IDQ"), ("cpq", "CPQ"), ("CpQ", "CPQ")],
)
def test_category_case_folding(raw, expected):
    doc = {"questions": [{"id": "a", "text": "A?", "category": "ICQ"}, {"id": "b", "text": "B?", "category": raw, "parents": ["a"] if expected == "IDQ" else []}]}
    assert parse_graph_document(json.dumps(doc)).questions["b"].category.value == expected


@pytest.mark.parametrize("raw", ["XYZ", "", "ICQ1"])
def test_unknown_category(raw):
    doc = {"questions": [{"id": "a", "text": "A?", "category": raw}]}
    with pytest.raises(SchemaViolation):
        parse_graph_document(json.dumps(doc))


def test_invalid_json_has_position():
    with pytest.raises(ParseError) as err:
        parse_graph_document('{"questions": [\n  {"id": "a",,}\n]}')
    assert err.value.line == 2 and err.value.column is not None


@pytest.mark.parametrize(
    "doc",
    [
        {"questions": [], "extra": 1},
        {"questions": [{"id": "a", "text": "A?", "category": "ICQ", "weight": 3}]},
        {"sample_id": "s"},
        {"questions": [{"id": "a", "category": "ICQ"}]},
        {"questions": "nope"},
        {"questions": [{"id": "a", "text": "A?", "category": "ICQ", "parents": "b"}]},
        [],
    ],
)
def test_strict_schema(doc):
    with pytest.raises(SchemaViolation):
        parse_graph_document(json.dumps(doc))


def normalize(doc):
    """Canonical form: category upper, text normalized, parents sorted, field order fixed."""
    from garment_edit.scoring import normalize_question_text

    return {
        "sample_id": doc.get("sample_id", ""),
        "questions": [
            {"id": x["id"], "text": normalize_question_text(x["text"]), "category": x["category"].strip().upper(), "parents": sorted(x.get("parents", []))}
            for x in doc["questions"]
        ],
    }


@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_round_trip(seed, rnd):
    g = random_graph(random.Random(seed))
    doc = graph_to_obj(g)
    for x in doc["questions"]:
        x["category"] = rnd.choice([str.lower, str.upper, str.title])(x["category"])
        x["text"] = "  " + x["text"].rstrip("?") + "  "
        rnd.shuffle(x["parents"])
    text = json.dumps(doc)
    assert json.loads(serialize_graph(parse_graph_document(text))) == normalize(doc)


def test_answer_document():
    a = parse_answer_document('{"sample_id": "s", "verdicts": {"q1": "yes", "q2": "NO", "q3": "unparseable"}}')
    assert a.verdicts == {"q1": Verdict.YES, "q2": Verdict.NO, "q3": Verdict.UNPARSEABLE}
    with pytest.raises(SchemaViolation):
        parse_answer_document('{"verdicts": {"q1": "maybe"}}')


# --- templates -------------------------------------------------------------


def test_extraction_template_slots():
    t = load_template("extraction")
    assert set(t.slots) == {"edit_instruction", "edited_description"}
    prompt = extraction_prompt(SWEATER, t)
    assert SWEATER.edit_instruction in prompt and SWEATER.edited_description in prompt
    assert '{"questions"' in prompt


def test_missing_slot():
    with pytest.raises(MissingSlot):
        PromptTemplate("t", "{edit_instruction} {garment}").render({"edit_instruction": "x"})


def test_template_version_tracks_content():
    assert PromptTemplate("a", "x").version == PromptTemplate("b", "x").version
    assert PromptTemplate("a", "x").version != PromptTemplate("a", "y").version


# --- build_graph -------------------------------------------------------------


def test_sweater_example_structure():
    g = build_graph(SWEATER, st_client(MockBackend()))
    validate_graph(g)
    cats = {}
    for x in g.questions.values():
        cats.setdefault(x.category, []).append(x)
    assert len(cats[QuestionCategory.ICQ]) >= 1
    assert any("blue" in x.text.lower() for x in cats[QuestionCategory.ICQ])
    assert any("ribbed" in x.text.lower() for x in cats[QuestionCategory.IDQ])
    assert any("turtleneck" in x.text.lower() for x in cats[QuestionCategory.CPQ])
    assert g.sample_id == "s1"


def test_canned_round_trip():
    doc = {
        "sample_id": "s1",
        "questions": [
            {"id": "q1", "text": "Is the sweater blue?", "category": "ICQ", "parents": []},
            {"id": "q2", "text": "Is the texture ribbed?", "category": "IDQ", "parents": ["q1"]},
            {"id": "q3", "text": "Is there a turtleneck collar?", "category": "CPQ", "parents": []},
        ],
    }
    g = build_graph(SWEATER, st_client(Canned(json.dumps(doc))))
    assert graph_to_obj(g) == doc


def test_orphan_idq_reply_is_schema_violation():
    bad = {"questions": [{"id": "q1", "text": "Blue?", "category": "ICQ"}, {"id": "q2", "text": "Ribbed?", "category": "IDQ", "parents": []}]}
    text = json.dumps(bad)
    from garment_edit.scoring import CategoryViolation, DependencyGraph

    with pytest.raises(CategoryViolation):
        validate_graph(parse_graph_document(text))
    with pytest.raises(SchemaViolation) as err:
        build_graph(SWEATER, st_client(Canned(text)))
    assert err.value.raw == text


@pytest.mark.parametrize("text", ["Sure! Here are some questions: is it blue?", '{"questions": [{"id": "a"}]}', ""])
def test_free_form_reply_rejected(text):
    with pytest.raises(SchemaViolation) as err:
        build_graph(SWEATER, st_client(Canned(text)))
    assert err.value.raw == text


def test_no_icq_is_empty_extraction():
    text = json.dumps({"questions": [{"id": "c", "text": "Collar?", "category": "CPQ"}]})
    with pytest.raises(EmptyExtraction):
        parse_extraction_reply(text, "s")


def test_question_cap():
    qs = [{"id": "i", "text": "Blue?", "category": "ICQ"}] + [{"id": f"c{k}", "text": f"C{k}?", "category": "CPQ"} for k in range(5)]
    text = json.dumps({"questions": qs})
    assert len(parse_extraction_reply(text, "s", max_questions=6)) == 6
    with pytest.raises(SchemaViolation):
        parse_extraction_reply(text, "s", max_questions=5)


def test_build_graph_cache(tmp_path):
    mock = MockBackend()
    cache = StageCache(tmp_path)
    first = build_graph(SWEATER, st_client(mock), cache=cache)
    second = build_graph(SWEATER, st_client(mock), cache=cache)
    assert mock.calls == 1 and graph_to_obj(first) == graph_to_obj(second)


def test_request_texts_required():
    with pytest.raises(ValueError):
        ExtractionRequest("s", " ", "desc")


def test_component_parse_unique_names():
    ok = ComponentParse.from_obj([{"name": "sleeve", "attributes": [{"key": "length", "value": "long"}]}])
    assert ok.components[0].attributes[0].key == "length"
    with pytest.raises(ValueError):
        ComponentParse.from_obj([{"name": "sleeve"}, {"name": "sleeve"}])
    with pytest.raises(ValueError):
        ComponentParse.from_obj([{"name": "collar", "attributes": [{"key": "", "value": "x"}]}])
