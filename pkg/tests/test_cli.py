import json

import pytest

from garment_edit.cli import build_parser, main

GRAPH = {
    "sample_id": "s1",
    "questions": [
        {"id": "q1", "text": "Is the sweater blue?", "category": "ICQ", "parents": []},
        {"id": "q2", "text": "Is the knit ribbed?", "category": "IDQ", "parents": ["q1"]},
        {"id": "q3", "text": "Is there a turtleneck collar?", "category": "CPQ", "parents": []},
    ],
}
ANSWERS = {"sample_id": "s1", "verdicts": {"q1": "yes", "q2": "yes", "q3": "no"}}


@pytest.fixture
def fixture_pair(tmp_path):
    g, a = tmp_path / "graph.json", tmp_path / "answers.json"
    g.write_text(json.dumps(GRAPH))
    a.write_text(json.dumps(ANSWERS))
    return g, a


@pytest.fixture
def mock_config(tmp_path, corpus):
    path = tmp_path / "run.toml"
    path.write_text(
        f"""
[backends]
mode = "mock"

[run]
seed = 3
workers = 2
output_dir = "out"
corpus_dir = "{corpus}"
"""
    )
    return path


def test_score_fixture(fixture_pair, capsys):
    g, a = fixture_pair
    assert main(["score", str(g), str(a)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert round(doc["score"], 4) == 0.8305 and doc["decision"] == "Keep"
    assert doc["per_question"]["q2"] == {"depth": 1, "weight": 1.9, "delta": 1}
    assert set(doc) >= {"sample_id", "score", "decision", "numerator", "denominator", "per_question"}


def test_score_weight_override(fixture_pair, capsys):
    g, a = fixture_pair
    assert main(["score", str(g), str(a), "--weights.alpha", "0.9"]) == 0
    assert json.loads(capsys.readouterr().out)["decision"] == "Drop"


def test_score_cycle_exit_2(tmp_path, fixture_pair, capsys):
    _, a = fixture_pair
    doc = json.loads(json.dumps(GRAPH))
    doc["questions"][1]["parents"] = ["q1", "q2"]
    g = tmp_path / "cyclic.json"
    g.write_text(json.dumps(doc))
    assert main(["score", str(g), str(a)]) == 2
    assert "q2" in capsys.readouterr().err


def test_score_missing_file_exit_3(tmp_path, fixture_pair):
    _, a = fixture_pair
    assert main(["score", str(tmp_path / "nope.json"), str(a)]) == 3


def test_score_parse_error_exit_3(tmp_path, fixture_pair):
    _, a = fixture_pair
    g = tmp_path / "bad.json"
    g.write_text("{not json")
    assert main(["score", str(g), str(a)]) == 3


def test_score_answer_mismatch_exit_2(tmp_path, fixture_pair):
    g, _ = fixture_pair
    a = tmp_path / "a.json"
    a.write_text(json.dumps({"verdicts": {"q1": "yes"}}))
    assert main(["score", str(g), str(a)]) == 2


def test_validate_graph(fixture_pair, capsys):
    g, _ = fixture_pair
    assert main(["validate-graph", str(g)]) == 0
    assert json.loads(capsys.readouterr().out)["depths"] == {"q1": None, "q2": 1, "q3": None}


def test_run_then_rerun(mock_config, tmp_path, capsys):
    assert main(["run", "--config", str(mock_config)]) == 0
    err = capsys.readouterr().err
    digest = err.split("manifest digest: ")[1].split()[0]
    lines = (tmp_path / "out" / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 12
    assert (tmp_path / "out" / "stats.txt").exists() and (tmp_path / "out" / "stats.json").exists()

    assert main(["run", "--config", str(mock_config)]) == 0
    err = capsys.readouterr().err
    assert "backend calls: 0" in err and f"manifest digest: {digest}" in err


def test_run_alpha_out_of_range(mock_config, capsys):
    assert main(["run", "--config", str(mock_config), "--weights.alpha", "1.5"]) == 2
    assert "alpha out of range" in capsys.readouterr().err


def test_config_alpha_out_of_range(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text('[weights]\nalpha = 1.5\n[backends]\nmode = "mock"\n')
    assert main(["run", "--config", str(path)]) == 2
    assert "alpha out of range" in capsys.readouterr().err


def test_stage_commands_and_filter(mock_config, tmp_path, capsys):
    assert main(["synthesize", "--config", str(mock_config)]) == 0
    m = [json.loads(x) for x in (tmp_path / "out" / "manifest.jsonl").read_text().splitlines()]
    assert {r["stage"] for r in m} == {"Synthesized"}
    for cmd in ("edit-images", "build-graphs", "answer"):
        assert main([cmd, "--config", str(mock_config)]) == 0
    assert main(["run", "--config", str(mock_config)]) == 0
    capsys.readouterr()
    assert main(["filter", "--config", str(mock_config), "--weights.alpha", "1.0"]) == 0
    kept = (tmp_path / "out" / "kept.jsonl").read_text().splitlines()
    assert all(json.loads(x)["score"] == 1.0 for x in kept)
    assert main(["stats", "--config", str(mock_config), "--top-k-keywords", "3"]) == 0
    stats = json.loads((tmp_path / "out" / "stats.json").read_text())
    assert len(stats["top_keywords"]) == 3


def test_mock_fixtures_flag_and_output_dir(tmp_path, corpus):
    path = tmp_path / "live.toml"
    path.write_text(
        '[backends.structured_text]\nbase_url = "http://x"\n[backends.image_edit]\nbase_url = "http://x"\n[backends.vqa]\nbase_url = "http://x"\n'
    )
    fixtures = tmp_path / "fixtures"
    fixtures.mkdir()
    out = tmp_path / "elsewhere"
    assert main(["run", "--config", str(path), "--mock-fixtures", str(fixtures), "--output-dir", str(out), "--corpus", str(corpus), "--seed", "5"]) == 0
    assert len((out / "manifest.jsonl").read_text().splitlines()) == 12
    assert json.loads((out / "manifest.summary.json").read_text())["seed"] == 5


def test_stats_without_manifest(tmp_path, mock_config):
    assert main(["stats", "--config", str(mock_config)]) == 3


def test_unknown_flag_is_error(fixture_pair):
    g, a = fixture_pair
    with pytest.raises(SystemExit) as err:
        main(["score", str(g), str(a), "--weights.beta", "1"])
    assert err.value.code == 2


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["run", "--help"])
    text = capsys.readouterr().out
    for flag in ("--config", "--weights.alpha", "--weights.w_icq", "--weights.w_cpq", "--weights.t_decay", "--mock-fixtures", "--seed", "--output-dir", "--top-k-keywords"):
        assert flag in text


def test_all_commands_registered():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == {"run", "synthesize", "edit-images", "build-graphs", "answer", "score", "filter", "stats", "validate-graph"}
