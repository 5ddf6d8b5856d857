from __future__ import annotations

import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from coral.cli import main
from coral.config import EngineConfig, config_from_dict, load_config, serialize_config
from coral.critic import CriterionScores, is_valid
from coral.errors import ConfigurationError

from synth import blend_rows, write_blend


# -- config -----------------------------------------------------------------

def test_empty_config_gives_defaults(tmp_path):
    (tmp_path / "c.json").write_text("{}")
    for cfg in (load_config(None), load_config(tmp_path / "c.json")):
        lc = cfg.loop_config()
        assert lc.k_per_corpus == 5 and lc.final_k == 5 and lc.max_iterations == 3
        assert lc.thresholds.per_criterion_min == 2 and lc.thresholds.total_min == 6
        assert lc.weights.usefulness == Fraction(1, 2)
        roles = cfg.role_settings()
        assert roles["planner"].temperature == 0.6 and roles["critic"].temperature == 0.6
        assert roles["generator"].temperature == 0.0
        assert cfg.pool()[0] == "id" and len(cfg.pool()) == 13


def test_threshold_override_reaches_validity():
    lc = config_from_dict({"loop": {"total_min": 7}}).loop_config()
    assert not is_valid(CriterionScores(3, 2, 2, 2), lc.thresholds)
    assert is_valid(CriterionScores(3, 2, 2, 2), load_config(None).loop_config().thresholds)


def test_partial_role_override_keeps_other_fields():
    cfg = config_from_dict({"roles": {"generator": {"max_tokens": 99}}})
    assert cfg.role_settings()["generator"].max_tokens == 99
    assert cfg.role_settings()["generator"].temperature == 0.0
    assert cfg.role_settings()["planner"] == load_config(None).role_settings()["planner"]


@pytest.mark.parametrize("data,where", [
    ({"loop": {"weights": {"usefulness": -0.5}}}, "loop.weights.usefulness"),
    ({"loop": {"k_per_corpus": 0}}, "loop.k_per_corpus"),
    ({"loop": {"colour": 1}}, "loop.colour"),
    ({"bogus": True}, "bogus"),
    ({"chunking": {"max_chars": 100, "overlap_chars": 100}}, "chunking"),
    ({"language_pool": ["ko", "es"]}, "language_pool"),
    ({"loop": {"enable_dynamic_corpora": False}}, "loop"),
    ({"loop": {"enable_dynamic_corpora": False, "fixed_langs": ["am"]}, "language_pool": ["en"]}, "fixed_langs"),
    ({"tiers": {"ko": "extreme"}}, "tiers.ko"),
    ({"roles": {"oracle": {"temperature": 1}}}, "roles"),
])
def test_invalid_config_names_the_key(data, where):
    with pytest.raises(ConfigurationError, match=where.replace(".", r"\.")):
        config_from_dict(data)


def test_bad_json_file(tmp_path):
    (tmp_path / "c.json").write_text("{nope")
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        load_config(tmp_path / "c.json")


overrides = st.fixed_dictionaries({}, optional={
    "loop": st.fixed_dictionaries({}, optional={
        "k_per_corpus": st.integers(1, 20), "max_iterations": st.integers(1, 6),
        "total_min": st.floats(0, 12.5, allow_nan=False).map(lambda x: round(x, 2)),
        "enable_query_rewrite": st.booleans(),
        "weights": st.fixed_dictionaries({}, optional={"relevance": st.sampled_from([0.0, 0.25, 1.0, 2.0])}),
    }),
    "embedding": st.fixed_dictionaries({}, optional={"dim": st.integers(1, 512)}),
    "roles": st.fixed_dictionaries({}, optional={
        "critic": st.fixed_dictionaries({}, optional={"temperature": st.sampled_from([0.0, 0.3, 1.0])})}),
    "tiers": st.dictionaries(st.sampled_from(["ko", "su", "en"]), st.sampled_from(["low", "mid", "high"]),
                             max_size=2),
})


@settings(max_examples=100, deadline=None)
@given(data=overrides)
def test_config_round_trip(data):
    cfg = config_from_dict(data)
    again = config_from_dict(json.loads(json.dumps(serialize_config(cfg))))
    assert again == cfg and serialize_config(again) == serialize_config(cfg)
    assert again.loop_config() == cfg.loop_config()


# -- CLI --------------------------------------------------------------------

def run_cli(*argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


FIXTURE = Path(__file__).resolve().parents[1] / "src" / "coral" / "fixtures" / "two_iter.json"


def test_simulate_writes_trace(tmp_path, capsys):
    code, out, _ = run_cli("simulate", "--script", FIXTURE, "--out", tmp_path, capsys=capsys)
    assert code == 0
    assert "iteration 2: langs=ko,en" in out and "answer: B" in out
    trace = json.loads((tmp_path / "simulate-two_iter.json").read_text())
    assert [r["iteration"] for r in trace["trace"]] == [1, 2] and trace["answer"] == "B"
    assert trace["config"]["engine"]["loop"]["k_per_corpus"] == 5


def test_simulate_flags_unused_exchanges(tmp_path, capsys):
    fixture = json.loads(FIXTURE.read_text())
    fixture["exchanges"].append({"role": "generator", "reply": "spare"})
    (tmp_path / "f.json").write_text(json.dumps(fixture))
    code, _, err = run_cli("simulate", "--script", tmp_path / "f.json", "--out", tmp_path, capsys=capsys)
    assert code == 1 and "never requested" in err


def test_run_without_index_names_the_shard(tmp_path, capsys):
    code, _, err = run_cli("run", "--method", "coral", "--query", "q", "--data-dir", tmp_path, capsys=capsys)
    assert code == 1
    assert err.startswith("coral: error:") and "no index shard for language" in err
    assert len(err.strip().splitlines()) == 1


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["run", "--query", "q"])
    assert e.value.code == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "coral.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout


def _ingest_and_index(tmp_path, capsys):
    docs = tmp_path / "en.jsonl"
    docs.write_text("".join(json.dumps({"id": f"d{i}", "text": f"United States custom number {i}"}) + "\n"
                            for i in range(8)))
    assert run_cli("ingest", "en", docs, "--data-dir", tmp_path / "data", capsys=capsys)[0] == 0
    code, out, _ = run_cli("index", "all", "--allow-empty", "--data-dir", tmp_path / "data", capsys=capsys)
    assert code == 0 and "indexed en: 8 rows" in out and "indexed am: 0 rows" in out


def test_ingest_index_and_run_baseline(tmp_path, capsys):
    _ingest_and_index(tmp_path, capsys)
    (tmp_path / "s.json").write_text(json.dumps([{"role": "generator", "reply": "Answer: A"}]))
    code, out, _ = run_cli("run", "--method", "fixed_scope", "--scope", "en", "--query", "custom?",
                           "--script", tmp_path / "s.json", "--data-dir", tmp_path / "data",
                           "--trace-dir", tmp_path / "traces", capsys=capsys)
    assert code == 0 and "answer: A" in out
    trace = json.loads(next((tmp_path / "traces").glob("run-fixed_scope-*.json")).read_text())
    assert len(trace["evidence_used"]) == 5 and trace["config"]["backend"] == "scripted"


def test_eval_limit_and_report(tmp_path, capsys):
    _ingest_and_index(tmp_path, capsys)
    data = write_blend(tmp_path / "blend.csv", blend_rows({"US": 30}))
    (tmp_path / "s.json").write_text(json.dumps([{"role": "generator", "reply": "Answer: A"}] * 10))
    out_dir = tmp_path / "ev"
    code, out, _ = run_cli("eval", "--dataset", "blend", "--method", "multi_rag", "--data-file", data,
                           "--limit", 10, "--script", tmp_path / "s.json", "--data-dir", tmp_path / "data",
                           "--out", out_dir, capsys=capsys)
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())["reports"][0]
    assert report["n"] == 10 and report["method"] == "multi_rag"
    assert len(list((out_dir / "runs").glob("*.json"))) == 10
    expected = sum(r["answer_idx"] == "A" for r in blend_rows({"US": 30})[:10])
    assert report["correct"] == expected

    (out_dir / "report.json").unlink()
    code, out, _ = run_cli("report", out_dir, capsys=capsys)
    assert code == 0 and f"multi_rag: n=10 accuracy={expected / 10:.4f}" in out
    assert json.loads((out_dir / "report.json").read_text())["reports"][0]["correct"] == expected


def test_eval_missing_dataset_file(tmp_path, capsys):
    code, _, err = run_cli("eval", "--dataset", "click", "--method", "non_rag", "--data-dir", tmp_path,
                           capsys=capsys)
    assert code == 1 and "no click file" in err


def test_config_file_is_applied(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"loop": {"k_per_corpus": 2}}))
    code, _, _ = run_cli("simulate", "--script", FIXTURE, "--out", tmp_path, "--config", tmp_path / "c.json",
                         capsys=capsys)
    trace = json.loads((tmp_path / "simulate-two_iter.json").read_text())
    assert trace["config"]["engine"]["loop"]["k_per_corpus"] == 2
    assert code == 0


def test_invalid_config_file_exits_1(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"loop": {"weights": {"relevance": -1}}}))
    code, _, err = run_cli("simulate", "--script", FIXTURE, "--config", tmp_path / "c.json", capsys=capsys)
    assert code == 1 and "loop.weights.relevance" in err


def test_engine_config_is_frozen():
    cfg = EngineConfig()
    with pytest.raises(Exception):
        cfg.loop = None
