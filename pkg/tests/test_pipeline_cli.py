import json
from pathlib import Path

import pytest

from snippet_forge.cli import main
from snippet_forge.errors import ConfigError
from snippet_forge.kb import build_index, load_index
from snippet_forge.pipeline import RunConfig, load_config
from snippet_forge.validator import validate_python

from conftest import FIXTURES, JARS

E2E = FIXTURES / "e2e"
TRANSCRIPT = str(E2E / "transcript.jsonl")
DATASET = str(E2E / "dataset")


def rows(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


# --- configuration ---------------------------------------------------------------

def test_config_layers(tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({"out_dir": "from-file", "fixing": {"max_rounds": 2},
                                    "backend": {"model_id": "file-model"}}))
    env = {"SNIPPET_FORGE_OUT": "from-env", "SNIPPET_FORGE_DATASET": "env-data",
           "SNIPPET_FORGE_MODEL": "env-model"}
    cfg = load_config(cfg_file, {"fixing": {"guard_mode": "Reject"}, "backend": {"model_id": "flag-model"}}, env)
    assert cfg.out_dir == "from-file"          # file beats env
    assert cfg.dataset_root == "env-data"      # env beats default
    assert cfg.fixing.max_rounds == 2 and cfg.fixing.guard_mode.value == "Reject"
    assert cfg.backend.model_id == "flag-model"  # flag beats file
    assert cfg.effective_fixing.model_id == cfg.effective_inference.model_id == "flag-model"
    assert load_config(environ={}) == RunConfig()


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"fixing": {"rounds": 3}},
    {"fixing": {"guard_mode": "Sometimes"}},
    {"backend": {"kind": "carrier-pigeon"}},
    {"inference": {"k_samples": 0}},
    {"parallelism": 0},
])
def test_bad_config_rejected(tmp_path, data):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        load_config(path, environ={})


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json", environ={})
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json", environ={})


def test_disabling_self_consistency_means_one_sample():
    cfg = RunConfig(self_consistency=False)
    assert (cfg.effective_inference.k_samples, cfg.effective_inference.max_tiebreak_rounds) == (1, 1)


# --- exit codes -----------------------------------------------------------------

def test_exit_config_error(tmp_path, capsys):
    assert main(["infer", "--backend", "mock", "--mock-transcript", TRANSCRIPT]) == 1
    assert "no dataset" in capsys.readouterr().err
    assert main(["infer", "--dataset", DATASET, "--backend", "mock"]) == 1
    assert main(["synthesize", "--dataset", DATASET, "--libraries", "joda-time", "--backend", "mock",
                 "--mock-transcript", TRANSCRIPT, "--out", str(tmp_path)]) == 1  # no index


def test_exit_missing_environment(tmp_path, capsys):
    code = main(["synthesize", "--dataset", DATASET, "--libraries", "stdlib", "--backend", "mock",
                 "--mock-transcript", TRANSCRIPT, "--python-env", str(tmp_path / "no-venv"), "--out", str(tmp_path)])
    assert code == 2 and "no-venv" in capsys.readouterr().err


def test_exit_missing_compiler(tmp_path):
    index = tmp_path / "kb.json"
    assert main(["kb", "build", "--archives", str(JARS), "--out", str(index)]) == 0
    code = main(["synthesize", "--dataset", DATASET, "--libraries", "jdk", "--backend", "mock",
                 "--mock-transcript", TRANSCRIPT, "--k", "3", "--index", str(index), "--java-compiler", "/nonexistent/javac",
                 "--out", str(tmp_path / "run"), "--no-taxonomy"])
    assert code == 2


def test_exit_live_without_key(monkeypatch, tmp_path):
    monkeypatch.delenv("SNIPPET_FORGE_API_KEY", raising=False)
    assert main(["infer", "--dataset", DATASET, "--backend", "live", "--out", str(tmp_path)]) == 1


# --- commands ---------------------------------------------------------------------

def test_kb_build_round_trip(tmp_path, capsys):
    dates = tmp_path / "dates.tsv"
    dates.write_text("joda-time-2.1\t2030-01-01\n")
    out = tmp_path / "kb.json"
    assert main(["kb", "build", "--archives", str(JARS), "--dates", str(dates), "--out", str(out)]) == 0
    assert "indexed 3 artifact(s)" in capsys.readouterr().out
    expected, _ = build_index(sorted(JARS.resolve().glob("*.jar")), {"joda-time-2.1": "2030-01-01"})
    assert load_index(out).to_dict() == expected.to_dict()


def test_kb_build_bad_dates(tmp_path):
    dates = tmp_path / "dates.tsv"
    dates.write_text("no tab here\n")
    assert main(["kb", "build", "--archives", str(JARS), "--dates", str(dates),
                 "--out", str(tmp_path / "kb.json")]) == 1


def test_eval_scores_stored_predictions(tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    preds.write_text("\n".join(json.dumps(r) for r in [
        {"snippet_id": "stdlib/json_roundtrip", "imports": ["import json"], "compiled": True},
        {"snippet_id": "stdlib/path_counter", "imports": ["from collections import Counter"], "compiled": False},
        {"snippet_id": "ghost/none", "imports": []},
    ]))
    out = tmp_path / "eval"
    assert main(["eval", "--dataset", DATASET, "--libraries", "stdlib", "--predictions", str(preds),
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["compiled"] == 1 and report["summary"]["total"] == 3
    assert report["summary"]["match"] == {"Same": 1, "Different": 0, "Extra": 0, "Missing": 1, "None": 1}
    assert "CR 1/3" in capsys.readouterr().out


def test_infer_only_writes_predictions(tmp_path):
    out = tmp_path / "infer"
    assert main(["infer", "--dataset", DATASET, "--libraries", "stdlib", "--backend", "mock",
                 "--mock-transcript", TRANSCRIPT, "--k", "3", "--out", str(out)]) == 0
    got = {r["snippet_id"]: r["imports"] for r in rows(out / "predictions.jsonl")}
    assert got == {
        "stdlib/json_roundtrip": ["import json"],
        "stdlib/path_counter": ["from collections import Counter"],
        "stdlib/path_parts": ["from pathlib import PurePosixPath", "from textwrap import indent"],
    }
    assert not (out / "failure_worksheet.csv").exists()


def test_k1_m0_composes_inference_and_validation(tmp_path):
    """With one sample and no repair, synthesis equals inference followed by one validation."""
    inferred = tmp_path / "infer"
    assert main(["infer", "--dataset", DATASET, "--libraries", "stdlib", "--backend", "mock",
                 "--mock-transcript", TRANSCRIPT, "--no-self-consistency", "--out", str(inferred)]) == 0
    synthesized = tmp_path / "syn"
    assert main(["synthesize", "--dataset", DATASET, "--libraries", "stdlib", "--backend", "mock",
                 "--mock-transcript", TRANSCRIPT, "--no-self-consistency", "--max-rounds", "0",
                 "--python-env", "python3", "--no-taxonomy", "--out", str(synthesized)]) == 0
    first = {r["snippet_id"]: r for r in rows(inferred / "predictions.jsonl")}
    second = {r["snippet_id"]: r for r in rows(synthesized / "predictions.jsonl")}
    assert {k: r["imports"] for k, r in first.items()} == {k: r["imports"] for k, r in second.items()}
    for sid, row in second.items():
        body = (E2E / "dataset" / f"{sid}.py").read_text()
        expected = validate_python("\n".join(row["imports"]) + "\n" + body).success
        assert row["compiled"] is expected and row["rounds_used"] == 0
    assert [r["compiled"] for _, r in sorted(second.items())] == [True, False, False]


def test_repetitions_report_median(tmp_path):
    out = tmp_path / "rep"
    assert main(["synthesize", "--dataset", DATASET, "--libraries", "stdlib", "--backend", "mock",
                 "--mock-transcript", TRANSCRIPT, "--k", "3", "--max-rounds", "1", "--python-env", "python3",
                 "--repetitions", "5", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["repetitions"] == 5 and len(report["runs"]) == 5
    assert all(run == report["median"] for run in report["runs"])
    assert report["median"]["compiled"] == 2
    assert sorted(p.name for p in out.iterdir()) == [
        "report.json", "run-1", "run-2", "run-3", "run-4", "run-5", "table_match.csv"]
    assert (out / "run-3" / "transcripts" / "stdlib__path_parts.json").exists()
