import json

import pytest

from genret.cli import main
from genret.lm import load_model
from genret.sid.table import load_sid_table
from genret.text import EOS

from conftest import write_jsonl

THREE = [
    {"target_id": "a", "descriptor": "a brown dog catches a frisbee in the park"},
    {"target_id": "b", "descriptor": "a black cat sleeps on a red sofa"},
    {"target_id": "c", "descriptor": "two children build a sandcastle at the beach"},
]


@pytest.fixture
def work(tmp_path):
    write_jsonl(tmp_path / "corpus.jsonl", THREE)
    write_jsonl(
        tmp_path / "queries.jsonl",
        [{"query_id": f"q{r['target_id']}", "text": f"there is {r['descriptor']}", "gt_targets": [r["target_id"]]} for r in THREE],
    )
    return tmp_path


def _run(work, *argv):
    return main(
        [
            argv[0],
            "--corpus", str(work / "corpus.jsonl"),
            "--queries", str(work / "queries.jsonl"),
            "--sid-table", str(work / "sids.jsonl"),
            "--model", str(work / "model.bin"),
            "--out-dir", str(work / "reports"),
            *argv[1:],
        ]
    )


def test_build_ids_three(work, capsys):
    assert _run(work, "build-ids") == 0
    out = capsys.readouterr().out
    assert "3 identifiers" in out and "0 collision groups" in out
    assert len(load_sid_table(work / "sids.jsonl").sids) == 3


def test_build_ids_collision_report(work, capsys):
    write_jsonl(work / "corpus.jsonl", THREE + [{"target_id": "d", "descriptor": THREE[0]["descriptor"]}])
    assert _run(work, "build-ids", "-q") == 0
    out = capsys.readouterr().out
    assert "1 collision groups" in out and "<- a, d" in out


def test_build_ids_byte_identical(work):
    _run(work, "build-ids", "-q")
    first = (work / "sids.jsonl").read_bytes()
    _run(work, "build-ids", "-q")
    assert (work / "sids.jsonl").read_bytes() == first


def test_train_retrieve_eval(work, capsys):
    assert _run(work, "build-ids", "-q") == 0
    assert _run(work, "train") == 0
    model = load_model(work / "model.bin")
    table = load_sid_table(work / "sids.jsonl")
    # recount from the saved file: one observation per query and prefix
    q = f"there is {THREE[1]['descriptor']}"
    seq = table.sids["b"].tokens()
    assert model.counts[q][()] == {seq[0]: 1}
    assert model.counts[q][seq[:-1]] == {EOS: 1}
    capsys.readouterr()

    assert _run(work, "retrieve", q, "--top", "1") == 0
    line = capsys.readouterr().out.strip()
    assert line.split()[1] == "b"

    assert _run(work, "eval") == 0
    report = (work / "reports" / "report-full.txt").read_text()
    assert "R@1 100.00".split() in [ln.split() for ln in report.splitlines()]
    assert _run(work, "eval", "--from-artifacts") == 0
    assert (work / "reports" / "report-full.txt").read_text() == report


def test_retrieve_single_sid(tmp_path, capsys):
    write_jsonl(tmp_path / "corpus.jsonl", THREE[:1])
    write_jsonl(tmp_path / "queries.jsonl", [{"query_id": "q", "text": "dog", "gt_targets": ["a"]}])
    assert _run(tmp_path, "build-ids", "-q") == 0
    assert _run(tmp_path, "train") == 0
    capsys.readouterr()
    assert _run(tmp_path, "retrieve", "something unrelated") == 0
    assert capsys.readouterr().out.split()[1] == "a"


def test_train_errors(work, capsys):
    assert _run(work, "train") == 2
    assert "build-ids" in capsys.readouterr().err
    _run(work, "build-ids", "-q")
    write_jsonl(work / "queries.jsonl", [])
    assert _run(work, "train") == 2
    assert "error:" in capsys.readouterr().err


def test_hash_mismatch_refused(work, capsys):
    _run(work, "build-ids", "-q")
    assert _run(work, "train", "--m", "3") == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_flag_rejected(work):
    with pytest.raises(SystemExit) as exc:
        _run(work, "retrieve", "q", "--bogus")
    assert exc.value.code == 2


def test_missing_corpus(tmp_path, capsys):
    assert main(["build-ids", "--corpus", str(tmp_path / "nope.jsonl")]) == 2
    assert capsys.readouterr().err.startswith("error: corpus file not found")


def test_config_file_and_override(work, capsys):
    cfg = work / "cfg.json"
    cfg.write_text(json.dumps({"params": {"m": 2}, "thresholds": {"R@1": 100.0}}))
    assert _run(work, "build-ids", "-q", "--config", str(cfg)) == 0
    assert all(len(s.lexical) == 2 for s in load_sid_table(work / "sids.jsonl").sids.values())
    assert _run(work, "build-ids", "-q", "--config", str(cfg), "--m", "3") == 0
    assert all(len(s.lexical) == 3 for s in load_sid_table(work / "sids.jsonl").sids.values())
    bad = work / "bad.json"
    bad.write_text(json.dumps({"colour": 1}))
    assert _run(work, "build-ids", "--config", str(bad)) == 2


def test_threshold_exit_code(work, capsys):
    cfg = work / "cfg.json"
    cfg.write_text(json.dumps({"thresholds": {"R@1": 100.0}}))
    assert _run(work, "eval", "--config", str(cfg)) == 0
    # no_constraint without backoff cannot decode unseen paraphrases
    write_jsonl(
        work / "paraphrases.jsonl",
        [{"query_id": "p", "text": "some unrelated words entirely", "gt_targets": ["a"]}],
    )
    rc = main(
        [
            "eval", "--config", str(cfg),
            "--corpus", str(work / "corpus.jsonl"),
            "--train-queries", str(work / "queries.jsonl"),
            "--queries", str(work / "paraphrases.jsonl"),
            "--out-dir", str(work / "reports"),
            "--mode", "no_constraint", "--no-backoff",
        ]
    )
    assert rc == 1
    assert "threshold violated" in capsys.readouterr().err


def test_sweep_rows(work):
    assert _run(work, "sweep", "--axis", "beam", "--k", "2") == 0
    lines = (work / "reports" / "sweep-beam.csv").read_text().splitlines()
    assert lines[0].startswith("# genret sweep")
    assert len(lines) == 2 + 5
    assert _run(work, "sweep", "--axis", "grid", "--cluster-ks", "1,2", "--lexical-ms", "2,3,4") == 0
    assert len((work / "reports" / "sweep-grid.csv").read_text().splitlines()) == 2 + 6


def test_inspect_sid(work, capsys):
    _run(work, "build-ids", "-q")
    capsys.readouterr()
    assert _run(work, "inspect-sid", "b") == 0
    assert "target   b" in capsys.readouterr().out
    assert _run(work, "inspect-sid", "zz") == 2


def test_gen_synthetic(tmp_path, capsys):
    assert main(["gen-synthetic", "--suite", "collision", "--out", str(tmp_path / "s")]) == 0
    assert len((tmp_path / "s" / "corpus.jsonl").read_text().splitlines()) == 200
