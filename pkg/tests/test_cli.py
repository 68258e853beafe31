import json

import pytest

from nomenflow.cli import main
from nomenflow.classifier import load_model

FAST = ["--buckets", "65536", "--dim", "16", "--epochs", "3"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out-dir", str(d), "--per-label", "300", "--periods", "1998-2007,2008-2018"]) == 0
    return d


def test_preprocess_reference_sample(tmp_path, capsys):
    src = tmp_path / "names.txt"
    src.write_text("JÃ¼rgen HÃ¼holdt\nRomÃ¡n MontaÃ±ez\nSøren Hess-Olesen\nMónika Remsei\n"
                   "Rupert König\nMiladin Ševarlić\nR2-D2\n", encoding="utf-8")
    code, out, err = run(capsys, "preprocess", src, tmp_path / "out.tsv")
    assert code == 0
    assert "config:" in err
    rows = [line.split("\t") for line in (tmp_path / "out.tsv").read_text(encoding="utf-8").splitlines()]
    assert [r[1] for r in rows[:6]] == ["jurgen huholdt", "roman montanez", "sren hess olesen",
                                        "monika remsei", "rupert konig", "miladin sevarlic"]
    assert rows[6][2] == "invalid_chars"
    assert "kept 6" in out


def test_preprocess_empty_and_missing(tmp_path, capsys):
    (tmp_path / "empty.txt").write_text("")
    code, _, _ = run(capsys, "preprocess", tmp_path / "empty.txt", tmp_path / "o.tsv")
    assert code == 0 and (tmp_path / "o.tsv").read_text() == ""
    code, _, err = run(capsys, "preprocess", tmp_path / "nope.txt", tmp_path / "o2.tsv")
    assert code == 1 and "nope.txt" in err
    assert not (tmp_path / "o2.tsv").exists()


def test_train_evaluate_predict(synth_dir, tmp_path, capsys):
    model = tmp_path / "l1.bin"
    code, out, _ = run(capsys, "train", synth_dir / "names.tsv", "-o", model, "--level", "1",
                       "--val", synth_dir / "names.tsv", "--json", *FAST)
    assert code == 0
    payload = json.loads(out)
    assert len(payload["epoch_loss"]) == 3 and payload["validation"]["accuracy"] >= 0.95
    assert load_model(model).level == 1
    code, out, _ = run(capsys, "evaluate", model, synth_dir / "names.tsv", "--json",
                       "--confusion", tmp_path / "cm.csv")
    assert code == 0 and json.loads(out)["accuracy"] >= 0.95
    assert (tmp_path / "cm.csv").read_text().startswith("true\\predicted")
    names = tmp_path / "q.txt"
    names.write_text("abcde badcea\n123\n")
    code, out, _ = run(capsys, "predict", model, names, "--json")
    lines = [json.loads(x) for x in out.splitlines()]
    assert lines[0]["label"] == "East Asian" and lines[1]["status"] == "invalid_chars"


def test_train_config_errors(synth_dir, tmp_path, capsys):
    code, _, err = run(capsys, "train", synth_dir / "names.tsv", "-o", tmp_path / "m.bin",
                       "--taxonomy", tmp_path / "missing.tsv")
    assert code == 2 and "taxonomy" in err
    code, _, _ = run(capsys, "train", synth_dir / "names.tsv", "-o", tmp_path / "m.bin", "--buckets", "1000")
    assert code == 2
    code, _, _ = run(capsys, "train", synth_dir / "names.tsv", "-o", tmp_path / "m.bin", "--level", "4")
    assert code == 2
    assert not (tmp_path / "m.bin").exists()


def test_train_single_label_warns(tmp_path, capsys):
    corpus = tmp_path / "one.tsv"
    corpus.write_text("name\tcountry\nanna\tDE\nberta\tDE\n")
    code, _, err = run(capsys, "train", corpus, "-o", tmp_path / "m.bin", *FAST)
    assert code == 0 and "degenerate_single_label" in err


def test_train_data_error(tmp_path, capsys):
    corpus = tmp_path / "us.tsv"
    corpus.write_text("anna\tUS\n")
    code, _, err = run(capsys, "train", corpus, "-o", tmp_path / "m.bin", *FAST)
    assert code == 3 and "US" in err


def test_config_file_and_env(synth_dir, tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1, "dim": 8, "buckets": 65536}))
    monkeypatch.setenv("NOMENFLOW_CONFIG", str(cfg))
    code, out, err = run(capsys, "train", synth_dir / "names.tsv", "-o", tmp_path / "m.bin", "--json")
    assert code == 0 and len(json.loads(out)["epoch_loss"]) == 1
    echoed = json.loads(err.split("config: ", 1)[1].splitlines()[0])
    assert echoed["epochs"] == 1 and echoed["dim"] == 8
    code, out, _ = run(capsys, "train", synth_dir / "names.tsv", "-o", tmp_path / "m.bin", "--json",
                       "--epochs", "2")
    assert len(json.loads(out)["epoch_loss"]) == 2  # flag beats config
    cfg.write_text(json.dumps({"epochz": 1}))
    code, _, err = run(capsys, "train", synth_dir / "names.tsv", "-o", tmp_path / "m.bin")
    assert code == 2 and "epochz" in err


def test_analyze_recovers_planted_truth(synth_dir, tmp_path, capsys):
    m3, m2 = tmp_path / "l3.bin", tmp_path / "l2.bin"
    assert run(capsys, "train", synth_dir / "names.tsv", "-o", m3, "--level", "3", *FAST)[0] == 0
    assert run(capsys, "train", synth_dir / "names.tsv", "-o", m2, "--level", "2", *FAST)[0] == 0
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "analyze", synth_dir / "records.jsonl", "--level3-model", m3,
                       "--level2-model", m2, "--periods", "1998-2007,2008-2018", "--out-dir", out_dir, "--json")
    assert code == 0
    got = sorted((out_dir / "flows.csv").read_text().splitlines())
    want = sorted((synth_dir / "truth_flows.csv").read_text().splitlines())
    assert got == want
    summary = json.loads(out)
    assert summary["names_rejected"] == 200
    assert set(summary["by_definition"]) == {"academic", "name"}
    assert summary["level3_vs_level2_consistency"]["consistency"] == 1.0


def test_analyze_all_rejected(tmp_path, capsys, synth_dir):
    m3, m2 = tmp_path / "l3.bin", tmp_path / "l2.bin"
    run(capsys, "train", synth_dir / "names.tsv", "-o", m3, "--level", "3", *FAST)
    run(capsys, "train", synth_dir / "names.tsv", "-o", m2, "--level", "2", *FAST)
    recs = tmp_path / "r.jsonl"
    recs.write_text("".join(json.dumps({"author_id": f"a{i}", "name": "R2-D2", "observations": [
        {"year": 2000, "country": "US"}, {"year": 2001, "country": "US"},
        {"year": 2002, "country": "CN"}, {"year": 2003, "country": "CN"}]}) + "\n" for i in range(4)))
    code, out, _ = run(capsys, "analyze", recs, "--level3-model", m3, "--level2-model", m2,
                       "--out-dir", tmp_path / "o", "--json")
    assert code == 0
    s = json.loads(out)
    assert s["names_rejected"] == 4 and s["names_assigned"] == 0
    assert s["by_definition"]["academic"]["events"] == 4
    assert "name" not in s["by_definition"]


def test_analyze_malformed_line(tmp_path, capsys):
    recs = tmp_path / "r.jsonl"
    recs.write_text('{"author_id": "a", "name": "n", "observations": [{"year": 2000, "country": "US"}]}\n'
                    "{oops\n")
    code, _, err = run(capsys, "analyze", recs, "--origin", "academic", "--out-dir", tmp_path / "o")
    assert code == 3 and "r.jsonl:2" in err
    assert not (tmp_path / "o" / "flows.csv").exists()


def test_analyze_needs_models(tmp_path, capsys, synth_dir):
    code, _, _ = run(capsys, "analyze", synth_dir / "records.jsonl", "--out-dir", tmp_path / "o")
    assert code == 2


def test_corrupt_model_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nonsense")
    names = tmp_path / "q.txt"
    names.write_text("anna\n")
    code, _, err = run(capsys, "predict", bad, names)
    assert code == 3 and "BadMagicError" in err
    code, _, _ = run(capsys, "predict", tmp_path / "missing.bin", names)
    assert code == 1


def test_build_corpus(tmp_path, capsys):
    src = tmp_path / "raw.tsv"
    rows = [f"Name{chr(97 + i % 26)}{chr(97 + i // 26 % 26)} Person\tGermany" for i in range(120)]
    rows += ["Jane Doe\tUSA", "R2-D2\tFrance", "Only Few\tFrance"]
    src.write_text("\n".join(rows) + "\n", encoding="utf-8")
    code, out, _ = run(capsys, "build-corpus", src, "--out-dir", tmp_path / "c", "--json")
    assert code == 0
    stats = json.loads(out)
    assert stats["reconciles"] and stats["splits"] == {"train": 78, "val": 18, "test": 24}
    assert stats["rejected"] == {"invalid_chars": 1}
    assert (tmp_path / "c" / "train.tsv").read_text().startswith("name\tcountry\n")
    code, _, _ = run(capsys, "build-corpus", src, "--out-dir", tmp_path / "c2", "--fractions", "0.5,0.5")
    assert code == 2


def test_entropy(synth_dir, capsys):
    code, out, _ = run(capsys, "entropy", synth_dir / "names.tsv", "--countries", "CN,DE", "--json")
    assert code == 0
    res = json.loads(out)["countries"]
    assert 0 < res["CN"]["entropy"] <= 1 and res["DE"]["reference"] == 0.86
    code, _, err = run(capsys, "entropy", synth_dir / "names.tsv", "--countries", "FR")
    assert code == 3 and "empty_country" in err
