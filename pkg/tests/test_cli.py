import json
import os
from pathlib import Path

import pytest

from hlogformer.cli import build_parser, main

GOLDEN = Path(__file__).parent / "golden"
SUBCOMMANDS = ["synth", "build-vocab", "train", "eval-mlm", "gen-fake", "detect", "export-embeddings", "pca",
               "classify", "recommend", "param-count", "mem-report", "gradcheck"]

TINY_INI = """\
[run]
seed = 0

[data]
corpus = logs.jsonl

[model]
d_model = 16
n_heads = 2
d_ff = 32
n_blocks = 1
flat_blocks = 2
max_window = 64
summary_slots = 3

[train]
epochs = 2
batch_size = 8
lr = 0.003
"""


def _help_text(name):
    parser = build_parser()
    if name == "hlogformer":
        return parser.format_help()
    sub = next(a for a in parser._actions if a.dest == "command")
    return sub.choices[name].format_help()


@pytest.mark.parametrize("name", ["hlogformer"] + SUBCOMMANDS)
def test_help_golden(name):
    text = _help_text(name)
    path = GOLDEN / f"{name}.txt"
    if os.environ.get("HLOGFORMER_REGEN_GOLDEN"):
        path.write_text(text)
    assert text == path.read_text()


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_help_lists_every_flag(name):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command").choices[name]
    text = _help_text(name)
    for action in sub._actions:
        for opt in action.option_strings:
            assert opt in text


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


def error_doc(err):
    return json.loads(err.strip().splitlines()[-1])


def test_mem_report_example(capsys):
    code, doc, _ = run(capsys, "mem-report", "--segment-lengths", ",".join(["10"] * 10),
                       "--summary-slots", "0", "--window", "100")
    assert code == 0
    assert (doc["flat_total"], doc["hierarchical_total"], doc["ratio"]) == (10000, 1000, 0.1)
    assert doc["rows"][0]["ratio_exact"] == "1/10"


def test_param_count(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nseed = 0\n[model]\nd_model = 256\nd_ff = 1024\nn_heads = 4\n")
    code, doc, _ = run(capsys, "param-count", "--config", ini, "--vocab-size", 200)
    assert code == 0
    assert doc["hlogformer"]["per_block"] == 789760
    assert doc["block_ratio"] == 0.5


def test_gradcheck_default(capsys):
    code, doc, _ = run(capsys, "gradcheck")
    assert code == 0
    assert doc["passed"] and doc["max_rel_error"] < 1e-4
    assert doc["probes"] >= 50
    assert "sigma_init" in doc["groups"]


def test_usage_error_is_json(capsys):
    with pytest.raises(SystemExit) as e:
        main(["train"])
    assert e.value.code == 2
    assert error_doc(capsys.readouterr().err)["exit_code"] == 2


def test_config_errors(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nout = x\n")
    code, _, err = run(capsys, "param-count", "--config", ini, "--vocab-size", 10)
    assert code == 2 and "seed" in error_doc(err)["message"]
    ini.write_text("[run]\nseed = 0\n[model]\nwidth = 3\n")
    assert run(capsys, "param-count", "--config", ini, "--vocab-size", 10)[0] == 2
    ini.write_text("[run]\nseed = 0\n[model]\nd_model = 10\nn_heads = 4\n")
    assert run(capsys, "param-count", "--config", ini, "--vocab-size", 10)[0] == 2
    assert run(capsys, "param-count", "--config", tmp_path / "none.ini", "--vocab-size", 10)[0] == 2


def test_data_errors(tmp_path, capsys):
    code, _, err = run(capsys, "eval-mlm", "--ckpt", tmp_path / "none.hlog", "--data", tmp_path / "x.jsonl")
    assert code == 3 and error_doc(err)["error"] == "DataError"
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"a": 1}\n{"a": \n')
    assert run(capsys, "build-vocab", bad, "--out", tmp_path / "v")[0] == 3


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "logs", "--n", "40", "--out", str(root)]) == 0
    (root / "run.ini").write_text(TINY_INI)
    return root


def _train(root, name, mode="hlog"):
    return main(["train", "--config", str(root / "run.ini"), "--mode", mode, "--out", str(root / name)])


def test_train_outputs_and_determinism(workspace, capsys):
    assert _train(workspace, "a") == 0
    assert _train(workspace, "b") == 0
    capsys.readouterr()
    for name in ("metrics.json", "checkpoint.hlog", "vocab.txt", "test.jsonl"):
        assert (workspace / "a" / name).read_bytes() == (workspace / "b" / name).read_bytes(), name
    # the effective config differs only in the echoed output directory
    strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("out = ")]  # noqa: E731
    assert strip(workspace / "a" / "effective_config.ini") == strip(workspace / "b" / "effective_config.ini")
    metrics = json.loads((workspace / "a" / "metrics.json").read_text())
    assert metrics["mode"] == "bidirectional"
    assert len(metrics["history"]) == 4
    assert "seed = 0" in (workspace / "a" / "effective_config.ini").read_text()


def test_rerun_requires_force(workspace, capsys):
    if not (workspace / "a").exists():
        _train(workspace, "a")
    before = (workspace / "a" / "metrics.json").read_bytes()
    code, _, err = run(capsys, "train", "--config", workspace / "run.ini", "--out", workspace / "a")
    assert code == 2 and "--force" in error_doc(err)["message"]
    assert (workspace / "a" / "metrics.json").read_bytes() == before


def test_pipeline(workspace, capsys):
    if not (workspace / "a").exists():
        _train(workspace, "a")
    run_dir = workspace / "a"
    ckpt = run_dir / "checkpoint.hlog"

    code, doc, _ = run(capsys, "eval-mlm", "--ckpt", ckpt, "--data", run_dir / "test.jsonl")
    assert code == 0 and doc["mlm"] > 0

    code, doc, _ = run(capsys, "gen-fake", "--data", run_dir / "test.jsonl")
    assert code == 0
    fake = run_dir / "test.fake.jsonl"
    assert fake.is_file() and doc["records"] == 5

    reports = []
    for name in ("det1", "det2"):
        code, doc, _ = run(capsys, "detect", "--ckpt", ckpt, "--real", run_dir / "test.jsonl", "--fake", fake,
                           "--out", workspace / name)
        assert code == 0
        reports.append((workspace / name / "report.json").read_bytes())
    assert reports[0] == reports[1]
    rep = json.loads(reports[0])
    assert rep["T_values"] == [1, 5, 10, 20, 50]
    assert len(rep["classification"]) == 21
    for c in rep["classification"]:
        assert c["balanced_accuracy"] == pytest.approx((c["real_accuracy"] + c["fake_accuracy"]) / 2)

    code, doc, _ = run(capsys, "export-embeddings", "--ckpt", ckpt, "--data", run_dir / "test.jsonl",
                       "--fake", fake, "--out", workspace / "emb")
    assert code == 0 and doc["rows"] == 10 and doc["dims"] == 16
    code, doc, _ = run(capsys, "pca", "--embeddings", workspace / "emb" / "embeddings.csv",
                       "--out", workspace / "emb")
    assert code == 0 and len(doc["explained_variance_ratio"]) == 2
    assert len((workspace / "emb" / "pca.csv").read_text().splitlines()) == 11


def test_items_pipeline(tmp_path, capsys):
    assert main(["synth", "items", "--n-items", "60", "--n-users", "8", "--out", str(tmp_path)]) == 0
    (tmp_path / "run.ini").write_text(TINY_INI.replace("logs.jsonl", "items.jsonl").replace("epochs = 2", "epochs = 1"))
    assert _train(tmp_path, "m") == 0
    capsys.readouterr()
    code, doc, _ = run(capsys, "export-embeddings", "--ckpt", tmp_path / "m" / "checkpoint.hlog",
                       "--data", tmp_path / "items.jsonl", "--out", tmp_path / "emb")
    assert code == 0 and doc["rows"] == 60
    emb = tmp_path / "emb" / "embeddings.csv"
    code, doc, _ = run(capsys, "classify", "--embeddings", emb, "--labels", tmp_path / "item_labels.csv",
                       "--epochs", 20)
    assert code == 0 and 0 <= doc["test_accuracy"] <= 1
    code, doc, _ = run(capsys, "recommend", "--embeddings", emb, "--histories", tmp_path / "histories.json")
    assert code == 0 and set(doc["precision_at_k"]) == {"1", "3", "5", "8", "10"}
