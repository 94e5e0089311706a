import json

import pytest

from dynsel import cli
from dynsel.data import load_dataset
from dynsel.harness import EvaluationReport
from dynsel.pool import load_pool


@pytest.fixture
def config_file(tmp_path):
    cfg = {"data": {"source": "synthetic", "n_per_class": [290, 50], "d": 3},
           "pools": [{"name": "GNB", "kind": "bagging", "learner": "GNB", "M": 5}],
           "techniques": ["ola", "knorae", "knorau", "desp"], "ratios": [1, 5.8],
           "seed": 4, "out_dir": str(tmp_path / "out")}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_prepare_writes_splits(config_file, tmp_path):
    assert cli.main(["prepare", "--config", str(config_file)]) == 0
    train = load_dataset(tmp_path / "out" / "train.csv")
    test = load_dataset(tmp_path / "out" / "test.csv")
    assert len(train) + len(test) == 340


def test_train_writes_one_pool_per_ratio(config_file, tmp_path):
    assert cli.main(["train", "--config", str(config_file), "--ratios", "1,2"]) == 0
    pools = sorted(p.name for p in (tmp_path / "out" / "pools").iterdir())
    assert pools == ["GNB_ir1.json", "GNB_ir2.json"]
    assert len(load_pool(tmp_path / "out" / "pools" / "GNB_ir2.json")) == 5


def test_sweep_then_report(config_file, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["sweep", "--config", str(config_file), "--out", str(out),
                     "--seed", "9", "--techniques", "ola,desp"]) == 0
    rep = EvaluationReport.load(out / "report.json")
    assert rep.techniques == ("ola", "desp") and rep.metadata["seed"] == 9
    assert (out / "table_GNB.csv").exists()
    assert cli.main(["report", "--out", str(out), "--format", "markdown"]) == 0
    md = (out / "table_GNB.md").read_text().splitlines()
    assert len(md) == 2 + 2 * 6


def test_partial_failure_exit_code(config_file, tmp_path):
    assert cli.main(["sweep", "--config", str(config_file), "--ratios", "1,40",
                     "--out", str(tmp_path / "p")]) == 2


def test_config_errors_exit_1(tmp_path, capsys):
    assert cli.main(["sweep"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["sweep", "--config", str(bad)]) == 1
    bad.write_text(json.dumps({"pools": []}))
    assert cli.main(["sweep", "--config", str(bad)]) == 1
    assert "config error" in capsys.readouterr().err


def test_unknown_technique_flag(config_file):
    assert cli.main(["sweep", "--config", str(config_file), "--techniques", "nope"]) == 1


def test_report_missing_file(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path / "nothing")]) == 1
