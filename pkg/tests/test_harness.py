import json

import numpy as np
import pytest

from dynsel.dstech import TECHNIQUES
from dynsel.harness import (BASELINE, ConfigError, EvaluationReport, ExperimentConfig,
                            derive_seed, emit_report, pool_table, rank_by_f1, run_experiment,
                            top3_average)
from dynsel.metrics import METRIC_NAMES


def small_config(**over):
    base = {"data": {"source": "synthetic", "n_per_class": [580, 100], "d": 4,
                     "separation": 1.5},
            "pools": [{"name": "GNB", "kind": "bagging", "learner": "GNB", "M": 5}],
            "ratios": [1, 5.8], "seed": 11}
    base.update(over)
    return ExperimentConfig.from_dict(base)


def fake_report(values, metric="F1", techniques=None, ratio=1.0):
    techniques = techniques or [f"t{i}" for i in range(len(values))]
    cells = {}
    for t, v in zip(techniques, values):
        m = {k: 0.5 for k in METRIC_NAMES}
        m[metric] = v
        cells[("P", t, ratio)] = m
    return EvaluationReport(cells, ("P",), tuple(techniques), (ratio,))


# ------------------------------------------------------------------- config

def test_config_requires_pools_and_techniques():
    with pytest.raises(ConfigError):
        small_config(pools=[])
    with pytest.raises(ConfigError):
        small_config(techniques=[])
    with pytest.raises(ConfigError):
        small_config(techniques=["olaa"])
    with pytest.raises(ConfigError):
        small_config(unknown_key=1)


def test_config_roundtrip_and_digest(tmp_path):
    cfg = small_config()
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.from_file(p)
    assert back.digest() == cfg.digest()
    assert small_config(seed=12).digest() != cfg.digest()


def test_seed_scheme_is_keyed():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert len({derive_seed(0, 1, 2), derive_seed(0, 2, 1), derive_seed(1, 1, 2)}) == 3


# -------------------------------------------------------------- experiments

def test_single_cell_report():
    rep = run_experiment(small_config(techniques=["ola"], ratios=[1]))
    technique_cells = [k for k in rep.cells if k[1] != BASELINE]
    assert technique_cells == [("GNB", "ola", 1.0)]
    assert set(rep.cell("GNB", "ola", 1)) == set(METRIC_NAMES)
    assert (("GNB", BASELINE, 1.0)) in rep.cells
    assert not rep.failures


def test_well_separated_ola_is_accurate():
    cfg = small_config(techniques=["ola"], ratios=[1],
                       data={"source": "synthetic", "n_per_class": [400, 400], "d": 2,
                             "separation": 3.0},
                       pools=[{"name": "GNB", "kind": "bagging", "learner": "GNB", "M": 10}])
    rep = run_experiment(cfg)
    assert rep.cell("GNB", "ola", 1)["Acc"] > 0.9


def test_cells_complete_and_finite():
    cfg = small_config(pools=[{"name": "GNB", "kind": "bagging", "learner": "GNB", "M": 5},
                              {"name": "RF", "kind": "random_forest", "M": 3}])
    rep = run_experiment(cfg)
    assert not rep.failures
    n_tech = sum(1 for k in rep.cells if k[1] != BASELINE)
    assert n_tech == 2 * len(TECHNIQUES) * 2
    assert all(np.isfinite(v) for m in rep.cells.values() for v in m.values())


def test_same_seed_same_report():
    a = run_experiment(small_config(), timestamp="t")
    b = run_experiment(small_config(), timestamp="t")
    assert a.to_dict() == b.to_dict()


def test_failures_are_recorded_not_fatal():
    # ratio 9 exceeds the available majority: that job fails, ratio 1 survives
    rep = run_experiment(small_config(ratios=[1, 9], techniques=["ola", "knorau"]))
    assert {f["ratio"] for f in rep.failures} == {9.0}
    assert ("GNB", "ola", 1.0) in rep.cells
    assert all(f["stage"] == "pool" for f in rep.failures)


def test_metades_failure_isolated():
    cfg = small_config(techniques=["ola", "metades"], ratios=[1],
                       ds={"hc": 0.0})  # no sample can have consensus below 0
    rep = run_experiment(cfg)
    assert [(f["technique"], f["stage"]) for f in rep.failures] == [("metades", "fit")]
    assert ("GNB", "ola", 1.0) in rep.cells


def test_report_persistence(tmp_path):
    rep = run_experiment(small_config(techniques=["ola", "rank", "desp"]), timestamp="t")
    back = EvaluationReport.load(rep.save(tmp_path / "r.json"))
    assert back.to_dict() == rep.to_dict()
    assert back.metadata["hmeasure_beta"] == [2.0, 2.0]
    assert back.metadata["seed"] == 11


# ----------------------------------------------------------------- summaries

def test_rank_by_f1_ties():
    ranked = rank_by_f1(fake_report([0.3, 0.2, 0.2, 0.1]), 1)
    assert [r for _, _, r in ranked] == [1, 2, 2, 4]
    assert ranked[0][0] == "P_t0"


def test_rank_by_f1_trivial():
    assert [r for *_, r in rank_by_f1(fake_report([0.4]), 1)] == [1]
    assert [r for *_, r in rank_by_f1(fake_report([0.4] * 3), 1)] == [1, 1, 1]
    with pytest.raises(KeyError):
        rank_by_f1(fake_report([0.4]), 2)


def test_top3_average():
    assert top3_average(fake_report([0.5, 0.4, 0.3, 0.1], "G-mean"), "P", 1)["G-mean"] \
        == pytest.approx(0.4)
    brier = fake_report([0.12, 0.13, 0.14, 0.5], "Brier score")
    assert top3_average(brier, "P", 1)["Brier score"] == pytest.approx(0.13)
    assert top3_average(fake_report([0.1, 0.2, 0.6], "AUC"), "P", 1)["AUC"] == pytest.approx(0.3)
    with pytest.raises(ValueError):
        top3_average(fake_report([0.1, 0.2]), "P", 1)


def test_top3_ignores_baseline():
    rep = fake_report([0.9, 0.1, 0.1, 0.1], "G-mean", techniques=[BASELINE, "a", "b", "c"])
    rep = EvaluationReport(rep.cells, rep.pools, ("a", "b", "c"), rep.ratios)
    assert top3_average(rep, "P", 1)["G-mean"] == pytest.approx(0.1)


def full_fake_report():
    rng = np.random.default_rng(0)
    ratios = (1.0, 2.0, 3.0, 4.0, 5.0, 5.8)
    cells = {("GNB", t, r): {m: float(rng.random()) for m in METRIC_NAMES}
             for t in (BASELINE, *TECHNIQUES) for r in ratios}
    return EvaluationReport(cells, ("GNB",), TECHNIQUES, ratios)


def test_table_shape():
    header, rows = pool_table(full_fake_report(), "GNB")
    assert len(rows) == 36
    assert header[:3] == ["Imbalance Ratio", "Evaluation measure", BASELINE]
    assert len(header) == 3 + len(TECHNIQUES)
    assert rows[-1][:2] == ["5.8", "Brier score"]


def test_csv_and_markdown_agree(tmp_path):
    rep = full_fake_report()
    csv_paths = emit_report(rep, tmp_path / "c", "csv")
    md_paths = emit_report(rep, tmp_path / "m", "markdown")
    assert [p.stem for p in csv_paths] == [p.stem for p in md_paths]
    for c, m in zip(csv_paths, md_paths):
        csv_cells = [line.split(",") for line in c.read_text().splitlines()]
        md_lines = [line for i, line in enumerate(m.read_text().splitlines()) if i != 1]
        md_cells = [[x.strip() for x in line.strip("|").split("|")] for line in md_lines]
        assert csv_cells == md_cells


def test_emit_is_bit_stable(tmp_path):
    rep = full_fake_report()
    a = [p.read_bytes() for p in emit_report(rep, tmp_path / "a")]
    b = [p.read_bytes() for p in emit_report(EvaluationReport.from_dict(rep.to_dict()),
                                             tmp_path / "b")]
    assert a == b


def test_emit_rejects_empty(tmp_path):
    rep = EvaluationReport({}, ("P",), (), (1.0,))
    with pytest.raises(ValueError):
        emit_report(rep, tmp_path)


def test_emit_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(full_fake_report(), blocker / "sub")


def test_csv_data_source(tmp_path):
    rows = ["loan_amnt,int_rate,grade,issue_d,loan_status"]
    rng = np.random.default_rng(0)
    for i in range(400):
        bad = i % 4 == 0
        year = 2015 if i < 300 else 2016
        amt = rng.normal(15000 if bad else 10000, 3000)
        rows.append(f"{amt:.0f},{rng.uniform(5, 25):.2f}%,{'AB'[i % 2]},"
                    f"Jan-{year},{'Charged Off' if bad else 'Fully Paid'}")
    rows.append("5000,10%,A,Jan-2015,Current")
    path = tmp_path / "loans.csv"
    path.write_text("\n".join(rows) + "\n")
    cfg = ExperimentConfig.from_dict({
        "data": {"source": "csv", "path": str(path)},
        "pools": [{"name": "GNB", "kind": "bagging", "learner": "GNB", "M": 3}],
        "techniques": ["ola", "knorae", "knorau"], "ratios": [1, 3]})
    rep = run_experiment(cfg)
    assert rep.metadata["n_train"] == 300 and rep.metadata["n_test"] == 100
    assert not rep.failures
    assert rep.metadata["train_class_counts"] == [225, 75]
