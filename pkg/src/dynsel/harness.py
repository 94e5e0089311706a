"""Experiment grid: (pool x technique x imbalance ratio) cells, reports and rankings.

Seeds
-----
Every random stage draws its seed from ``SeedSequence(master_seed,
spawn_key=(stage, ...))`` where the key also names the imbalance ratio (in
thousandths) and the pool (CRC-32 of its name). A cell's numbers therefore
depend only on the config and master seed, never on which other cells run
or in what order.
"""
from __future__ import annotations

import concurrent.futures as cf
import csv
import datetime as _dt
import hashlib
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data as D
from .dstech import (TECHNIQUES, DsConfig, QueryBatch, classify_batch, fit_clusters,
                     fit_metades, fit_state)
from .learners import LearnerConfig
from .metrics import LOWER_IS_BETTER, METRIC_NAMES, evaluate
from .pool import Pool, fit_bagging, fit_heterogeneous, fit_random_forest

logger = logging.getLogger(__name__)

BASELINE = "pool"

STAGE_GENERATE, STAGE_SPLIT, STAGE_UNDERSAMPLE, STAGE_DSEL, STAGE_POOL, STAGE_DS = range(6)


class ConfigError(ValueError):
    pass


def derive_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


def ratio_key(ratio: float) -> int:
    return int(round(ratio * 1000))


def pool_key(name: str) -> int:
    return zlib.crc32(name.encode())


def format_ratio(ratio: float) -> str:
    return f"{ratio:g}"


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class DataSpec:
    source: str = "synthetic"
    # synthetic: class counts (negative, positive) before the train/test split
    n_per_class: tuple[int, int] = (7250, 1250)
    d: int = 10
    separation: float = 1.5
    test_fraction: float = 0.24
    # csv
    path: str | None = None
    preprocess: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data source must be 'synthetic' or 'csv', got {self.source!r}")
        if self.source == "csv" and not self.path:
            raise ConfigError("csv data source needs a path")
        self.n_per_class = tuple(int(v) for v in self.n_per_class)


@dataclass
class PoolSpec:
    name: str
    kind: str = "bagging"          # bagging | random_forest | heterogeneous
    learner: str | None = None     # bagging only
    M: int = 10
    features_per_split: int | None = None
    members: dict[str, int] = field(default_factory=dict)   # heterogeneous only
    learner_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("bagging", "random_forest", "heterogeneous"):
            raise ConfigError(f"pool {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "bagging" and not self.learner:
            raise ConfigError(f"pool {self.name!r}: bagging needs a learner")
        if self.kind == "heterogeneous" and len(self.members) < 2:
            raise ConfigError(f"pool {self.name!r}: heterogeneous needs >= 2 member kinds")

    def learner_config(self, kind: str | None = None) -> LearnerConfig:
        opts = self.learner_options
        if kind is not None and kind in opts and isinstance(opts[kind], dict):
            opts = opts[kind]
        elif kind is not None:
            opts = {k: v for k, v in opts.items() if not isinstance(v, dict)}
        return LearnerConfig.from_dict(opts)

    def build(self, train: D.Dataset, seed: int) -> Pool:
        if self.kind == "bagging":
            return fit_bagging(self.learner, self.learner_config(), train, self.M, seed)
        if self.kind == "random_forest":
            cfg = self.learner_config() if self.learner_options else None
            return fit_random_forest(train, self.M, self.features_per_split, seed, cfg)
        configs = {k: (self.learner_config(k), int(n)) for k, n in self.members.items()}
        return fit_heterogeneous(train, configs, seed)


@dataclass
class ExperimentConfig:
    data: DataSpec
    pools: list[PoolSpec]
    techniques: tuple[str, ...] = TECHNIQUES
    ds: DsConfig = field(default_factory=DsConfig)
    ratios: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 5.8)
    dsel_fraction: float = 0.25
    hmeasure_a: float = 2.0
    hmeasure_b: float = 2.0
    seed: int = 0
    out_dir: str = "results"
    n_jobs: int = 1

    def __post_init__(self):
        if not self.pools:
            raise ConfigError("at least one pool is required")
        if not self.techniques:
            raise ConfigError("at least one technique is required")
        unknown = [t for t in self.techniques if t not in TECHNIQUES]
        if unknown:
            raise ConfigError(f"unknown techniques {unknown}; expected {TECHNIQUES}")
        names = [p.name for p in self.pools]
        if len(set(names)) != len(names):
            raise ConfigError(f"pool names must be unique, got {names}")
        D.ImbalancePlan(tuple(self.ratios))
        self.techniques = tuple(self.techniques)
        self.ratios = tuple(float(r) for r in self.ratios)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            data = DataSpec(**d.pop("data", {}))
            pools = [PoolSpec(**p) for p in d.pop("pools", [])]
            ds = DsConfig(**d.pop("ds", {}))
            return cls(data=data, pools=pools, ds=ds, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["techniques"] = list(self.techniques)
        d["ratios"] = list(self.ratios)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Data


def load_experiment_data(config: ExperimentConfig) -> tuple[D.Dataset, D.Dataset]:
    spec = config.data
    if spec.source == "synthetic":
        ds = D.synth_generate(spec.n_per_class, spec.d, spec.separation,
                              derive_seed(config.seed, STAGE_GENERATE))
        return D.random_split(ds, spec.test_fraction, derive_seed(config.seed, STAGE_SPLIT))
    pcfg = D.PreprocessConfig.from_dict(spec.preprocess)
    raw = D.filter_target_rows(D.load_csv(spec.path), pcfg)
    if not pcfg.date_column or not pcfg.boundary:
        raise ConfigError("csv experiments need preprocess.date_column and boundary")
    dates = np.array([D.parse_date(c) for c in raw.column(pcfg.date_column)],
                     dtype="datetime64[D]")
    boundary = np.datetime64(pcfg.boundary, "D")
    train_rows = np.flatnonzero(dates <= boundary)
    test_rows = np.flatnonzero(dates > boundary)
    if train_rows.size == 0 or test_rows.size == 0:
        side = "train" if train_rows.size == 0 else "test"
        raise D.DataError(f"temporal split leaves the {side} partition empty")
    train_raw, test_raw = raw.take(train_rows), raw.take(test_rows)
    prep = D.Preprocessor(pcfg).fit(train_raw)
    train, test = prep.transform(train_raw), prep.transform(test_raw)
    train = D.Dataset(train.X, train.y, train.feature_names, train_rows, train.metadata)
    test = D.Dataset(test.X, test.y, test.feature_names, test_rows, test.metadata)
    return train, test


# ---------------------------------------------------------------------------
# Report


@dataclass
class EvaluationReport:
    cells: dict[tuple[str, str, float], dict[str, float]]
    pools: tuple[str, ...]
    techniques: tuple[str, ...]
    ratios: tuple[float, ...]
    failures: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def cell(self, pool: str, technique: str, ratio: float) -> dict[str, float]:
        return self.cells[(pool, technique, float(ratio))]

    def to_dict(self) -> dict:
        return {
            "pools": list(self.pools), "techniques": list(self.techniques),
            "ratios": list(self.ratios),
            "cells": [{"pool": p, "technique": t, "ratio": r, "metrics": m}
                      for (p, t, r), m in sorted(self.cells.items(),
                                                 key=lambda kv: self._order(kv[0]))],
            "failures": self.failures, "metadata": self.metadata,
        }

    def _order(self, key):
        p, t, r = key
        cols = (BASELINE, *self.techniques)
        return (self.pools.index(p), self.ratios.index(r), cols.index(t))

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        cells = {(c["pool"], c["technique"], float(c["ratio"])): c["metrics"] for c in d["cells"]}
        return cls(cells, tuple(d["pools"]), tuple(d["techniques"]),
                   tuple(float(r) for r in d["ratios"]), d.get("failures", []),
                   d.get("metadata", {}))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _run_job(payload):
    """One (ratio, pool) job: returns cells and failures for every column."""
    config, train, test, ratio, spec = payload
    seed = config.seed
    rk, pk = ratio_key(ratio), pool_key(spec.name)
    columns = (BASELINE, *config.techniques)
    cells, failures = {}, []

    def fail(tech, stage, exc):
        failures.append({"pool": spec.name, "technique": tech, "ratio": ratio,
                         "stage": stage, "error": f"{type(exc).__name__}: {exc}"})

    try:
        sub = D.undersample_to_ratio(train, ratio, derive_seed(seed, STAGE_UNDERSAMPLE, rk))
        pool_train, dsel = D.dsel_split(sub, D.SplitSpec(config.dsel_fraction,
                                                         derive_seed(seed, STAGE_DSEL, rk)))
        pool = spec.build(pool_train, derive_seed(seed, STAGE_POOL, rk, pk))
    except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
        for t in columns:
            fail(t, "pool", exc)
        return cells, failures

    a, b = config.hmeasure_a, config.hmeasure_b
    try:
        cells[BASELINE] = evaluate(test.y, pool.predict(test.X),
                                   pool.predict_proba(test.X)[:, 1], a, b)
    except Exception as exc:  # noqa: BLE001
        fail(BASELINE, "evaluate", exc)

    ds_seed = derive_seed(seed, STAGE_DS, rk, pk)
    try:
        state = fit_state(pool, dsel, config.ds, [], ds_seed)
    except Exception as exc:  # noqa: BLE001
        for t in config.techniques:
            fail(t, "fit", exc)
        return cells, failures
    usable = list(config.techniques)
    clusters = meta = None
    if "descluster" in usable:
        try:
            clusters = fit_clusters(state.cache, config.ds, ds_seed)
        except Exception as exc:  # noqa: BLE001
            fail("descluster", "fit", exc)
            usable.remove("descluster")
    if "metades" in usable:
        try:
            meta = fit_metades(pool, state.cache, dsel, config.ds, ds_seed)
        except Exception as exc:  # noqa: BLE001
            fail("metades", "fit", exc)
            usable.remove("metades")
    state = replace(state, clusters=clusters, metades=meta)
    try:
        batch = QueryBatch(state, test.X)
    except Exception as exc:  # noqa: BLE001
        for t in usable:
            fail(t, "classify", exc)
        usable = []
    for t in usable:
        try:
            labels, proba = classify_batch(t, state, test.X, batch)
            cells[t] = evaluate(test.y, labels, proba[:, 1], a, b)
        except Exception as exc:  # noqa: BLE001
            fail(t, "classify", exc)
    for t, m in cells.items():
        bad = [k for k, v in m.items() if not np.isfinite(v)]
        if bad:
            fail(t, "evaluate", ValueError(f"non-finite metrics {bad}"))
    cells = {t: m for t, m in cells.items()
             if all(np.isfinite(v) for v in m.values())}
    return cells, failures


def run_experiment(config: ExperimentConfig, data: tuple[D.Dataset, D.Dataset] | None = None,
                   timestamp: str | None = None) -> EvaluationReport:
    """Run every (ratio, pool) job and evaluate the static pool plus each technique
    on the full test set."""
    train, test = data if data is not None else load_experiment_data(config)
    jobs = [(config, train, test, r, spec) for r in config.ratios for spec in config.pools]
    if config.n_jobs > 1:
        with cf.ProcessPoolExecutor(max_workers=config.n_jobs) as ex:
            results = list(ex.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    cells, failures = {}, []
    for (_, _, _, r, spec), (c, f) in zip(jobs, results):
        for t, m in c.items():
            cells[(spec.name, t, r)] = m
        failures.extend(f)
    meta = {
        "seed": config.seed, "config_hash": config.digest(),
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "hmeasure_beta": [config.hmeasure_a, config.hmeasure_b],
        "n_train": len(train), "n_test": len(test),
        "train_class_counts": list(train.class_counts()),
    }
    return EvaluationReport(cells, tuple(p.name for p in config.pools), config.techniques,
                            config.ratios, failures, meta)


# ---------------------------------------------------------------------------
# Summaries


def rank_by_f1(report: EvaluationReport, ratio: float) -> list[tuple[str, float, int]]:
    """Every ``pool_technique`` entry at ``ratio`` by descending F1.

    F1 is compared at table precision (4 decimals); equal values share the
    best rank and the next distinct value skips ahead (1, 2, 2, 4).
    """
    ratio = float(ratio)
    if ratio not in report.ratios:
        raise KeyError(f"ratio {ratio} not in report (have {report.ratios})")
    entries = [(f"{p}_{t}", round(m["F1"], 4))
               for (p, t, r), m in report.cells.items() if r == ratio]
    entries.sort(key=lambda e: (-e[1], e[0]))
    out = []
    for i, (tag, v) in enumerate(entries):
        rank = out[-1][2] if out and out[-1][1] == v else i + 1
        out.append((tag, v, rank))
    return out


def top3_average(report: EvaluationReport, pool: str, ratio: float) -> dict[str, float]:
    """Mean of the three most favourable technique values per metric (baseline excluded)."""
    ratio = float(ratio)
    cells = [m for (p, t, r), m in report.cells.items()
             if p == pool and r == ratio and t != BASELINE]
    if len(cells) < 3:
        raise ValueError(f"need >= 3 techniques for pool {pool!r} at ratio {ratio}, "
                         f"have {len(cells)}")
    out = {}
    for name in METRIC_NAMES:
        vals = sorted(m[name] for m in cells)
        best = vals[:3] if name in LOWER_IS_BETTER else vals[-3:]
        out[name] = float(np.mean(best))
    return out


def _fmt(v) -> str:
    return "" if v is None else f"{v:.4f}"


def pool_table(report: EvaluationReport, pool: str) -> tuple[list[str], list[list[str]]]:
    header = ["Imbalance Ratio", "Evaluation measure", BASELINE, *report.techniques]
    rows = []
    for r in sorted(report.ratios):
        for metric in METRIC_NAMES:
            row = [format_ratio(r), metric]
            for t in (BASELINE, *report.techniques):
                m = report.cells.get((pool, t, r))
                row.append(_fmt(None if m is None else m[metric]))
            rows.append(row)
    return header, rows


def _write_table(path: Path, header, rows, fmt):
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    elif fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or markdown")


def emit_report(report: EvaluationReport, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    """One table per pool (rows = ratio x metric, columns = baseline + techniques),
    plus F1 rankings and top-3 summaries."""
    if not report.techniques or not report.cells:
        raise ValueError("cannot emit an empty report")
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown format {fmt!r}; expected csv or markdown")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "md"
    paths = []
    for pool in report.pools:
        header, rows = pool_table(report, pool)
        p = out / f"table_{pool}.{ext}"
        _write_table(p, header, rows, fmt)
        paths.append(p)
    rank_rows = []
    for r in sorted(report.ratios):
        for tag, v, rank in rank_by_f1(report, r):
            rank_rows.append([format_ratio(r), tag, _fmt(v), str(rank)])
    p = out / f"ranking_f1.{ext}"
    _write_table(p, ["Imbalance Ratio", "Classifier", "F1 measure", "Rank"], rank_rows, fmt)
    paths.append(p)
    top_rows = []
    for pool in report.pools:
        for r in sorted(report.ratios):
            try:
                avg = top3_average(report, pool, r)
            except ValueError:
                continue
            for metric in METRIC_NAMES:
                base = report.cells.get((pool, BASELINE, r))
                top_rows.append([pool, format_ratio(r), metric,
                                 _fmt(None if base is None else base[metric]),
                                 _fmt(avg[metric])])
    if top_rows:
        p = out / f"top3_summary.{ext}"
        _write_table(p, ["Classifier", "Imbalance Ratio", "Evaluation measure",
                         "Classifiers pool", "Average top 3 DS techniques"], top_rows, fmt)
        paths.append(p)
    return paths
