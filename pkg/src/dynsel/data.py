"""Credit data ingestion, preprocessing, splitting and under-sampling.

The CSV path follows the Lending Club layout: a ``loan_status`` target where
"Charged Off" loans are the positive (bad) class and "Fully Paid" loans the
negative class. A synthetic two-Gaussian generator stands in when the real
extract is not available.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "NA", "null"})
MISSING_CATEGORY = "MISSING"
# ratios are quoted to one decimal, e.g. 5.8 for an observed 5.7986
RATIO_DISPLAY_TOLERANCE = 0.05

# Raw Lending Club columns behind the final variable list; the two FICO bounds
# collapse into ``average_fico``.
LENDING_CLUB_FEATURES = (
    "loan_amnt", "acc_now_delinq", "int_rate", "installment", "annual_inc",
    "emp_length", "verification_status", "dti", "delinq_2yrs",
    "fico_range_low", "fico_range_high", "inq_last_6mths", "open_acc",
    "pub_rec", "revol_util", "total_acc", "chargeoff_within_12_mths",
    "delinq_amnt", "mort_acc", "pub_rec_bankruptcies", "tax_liens", "grade",
    "sub_grade", "home_ownership", "purpose", "initial_list_status",
)


class DataError(ValueError):
    """Base class for ingestion and splitting failures."""


class CSVParseError(DataError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class SchemaError(DataError):
    def __init__(self, column: str, message: str | None = None):
        super().__init__(message or f"missing required column {column!r}")
        self.column = column


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------------------
# Types


@dataclass(frozen=True)
class RawTable:
    columns: list[str]
    rows: list[list[str]]
    missing: frozenset[str] = MISSING_TOKENS

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            dup = sorted({c for c in self.columns if self.columns.count(c) > 1})
            raise SchemaError(dup[0], f"duplicate column names: {dup}")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise CSVParseError(i + 2, f"expected {width} cells, found {len(row)}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    def column(self, name: str) -> list[str]:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise SchemaError(name) from None
        return [row[j] for row in self.rows]

    def take(self, rows: Iterable[int]) -> "RawTable":
        return RawTable(list(self.columns), [self.rows[i] for i in rows], self.missing)

    def is_missing(self, cell: str) -> bool:
        return cell.strip() in self.missing


@dataclass(frozen=True)
class Dataset:
    """Post-preprocessing numeric data.

    ``X`` holds features in [0, 1], ``y`` binary labels (1 = charged off / bad
    customer). ``index`` keeps the row ids of the dataset this one was cut
    from so subsets can be traced back.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    index: np.ndarray = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise DataError(f"dataset needs n >= 1 and d >= 1, got {X.shape}")
        if y.shape != (n,):
            raise DataError(f"labels shape {y.shape} does not match {n} rows")
        if not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if not np.isfinite(X).all():
            raise DataError("features contain missing or non-finite values")
        names = tuple(self.feature_names)
        if len(names) != d:
            raise DataError(f"{len(names)} feature names for {d} columns")
        index = np.arange(n) if self.index is None else np.asarray(self.index, dtype=np.int64)
        for arr in (X, y, index):
            arr.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> tuple[int, int]:
        c = np.bincount(self.y, minlength=2)
        return int(c[0]), int(c[1])

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.X[rows], self.y[rows], self.feature_names,
                       self.index[rows], dict(self.metadata))


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.25
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise DataError(f"split fraction must be in (0, 1), got {self.fraction}")


@dataclass(frozen=True)
class ImbalancePlan:
    ratios: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 5.8)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        bad = [r for r in self.ratios if not r >= 1.0]
        if bad:
            raise DataError(f"imbalance ratios must be >= 1, got {bad}")


@dataclass
class PreprocessConfig:
    """Keys accepted in a preprocessing config file."""

    target_column: str = "loan_status"
    date_column: str | None = "issue_d"
    boundary: str | None = "2015-12-31"
    drop_threshold: float = 0.5
    dsel_fraction: float = 0.25
    seed: int = 0
    features: list[str] | None = None
    categorical: list[str] | None = None
    positive_labels: list[str] = field(default_factory=lambda: ["Charged Off"])
    negative_labels: list[str] = field(default_factory=lambda: ["Fully Paid"])
    filters: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown preprocessing keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "PreprocessConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Ingestion


def load_csv(path: str | Path, schema: Sequence[str] | None = None,
             missing: Iterable[str] = MISSING_TOKENS) -> RawTable:
    """Read an RFC-4180 CSV with a header row.

    Raises `CSVParseError` (with the 1-based file row) on malformed quoting or
    ragged rows and `SchemaError` when a column of ``schema`` is absent.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(1, "empty file, header row expected") from None
        except csv.Error as exc:
            raise CSVParseError(reader.line_num, str(exc)) from None
        rows = []
        width = len(header)
        while True:
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error as exc:
                raise CSVParseError(reader.line_num, str(exc)) from None
            if not row:
                continue
            if len(row) != width:
                raise CSVParseError(reader.line_num,
                                    f"expected {width} cells, found {len(row)}")
            rows.append(row)
    for col in schema or ():
        if col not in header:
            raise SchemaError(col)
    return RawTable(header, rows, frozenset(missing))


def _parse_float(cell: str) -> float:
    s = cell.strip()
    if s.endswith("%"):
        s = s[:-1]
    return float(s)


def _is_numeric(values: Iterable[str]) -> bool:
    try:
        for v in values:
            _parse_float(v)
    except ValueError:
        return False
    return True


_DATE_FORMATS = ("%Y-%m-%d", "%b-%Y", "%Y-%m", "%m/%d/%Y")


def parse_date(cell: str) -> _dt.date:
    s = cell.strip()
    for fmt in _DATE_FORMATS:
        try:
            return _dt.datetime.strptime(s, fmt).date()
        except ValueError:
            continue
    raise DataError(f"unrecognised date {cell!r}")


def filter_target_rows(raw: RawTable, config: PreprocessConfig) -> RawTable:
    """Keep rows with a known target status that pass the column filters."""
    if config.target_column not in raw.columns:
        raise SchemaError(config.target_column)
    known = set(config.positive_labels) | set(config.negative_labels)
    tj = raw.columns.index(config.target_column)
    checks = []
    for col, allowed in config.filters.items():
        if col not in raw.columns:
            raise SchemaError(col)
        checks.append((raw.columns.index(col), {a.strip() for a in allowed}))
    keep = [i for i, row in enumerate(raw.rows)
            if row[tj].strip() in known
            and all(row[j].strip() in allowed for j, allowed in checks)]
    return raw.take(keep)


class Preprocessor:
    """Learns imputation, scaling and encoding statistics on one partition.

    `fit` decides which columns survive the missingness filter, which are
    continuous, and their means / ranges / category levels; `transform`
    applies them, clipping out-of-range continuous values into [0, 1].
    """

    def __init__(self, config: PreprocessConfig | None = None):
        self.config = config or PreprocessConfig()
        self.continuous: list[str] = []
        self.categorical: list[str] = []
        self.means: dict[str, float] = {}
        self.ranges: dict[str, tuple[float, float]] = {}
        self.levels: dict[str, list[str]] = {}
        self.dropped: list[str] = []
        self.warnings: list[str] = []

    # column values after fico averaging, as strings
    def _columns(self, raw: RawTable) -> dict[str, list[str]]:
        cfg = self.config
        excluded = {cfg.target_column, cfg.date_column}
        names = cfg.features if cfg.features is not None else [
            c for c in raw.columns if c not in excluded]
        for c in names:
            if c not in raw.columns:
                raise SchemaError(c)
        cols = {c: raw.column(c) for c in names}
        if "fico_range_low" in cols and "fico_range_high" in cols:
            lo, hi = cols.pop("fico_range_low"), cols.pop("fico_range_high")
            avg = []
            for a, b in zip(lo, hi):
                if raw.is_missing(a) or raw.is_missing(b):
                    avg.append("")
                else:
                    avg.append(repr((_parse_float(a) + _parse_float(b)) / 2.0))
            cols["average_fico"] = avg
        return cols

    def fit(self, raw: RawTable) -> "Preprocessor":
        cfg = self.config
        raw = filter_target_rows(raw, cfg)
        if raw.n_rows == 0:
            raise DataError("no rows with a known target status")
        cols = self._columns(raw)
        forced_cat = set(cfg.categorical or ())
        n = raw.n_rows
        self.continuous, self.categorical, self.dropped, self.warnings = [], [], [], []
        for name, values in cols.items():
            present = [v for v in values if not raw.is_missing(v)]
            if n - len(present) > cfg.drop_threshold * n:
                self.dropped.append(name)
                continue
            if name not in forced_cat and present and _is_numeric(present):
                nums = np.array([_parse_float(v) for v in present])
                self.continuous.append(name)
                self.means[name] = float(nums.mean())
                lo, hi = float(nums.min()), float(nums.max())
                self.ranges[name] = (lo, hi)
                if hi == lo:
                    msg = f"column {name!r} is constant; mapped to zeros"
                    self.warnings.append(msg)
                    logger.warning(msg)
            else:
                self.categorical.append(name)
                levels = {v.strip() if not raw.is_missing(v) else MISSING_CATEGORY
                          for v in values}
                self.levels[name] = sorted(levels)
        if not self.continuous and not self.categorical:
            raise DataError("no feature column survives the missingness filter")
        return self

    @property
    def feature_names(self) -> tuple[str, ...]:
        names = list(self.continuous)
        for c in self.categorical:
            names.extend(f"{c}={lvl}" for lvl in self.levels[c])
        return tuple(names)

    def transform(self, raw: RawTable) -> Dataset:
        cfg = self.config
        raw = filter_target_rows(raw, cfg)
        if raw.n_rows == 0:
            raise DataError("no rows with a known target status")
        cols = self._columns(raw)
        blocks = []
        for name in self.continuous:
            mean = self.means[name]
            v = np.array([mean if raw.is_missing(c) else _parse_float(c)
                          for c in cols[name]])
            lo, hi = self.ranges[name]
            if hi == lo:
                v = np.zeros_like(v)
            else:
                v = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
            blocks.append(v[:, None])
        for name in self.categorical:
            levels = self.levels[name]
            pos = {lvl: j for j, lvl in enumerate(levels)}
            onehot = np.zeros((raw.n_rows, len(levels)))
            for i, c in enumerate(cols[name]):
                key = MISSING_CATEGORY if raw.is_missing(c) else c.strip()
                j = pos.get(key)
                if j is not None:
                    onehot[i, j] = 1.0
            blocks.append(onehot)
        X = np.hstack(blocks)
        positive = set(cfg.positive_labels)
        y = np.array([1 if s.strip() in positive else 0
                      for s in raw.column(cfg.target_column)])
        meta = {
            "scaling": {c: list(self.ranges[c]) for c in self.continuous},
            "label_map": {**{lbl: 1 for lbl in cfg.positive_labels},
                          **{lbl: 0 for lbl in cfg.negative_labels}},
            "dropped_columns": list(self.dropped),
            "warnings": list(self.warnings),
        }
        return Dataset(X, y, self.feature_names, metadata=meta)


def preprocess(raw: RawTable, config: PreprocessConfig | None = None) -> Dataset:
    """Fit-and-transform on a single table (statistics from ``raw`` itself)."""
    return Preprocessor(config).fit(raw).transform(raw)


# ---------------------------------------------------------------------------
# Splitting


def temporal_split(ds: Dataset, dates: Sequence, boundary) -> tuple[Dataset, Dataset]:
    """Rows dated on or before ``boundary`` go to train, later ones to test."""
    d = np.asarray(dates, dtype="datetime64[D]")
    if d.shape != (len(ds),):
        raise DataError(f"{d.shape[0]} dates for {len(ds)} rows")
    b = np.datetime64(boundary, "D")
    train_rows = np.flatnonzero(d <= b)
    test_rows = np.flatnonzero(d > b)
    if train_rows.size == 0:
        raise DataError("temporal split leaves the train partition empty")
    if test_rows.size == 0:
        raise DataError("temporal split leaves the test partition empty")
    return ds.subset(train_rows), ds.subset(test_rows)


def _holdout_indices(y: np.ndarray, fraction: float, rng: np.random.Generator,
                     stratified: bool) -> tuple[np.ndarray, np.ndarray]:
    n = y.shape[0]
    total = round_half_up(fraction * n)
    if not 0 < total < n:
        raise DataError(f"a {fraction:g} holdout of {n} rows leaves an empty partition")
    if not stratified:
        perm = rng.permutation(n)
        held = np.sort(perm[:total])
    else:
        classes = np.unique(y)
        for c in classes:
            if np.count_nonzero(y == c) < 2:
                raise DataError(f"class {c} has fewer than 2 samples; cannot stratify")
        quotas = np.array([fraction * np.count_nonzero(y == c) for c in classes])
        alloc = np.floor(quotas).astype(int)
        short = total - int(alloc.sum())
        # largest remainder, ties to the lower class
        order = np.argsort(-(quotas - alloc), kind="stable")
        alloc[order[:short]] += 1
        parts = []
        for c, k in zip(classes, alloc):
            members = np.flatnonzero(y == c)
            parts.append(rng.permutation(members)[:k])
        held = np.sort(np.concatenate(parts))
    mask = np.zeros(n, dtype=bool)
    mask[held] = True
    return np.flatnonzero(~mask), held


def dsel_split(train: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Hold out ``spec.fraction`` of ``train`` as the dynamic selection set.

    Returns ``(pool_train, dsel)``; both keep the original row order.
    """
    if len(train) < 4:
        raise DataError(f"need at least 4 training samples, got {len(train)}")
    if len(np.unique(train.y)) < 2:
        raise DataError("both classes must be present to split off a DSEL")
    rng = np.random.default_rng(spec.seed)
    keep, held = _holdout_indices(train.y, spec.fraction, rng, spec.stratified)
    return train.subset(keep), train.subset(held)


def random_split(ds: Dataset, test_fraction: float, seed: int,
                 stratified: bool = True) -> tuple[Dataset, Dataset]:
    """Seeded train/test split used in place of the temporal split for synthetic data."""
    rng = np.random.default_rng(seed)
    keep, held = _holdout_indices(ds.y, test_fraction, rng, stratified)
    return ds.subset(keep), ds.subset(held)


def imbalance_ratio(ds: Dataset) -> float:
    n0, n1 = ds.class_counts()
    lo, hi = min(n0, n1), max(n0, n1)
    return math.inf if lo == 0 else hi / lo


def undersample_to_ratio(train: Dataset, ratio: float, seed: int) -> Dataset:
    """Randomly drop majority rows until majority = round(ratio * minority).

    All minority rows are kept; row order is preserved. A ratio that matches
    the current one to one decimal (5.8 for 138372 / 23863) keeps every row
    even when ``round(ratio * minority)`` slightly exceeds the majority count.
    """
    if not ratio >= 1.0:
        raise DataError(f"imbalance ratio must be >= 1, got {ratio}")
    n0, n1 = train.class_counts()
    if min(n0, n1) == 0:
        raise DataError("under-sampling needs both classes present")
    majority = 0 if n0 >= n1 else 1
    n_min, n_maj = min(n0, n1), max(n0, n1)
    target = round_half_up(ratio * n_min)
    current = n_maj / n_min
    if target > n_maj and abs(ratio - current) <= RATIO_DISPLAY_TOLERANCE:
        # the requested ratio is the data's own ratio at one-decimal precision
        return train
    if target > n_maj:
        raise DataError(f"ratio {ratio} needs {target} majority samples but only "
                        f"{n_maj} exist (current ratio {n_maj / n_min:.4f}); "
                        "oversampling is not supported")
    rng = np.random.default_rng(seed)
    maj_rows = np.flatnonzero(train.y == majority)
    kept = rng.choice(maj_rows, size=target, replace=False)
    rows = np.sort(np.concatenate([np.flatnonzero(train.y != majority), kept]))
    return train.subset(rows)


def synth_generate(n_per_class: tuple[int, int], d: int, separation: float,
                   seed: int) -> Dataset:
    """Two unit-variance Gaussian clouds whose means are ``separation`` apart.

    The offset lies along a random unit direction; features are min-max
    scaled to [0, 1] and rows shuffled.
    """
    n0, n1 = (int(v) for v in n_per_class)
    if n0 < 1 or n1 < 1 or d < 1:
        raise DataError(f"need positive class counts and d, got {n_per_class}, {d}")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    X = rng.standard_normal((n0 + n1, d))
    X[n0:] += separation * direction
    y = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    perm = rng.permutation(n0 + n1)
    X, y = X[perm], y[perm]
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    X = (X - lo) / span
    names = tuple(f"x{j}" for j in range(d))
    meta = {"scaling": {n: [float(a), float(b)] for n, a, b in zip(names, lo, hi)},
            "label_map": {"bad": 1, "good": 0},
            "generator": {"n_per_class": [n0, n1], "d": d,
                          "separation": separation, "seed": seed}}
    return Dataset(X, y, names, metadata=meta)


# ---------------------------------------------------------------------------
# Persistence


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """Write features + label as CSV and a ``<name>.meta.json`` sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.feature_names, "label"])
        for row, label in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])
    meta = {"feature_names": list(ds.feature_names),
            "index": ds.index.tolist(), **ds.metadata}
    meta.setdefault("label_map", {"Charged Off": 1, "Fully Paid": 0})
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    raw = load_csv(path, schema=["label"])
    meta = json.loads(_sidecar(path).read_text())
    names = meta.pop("feature_names")
    index = meta.pop("index", None)
    if raw.columns[:-1] != names:
        raise SchemaError(raw.columns[0], "CSV header does not match sidecar feature names")
    X = np.array([[float(c) for c in row[:-1]] for row in raw.rows])
    y = np.array([int(row[-1]) for row in raw.rows])
    return Dataset(X, y, names, index, meta)


def with_metadata(ds: Dataset, **extra) -> Dataset:
    return replace(ds, metadata={**ds.metadata, **extra})
