"""Command line entry point: ``dynsel {prepare,train,sweep,report}``.

Exit codes: 0 success, 1 configuration error, 2 sweep finished with failed cells.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import data as D
from .harness import (STAGE_DSEL, STAGE_POOL, STAGE_UNDERSAMPLE, ConfigError,
                      EvaluationReport, ExperimentConfig, derive_seed, emit_report,
                      format_ratio, load_experiment_data, pool_key, ratio_key,
                      run_experiment)
from .pool import save_pool

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2
REPORT_FILE = "report.json"

log = logging.getLogger("dynsel")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--ratios", type=_float_list, help="e.g. 1,2,3,4,5,5.8")
    common.add_argument("--techniques", type=_str_list, help="e.g. ola,knorae,metades")
    common.add_argument("--format", choices=("csv", "markdown"), default="csv")
    common.add_argument("--jobs", type=int, help="worker processes for the sweep")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dynsel", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common],
                   help="load, preprocess and split the data; write train/test CSVs")
    sub.add_parser("train", parents=[common], help="fit every pool at every ratio")
    sub.add_parser("sweep", parents=[common], help="run the full grid and write tables")
    rep = sub.add_parser("report", parents=[common],
                         help="write tables, rankings and top-3 summaries from a saved run")
    rep.add_argument("--report", type=Path, help=f"saved run (default OUT/{REPORT_FILE})")
    return p


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.from_file(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    if args.ratios is not None:
        changes["ratios"] = args.ratios
    if args.techniques is not None:
        changes["techniques"] = args.techniques
    if args.jobs is not None:
        changes["n_jobs"] = args.jobs
    return replace(cfg, **changes) if changes else cfg


def cmd_prepare(args) -> int:
    cfg = _load_config(args)
    train, test = load_experiment_data(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train", train), ("test", test)):
        path = D.save_dataset(ds, out / f"{name}.csv")
        log.info("wrote %s (%d rows, class counts %s)", path, len(ds), ds.class_counts())
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train, _ = load_experiment_data(cfg)
    out = Path(cfg.out_dir) / "pools"
    out.mkdir(parents=True, exist_ok=True)
    for r in cfg.ratios:
        rk = ratio_key(r)
        sub = D.undersample_to_ratio(train, r, derive_seed(cfg.seed, STAGE_UNDERSAMPLE, rk))
        pool_train, _ = D.dsel_split(sub, D.SplitSpec(cfg.dsel_fraction,
                                                      derive_seed(cfg.seed, STAGE_DSEL, rk)))
        for spec in cfg.pools:
            pool = spec.build(pool_train, derive_seed(cfg.seed, STAGE_POOL, rk, pool_key(spec.name)))
            path = out / f"{spec.name}_ir{format_ratio(r)}.json"
            save_pool(pool, path)
            log.info("wrote %s (%d members)", path, len(pool))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / REPORT_FILE)
    for path in emit_report(report, out, args.format):
        log.info("wrote %s", path)
    for f in report.failures:
        log.warning("failed cell %s/%s at ratio %s (%s): %s",
                    f["pool"], f["technique"], f["ratio"], f["stage"], f["error"])
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_report(args) -> int:
    out = args.out
    if out is None and args.config is not None:
        out = Path(_load_config(args).out_dir)
    path = args.report or (out / REPORT_FILE if out else None)
    if path is None:
        raise ConfigError("give --report or --out (or --config) to locate the saved run")
    try:
        report = EvaluationReport.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from None
    for p in emit_report(report, out or Path(path).parent, args.format):
        log.info("wrote %s", p)
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"dynsel: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, D.DataError) as exc:
        # invalid values inside an otherwise readable config (ratios, K, ...)
        print(f"dynsel: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
