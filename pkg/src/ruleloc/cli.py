"""Command-line front end.

Subcommands: train, localize, eval, export-fingerprints, parse-logs.
Inputs are RFC-4180 CSV files with a header row; every JSON output
carries schema_version and tool_version.  Errors print one
machine-parseable "category: message" line on stderr and exit non-zero;
localize exits 0 when any rule fired and 3 on a no-signal window.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from ruleloc import SCHEMA_VERSION, __version__
from ruleloc.binarize import (
    CATEGORICAL,
    DEFAULT_BINS,
    NUMERIC,
    FeatureSpec,
    SchemaError,
    fit,
    row_feature_masks,
    transform,
)
from ruleloc.core import InvalidDatasetError
from ruleloc.evaluate import IncidentCase, evaluate_cases
from ruleloc.generate import GenerationConfig
from ruleloc.localize import (
    FaultModel,
    QueryWindow,
    UnknownFaultTypeError,
    localization_report,
)
from ruleloc.logfeatures import (
    DEFAULT_DEPTH,
    DEFAULT_SIMILARITY,
    build_template_base,
    match_and_aggregate,
    parse_timestamp,
)
from ruleloc.select import SelectionConfig, select_rule_set

EXIT_OK = 0
EXIT_NO_SIGNAL = 3
EXIT_SCHEMA = 4
EXIT_INVALID_DATA = 5
EXIT_IO = 6

DEFAULTS = {
    "fault_type": "fault_type",
    "service": "service",
    "timestamp": "timestamp",
    "normal_label": "normal",
    "K": 4,
    "l": 6,
    "bins": DEFAULT_BINS,
    "gamma": 1.0,
    "interval": 60.0,
    "depth": DEFAULT_DEPTH,
    "similarity": DEFAULT_SIMILARITY,
}


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


def _fail(category: str, message: str, code: int) -> CliError:
    return CliError(category, message, code)


def read_csv_columns(path: str | Path) -> dict[str, list[str]]:
    """Read an RFC-4180 CSV with header into a column-oriented table."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise _fail("invalid-data", f"{path}: empty CSV", EXIT_INVALID_DATA)
            columns: dict[str, list[str]] = {name: [] for name in header}
            for row in reader:
                for name, value in zip(header, row):
                    columns[name].append(value)
                for name in header[len(row) :]:
                    columns[name].append("")
            return columns
    except OSError as exc:
        raise _fail("io-error", f"{path}: {exc}", EXIT_IO)


def write_csv_columns(path: str | Path, table: dict[str, list]) -> None:
    names = list(table)
    n = len(table[names[0]]) if names else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(n):
            writer.writerow([table[name][i] for name in names])


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise _fail("io-error", f"{path}: {exc}", EXIT_IO)
    except json.JSONDecodeError as exc:
        raise _fail("invalid-data", f"{path}: bad JSON config: {exc}", EXIT_INVALID_DATA)
    if cfg.get("schema_version") not in (None, SCHEMA_VERSION):
        raise _fail(
            "schema-error",
            f"{path}: unsupported config schema version",
            EXIT_SCHEMA,
        )
    return cfg


def _setting(args, cfg: dict, section: str, key: str, arg_name: Optional[str] = None):
    """Flag wins over config file wins over built-in default."""
    value = getattr(args, arg_name or key, None)
    if value is not None:
        return value
    sect = cfg.get(section, {})
    if key in sect:
        return sect[key]
    return DEFAULTS.get(key)


def _collect_log_lines(logs_dir: Path, stem: str) -> list[str]:
    """Lines of every file under logs_dir whose top-level name starts with stem.

    Both layouts work: logs/normal.log and logs/normal/anything.log.
    """
    lines: list[str] = []
    candidates = sorted(
        p
        for p in logs_dir.rglob("*")
        if p.is_file() and p.relative_to(logs_dir).parts[0].startswith(stem)
    )
    for path in candidates:
        lines.extend(path.read_text(encoding="utf-8").splitlines())
    return lines


def _log_feature_columns(
    table: dict[str, list[str]],
    timestamp_col: str,
    logs_dir: Path,
    interval: float,
    depth: int,
    sim: float,
    timestamp_format: Optional[str],
) -> None:
    """Join per-interval log novelty counters onto the metric table."""
    normal_lines = _collect_log_lines(logs_dir, "normal")
    online_lines = _collect_log_lines(logs_dir, "online")
    if not online_lines:
        warnings.warn(f"no online* log files under {logs_dir}; skipping log features")
        return
    base = build_template_base(normal_lines, depth=depth, sim=sim)
    frame = match_and_aggregate(base, online_lines, interval, timestamp_format)
    counters = frame.counters()
    if timestamp_col not in table:
        raise _fail(
            "schema-error",
            f"timestamp column {timestamp_col!r} required to join log features",
            EXIT_SCHEMA,
        )
    totals, unmatched, novel = [], [], []
    for raw in table[timestamp_col]:
        try:
            epoch = parse_timestamp(raw, timestamp_format)
        except ValueError:
            raise _fail(
                "invalid-data",
                f"unparseable timestamp {raw!r} in column {timestamp_col!r}",
                EXIT_INVALID_DATA,
            )
        start = (epoch // interval) * interval
        t, u, dnew = counters.get(start, (0, 0, 0))
        totals.append(t)
        unmatched.append(u)
        novel.append(dnew)
    table["log_total"] = totals
    table["log_unmatched"] = unmatched
    table["log_distinct_new"] = novel


def _feature_specs(
    table: dict[str, list[str]],
    role_columns: set[str],
    categorical: set[str],
    bins: int,
) -> list[FeatureSpec]:
    specs = []
    for name in table:
        if name in role_columns:
            continue
        kind = CATEGORICAL if name in categorical else NUMERIC
        specs.append(FeatureSpec(name, kind, bins if kind == NUMERIC else DEFAULT_BINS))
    return specs


def _dataset_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    fault_col = _setting(args, cfg, "columns", "fault_type", "fault_col")
    service_col = _setting(args, cfg, "columns", "service", "service_col")
    timestamp_col = _setting(args, cfg, "columns", "timestamp", "timestamp_col")
    normal_label = _setting(args, cfg, "columns", "normal_label")
    categorical = set(
        args.categorical.split(",")
        if args.categorical
        else cfg.get("columns", {}).get("categorical", [])
    )
    categorical.discard("")
    k = int(_setting(args, cfg, "training", "K", "K"))
    max_len = int(_setting(args, cfg, "training", "l", "l"))
    bins = int(_setting(args, cfg, "training", "bins"))
    gamma = float(_setting(args, cfg, "training", "gamma"))
    workers = args.workers or cfg.get("training", {}).get("workers") or os.cpu_count() or 1
    interval = float(_setting(args, cfg, "logs", "interval"))
    depth = int(_setting(args, cfg, "logs", "depth"))
    sim = float(_setting(args, cfg, "logs", "similarity"))
    ts_format = args.timestamp_format or cfg.get("logs", {}).get("timestamp_format")

    started = time.perf_counter()
    table = read_csv_columns(args.data)
    if fault_col not in table:
        raise _fail(
            "schema-error", f"fault-type column {fault_col!r} not in {args.data}", EXIT_SCHEMA
        )
    if args.logs:
        _log_feature_columns(
            table, timestamp_col, Path(args.logs), interval, depth, sim, ts_format
        )

    role_columns = {fault_col, service_col, timestamp_col}
    specs = _feature_specs(table, role_columns, categorical, bins)
    model_bin = fit(table, specs)

    fault_values = table[fault_col]
    negatives = {normal_label, ""}
    fault_types = sorted({v for v in fault_values if v not in negatives})
    declared = cfg.get("fault_types")
    if declared:
        for name in declared:
            if name not in fault_types:
                warnings.warn(f"fault type {name!r} has zero positive rows; skipped")
        fault_types = [t for t in fault_types if t in declared]
    if not fault_types:
        raise _fail(
            "invalid-data",
            f"no positive rows under any fault type in column {fault_col!r}",
            EXIT_INVALID_DATA,
        )

    sel = SelectionConfig(max_rules=k, gamma=gamma, max_len=max_len)
    gen = GenerationConfig(max_len=max_len)

    def train_one(fault_type: str):
        labels = [1 if v == fault_type else 0 for v in fault_values]
        dataset = transform(model_bin, table, labels)
        records: list = []
        mm_records: list = []
        rule_set = select_rule_set(
            dataset,
            sel,
            gen,
            trace=records.append if args.trace else None,
            gen_trace=mm_records.append if args.trace else None,
        )
        return fault_type, rule_set, (records, mm_records)

    results = {}
    if workers > 1 and len(fault_types) > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            for fault_type, rule_set, records in pool.map(train_one, fault_types):
                results[fault_type] = (rule_set, records)
    else:
        for fault_type in fault_types:
            fault_type, rule_set, records = train_one(fault_type)
            results[fault_type] = (rule_set, records)

    rule_sets = tuple((name, results[name][0]) for name in fault_types)
    model = FaultModel(
        rule_sets,
        model_bin,
        k,
        max_len,
        gamma,
        metadata={
            "dataset_sha256": _dataset_sha256(args.data),
            "config": {
                "K": k,
                "l": max_len,
                "bins": bins,
                "gamma": gamma,
                "fault_col": fault_col,
                "service_col": service_col,
                "timestamp_col": timestamp_col,
                "categorical": sorted(categorical),
                "seed": args.seed,
            },
        },
    )
    Path(args.model).write_text(model.to_json(), encoding="utf-8")
    elapsed = time.perf_counter() - started

    for name, rule_set in rule_sets:
        print(f"{name}: {len(rule_set)} rule(s)")
        for rule, stats in zip(rule_set.rules, rule_set.stats or ()):
            print(
                f"  {model.describe(rule)}"
                f"  [precision={stats.precision:.3f} recall={stats.recall:.3f}"
                f" covered={stats.covered}]"
            )
        if args.trace:
            selection_records, mm_records = results[name][1]
            for rec in selection_records:
                print(
                    f"trace: type={name} i={rec.iteration} alpha={rec.alpha:.6f}"
                    f" rule={None if rec.rule is None else rec.rule.features}"
                    f" accepted={rec.accepted} reason={rec.reason}",
                    file=sys.stderr,
                )
            for rec in mm_records:
                print(
                    f"trace: type={name} mm t={rec.iteration} branch={rec.branch}"
                    f" size={len(rec.rule.features)} V={rec.surrogate:.6g}"
                    f" W={rec.objective:.6g}",
                    file=sys.stderr,
                )
    print(f"trained {len(rule_sets)} fault type(s) in {elapsed:.2f} s")
    return EXIT_OK


def _load_model(path: str) -> FaultModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _fail("io-error", f"{path}: {exc}", EXIT_IO)
    try:
        return FaultModel.from_json(text)
    except (KeyError, ValueError) as exc:
        raise _fail("schema-error", f"{path}: {exc}", EXIT_SCHEMA)


def _window_from_table(
    model: FaultModel,
    table: dict[str, list[str]],
    service_col: str,
    timestamp_col: str = "timestamp",
) -> QueryWindow:
    if model.binarization is None:
        raise _fail(
            "schema-error", "model carries no binarization catalog", EXIT_SCHEMA
        )
    if service_col not in table:
        raise _fail(
            "schema-error",
            f"service column {service_col!r} missing from window",
            EXIT_SCHEMA,
        )
    try:
        masks = row_feature_masks(model.binarization, table)
    except SchemaError as exc:
        raise _fail("schema-error", str(exc), EXIT_SCHEMA)
    timestamps = tuple(table.get(timestamp_col, ()))
    return QueryWindow(tuple(masks), tuple(table[service_col]), timestamps)


def cmd_localize(args) -> int:
    cfg = _load_config(args.config)
    service_col = _setting(args, cfg, "columns", "service", "service_col")
    model = _load_model(args.model)
    table = read_csv_columns(args.data)
    window = _window_from_table(model, table, service_col)
    report = localization_report(model, window)
    payload = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return EXIT_NO_SIGNAL if report["no_signal"] else EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    service_col = _setting(args, cfg, "columns", "service", "service_col")
    model = _load_model(args.model)
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _fail("io-error", f"{args.manifest}: {exc}", EXIT_IO)
    except json.JSONDecodeError as exc:
        raise _fail("invalid-data", f"{args.manifest}: {exc}", EXIT_INVALID_DATA)
    base_dir = Path(args.manifest).parent
    cases = []
    for entry in manifest.get("cases", []):
        window_path = base_dir / entry["window"]
        table = read_csv_columns(window_path)
        window = _window_from_table(model, table, service_col)
        cases.append(IncidentCase(window, entry["true_fault"], entry["true_service"]))
    if not cases:
        raise _fail("invalid-data", f"{args.manifest}: no cases", EXIT_INVALID_DATA)
    report = evaluate_cases(model, cases)
    sys.stdout.write(report.to_table())
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    return EXIT_OK


def cmd_export_fingerprints(args) -> int:
    model = _load_model(args.model)
    if not model.rule_sets:
        raise _fail("invalid-data", "model contains no fault types", EXIT_INVALID_DATA)
    fingerprints = []
    for name, rule_set in model.rule_sets:
        entries = set()
        for rule in rule_set.rules:
            for j in rule.features:
                if model.binarization is None:
                    raise _fail(
                        "schema-error",
                        "model carries no binarization catalog",
                        EXIT_SCHEMA,
                    )
                feat = model.binarization.catalog[j]
                if feat.op == ">":
                    entries.add((feat.column, "high", feat.threshold))
                elif feat.op == "<=":
                    entries.add((feat.column, "low", feat.threshold))
                else:
                    entries.add((feat.column, "equals", feat.category))
        fingerprints.append(
            {
                "fault_type": name,
                "metrics": [
                    {
                        "metric": column,
                        "direction": direction,
                        ("category" if direction == "equals" else "threshold"): value,
                    }
                    for column, direction, value in sorted(
                        entries, key=lambda e: (e[0], e[1], str(e[2]))
                    )
                ],
            }
        )
    payload = json.dumps(
        {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "fingerprints": fingerprints,
        },
        sort_keys=True,
        indent=2,
    ) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_parse_logs(args) -> int:
    cfg = _load_config(args.config)
    interval = float(_setting(args, cfg, "logs", "interval"))
    depth = int(_setting(args, cfg, "logs", "depth"))
    sim = float(_setting(args, cfg, "logs", "similarity"))
    ts_format = args.timestamp_format or cfg.get("logs", {}).get("timestamp_format")
    logs_dir = Path(args.logs)
    normal_lines = _collect_log_lines(logs_dir, "normal")
    online_lines = _collect_log_lines(logs_dir, "online")
    if not online_lines:
        raise _fail(
            "invalid-data", f"no online* log files under {logs_dir}", EXIT_INVALID_DATA
        )
    base = build_template_base(normal_lines, depth=depth, sim=sim)
    frame = match_and_aggregate(base, online_lines, interval, ts_format)
    text = frame.to_csv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(
        f"templates={len(base)} intervals={len(frame.rows)} skipped={frame.skipped}",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ruleloc",
        description="Rule-set learning and fault localization for telemetry tables",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags win over it")
        p.add_argument("--seed", type=int, default=0, help="seed recorded in outputs")

    p_train = sub.add_parser("train", help="learn per-fault-type rule sets")
    common(p_train)
    p_train.add_argument("--data", required=True, help="labelled training CSV")
    p_train.add_argument("--logs", help="directory with normal*/online* log files")
    p_train.add_argument("--model", required=True, help="output model JSON path")
    p_train.add_argument("-K", type=int, dest="K", help="max rules per fault type")
    p_train.add_argument("-l", type=int, dest="l", help="max features per rule")
    p_train.add_argument("--bins", type=int, help="quantile bins per numeric column")
    p_train.add_argument("--gamma", type=float, help="curvature of the weight schedule")
    p_train.add_argument("--workers", type=int, help="parallel fault-type trainings")
    p_train.add_argument("--trace", action="store_true", help="selection diagnostics on stderr")
    p_train.add_argument("--fault-col", dest="fault_col")
    p_train.add_argument("--service-col", dest="service_col")
    p_train.add_argument("--timestamp-col", dest="timestamp_col")
    p_train.add_argument("--categorical", help="comma-separated categorical columns")
    p_train.add_argument("--timestamp-format", dest="timestamp_format")
    p_train.set_defaults(func=cmd_train)

    p_loc = sub.add_parser("localize", help="rank fault types and services for a window")
    common(p_loc)
    p_loc.add_argument("--model", required=True)
    p_loc.add_argument("--data", required=True, help="incident window CSV")
    p_loc.add_argument("--out", help="write the JSON report here instead of stdout")
    p_loc.add_argument("--service-col", dest="service_col")
    p_loc.set_defaults(func=cmd_localize)

    p_eval = sub.add_parser("eval", help="score a model against a case manifest")
    common(p_eval)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--manifest", required=True, help="JSON case manifest")
    p_eval.add_argument("--out", help="write the JSON metrics report here")
    p_eval.add_argument("--service-col", dest="service_col")
    p_eval.set_defaults(func=cmd_eval)

    p_fp = sub.add_parser(
        "export-fingerprints", help="emit per-fault key metrics with directions"
    )
    common(p_fp)
    p_fp.add_argument("--model", required=True)
    p_fp.add_argument("--out")
    p_fp.set_defaults(func=cmd_export_fingerprints)

    p_logs = sub.add_parser("parse-logs", help="build template base and novelty counters")
    common(p_logs)
    p_logs.add_argument("--logs", required=True)
    p_logs.add_argument("--interval", type=float)
    p_logs.add_argument("--depth", type=int)
    p_logs.add_argument("--similarity", type=float, dest="similarity")
    p_logs.add_argument("--timestamp-format", dest="timestamp_format")
    p_logs.add_argument("--out")
    p_logs.set_defaults(func=cmd_parse_logs)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return exc.code
    except (SchemaError, UnknownFaultTypeError) as exc:
        print(f"schema-error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except InvalidDatasetError as exc:
        print(f"invalid-data: {exc}", file=sys.stderr)
        return EXIT_INVALID_DATA
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"invalid-data: {exc}", file=sys.stderr)
        return EXIT_INVALID_DATA


if __name__ == "__main__":
    sys.exit(main())
