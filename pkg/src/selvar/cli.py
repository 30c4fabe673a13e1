"""Command line interface: clustering, supervised learning, simulation, replication.

Reports are JSON with a fixed schema (schema_version 1) and canonical
serialisation (sorted keys, two-space indent), so two runs with the same
inputs produce byte-identical reports apart from the "timings" block.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ParseError
from .gaussmix import IndepCovForm, InitPolicy, MixtureForm
from .metrics import adjusted_rand_index, error_rate
from .roles import (
    ALL_FORMS,
    ALL_INDEP_FORMS,
    ALL_REG_FORMS,
    RegCovForm,
    SelectionResult,
    predict_classes,
    select_model,
    select_model_classif,
)
from .simdata import SCENARIOS, make_scenario, replicate_seed, write_csv, write_labels_csv

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# CSV input
# ---------------------------------------------------------------------------


def _parse_cells(cells, row_number):
    values = []
    for j, cell in enumerate(cells):
        text = cell.strip()
        if text == "":
            raise ParseError(f"empty cell at row {row_number}, column {j + 1}",
                             row=row_number, col=j + 1)
        try:
            values.append(float(text))
        except ValueError:
            raise ParseError(
                f"cannot parse {text!r} as a number at row {row_number}, column {j + 1}",
                row=row_number, col=j + 1) from None
    return values


def read_csv_matrix(path) -> np.ndarray:
    """Read a comma-separated numeric matrix; a non-numeric first row is a header."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\r\n") for ln in fh]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise DataError(f"{path} is empty")
    first = lines[0].split(",")
    start = 0
    try:
        _parse_cells(first, 1)
    except ParseError:
        start = 1  # header row
    if start == len(lines):
        raise DataError(f"{path} contains a header but no data rows")
    width = len(lines[start].split(","))
    rows = []
    for i in range(start, len(lines)):
        cells = lines[i].split(",")
        if len(cells) != width:
            raise ParseError(
                f"row {i + 1} has {len(cells)} fields, expected {width}", row=i + 1)
        rows.append(_parse_cells(cells, i + 1))
    return np.asarray(rows, dtype=float)


def read_labels_csv(path) -> np.ndarray:
    mat = read_csv_matrix(path)
    if mat.shape[1] != 1:
        raise DataError(f"{path}: labels file must have exactly one column")
    col = mat[:, 0]
    if np.any(col != np.round(col)):
        raise DataError(f"{path}: labels must be integers")
    return col.astype(int)


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selvar",
        description="Variable role selection for Gaussian clustering and classification.",
    )
    parser.add_argument("--mode", required=True,
                        choices=["cluster", "learn", "simulate", "replicate"])
    parser.add_argument("--input", help="training data CSV (cluster, learn)")
    parser.add_argument("--labels", help="training labels CSV (learn)")
    parser.add_argument("--test", help="test data CSV (learn)")
    parser.add_argument("--test-labels", help="test labels CSV (learn)")
    parser.add_argument("--k-min", type=int, default=2)
    parser.add_argument("--k-max", type=int, default=6)
    parser.add_argument("--forms", default="all",
                        help="comma list of mixture covariance forms, or 'all'")
    parser.add_argument("--reg-forms", default="all",
                        help="comma list of regression noise forms, or 'all'")
    parser.add_argument("--indep-forms", default="all",
                        help="comma list of independent covariance forms, or 'all'")
    parser.add_argument("--c", type=int, default=3,
                        help="consecutive rejections that stop the role scans")
    parser.add_argument("--n-lambda", type=int, default=5)
    parser.add_argument("--n-rho", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads; 0 means one per CPU; "
                             "the SELVAR_THREADS environment variable overrides")
    parser.add_argument("--scenario", help="scenario name (simulate, replicate); "
                                           f"one of {sorted(SCENARIOS)}")
    parser.add_argument("--n", type=int, default=2000,
                        help="observations per generated dataset")
    parser.add_argument("--n-test", type=int, default=2000,
                        help="test observations per replicate (classification)")
    parser.add_argument("--replicates", type=int, default=1)
    parser.add_argument("--out", help="report path (cluster, learn, replicate) or "
                                      "output directory (simulate)")
    return parser


def _parse_forms(text, enum_cls, all_values, flag):
    if text.strip().lower() == "all":
        return all_values
    out = []
    valid = {f.value: f for f in enum_cls}
    for name in text.split(","):
        name = name.strip()
        if name not in valid:
            raise ConfigError(f"{flag}: unknown form {name!r}; valid: {sorted(valid)}")
        if valid[name] not in out:
            out.append(valid[name])
    if not out:
        raise ConfigError(f"{flag}: no forms given")
    return tuple(out)


def _resolve_threads(args) -> int:
    env = os.environ.get("SELVAR_THREADS")
    if env is not None:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"SELVAR_THREADS must be an integer, got {env!r}") from None
    else:
        threads = args.threads
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ConfigError("thread count must be positive")
    return threads


def _validate_common(args):
    if args.k_min < 1 or args.k_max < args.k_min:
        raise ConfigError("need 1 <= k-min <= k-max")
    if args.c < 1:
        raise ConfigError("--c must be at least 1")
    if args.n_lambda < 1 or args.n_rho < 1:
        raise ConfigError("--n-lambda and --n-rho must be at least 1")
    if args.seed < 0:
        raise ConfigError("--seed must be non-negative")


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


def _partition_dict(part) -> dict:
    return {
        "S": sorted(part.S),
        "R": sorted(part.R),
        "U": sorted(part.U),
        "W": sorted(part.W),
    }


def _row_dict(row) -> dict:
    return {
        "K": row.K,
        "form": row.form.value,
        "reg_form": row.reg_form.value,
        "indep_form": row.indep_form.value,
        "S": list(row.S),
        "R": list(row.R),
        "U": list(row.U),
        "W": list(row.W),
        "bic_clust": row.bic_clust,
        "bic_reg": row.bic_reg,
        "bic_indep": row.bic_indep,
        "crit": row.crit,
        "nparams": row.nparams,
    }


def _selection_dict(res: SelectionResult, include_assignment: bool = True) -> dict:
    out = {
        "K": res.K,
        "form": res.form.value,
        "reg_form": res.reg_form.value if res.reg_form else None,
        "indep_form": res.indep_form.value if res.indep_form else None,
        "partition": _partition_dict(res.partition),
        "crit": res.crit,
        "no_structure": res.no_structure,
        "failures": list(res.failures),
        "table": [_row_dict(r) for r in res.table],
        "rankings": {
            str(K): {
                "scores": [int(s) for s in rk.scores],
                "order": list(rk.order),
                "failed_points": len(rk.failures),
            }
            for K, rk in sorted(res.rankings.items())
        },
    }
    if include_assignment:
        out["assignment"] = [int(v) for v in res.assignment]
    return out


def render_report(report: dict, strip_timings: bool = False) -> str:
    """Canonical JSON serialisation (byte-stable apart from the timings block)."""
    if strip_timings:
        report = {k: v for k, v in report.items() if k != "timings"}
    return json.dumps(report, indent=2, sort_keys=True)


def _emit(report: dict, out_path) -> None:
    text = render_report(report)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _config_dict(args, threads, mode_keys) -> dict:
    full = {
        "mode": args.mode,
        "k_min": args.k_min,
        "k_max": args.k_max,
        "forms": args.forms,
        "reg_forms": args.reg_forms,
        "indep_forms": args.indep_forms,
        "c": args.c,
        "n_lambda": args.n_lambda,
        "n_rho": args.n_rho,
        "seed": args.seed,
        "threads": threads,
        "scenario": args.scenario,
        "n": args.n,
        "n_test": args.n_test,
        "replicates": args.replicates,
        "input": args.input,
        "labels": args.labels,
        "test": args.test,
        "test_labels": args.test_labels,
    }
    return {k: full[k] for k in mode_keys}


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

_CLUSTER_KEYS = ("mode", "input", "k_min", "k_max", "forms", "reg_forms", "indep_forms",
                 "c", "n_lambda", "n_rho", "seed", "threads")
_LEARN_KEYS = ("mode", "input", "labels", "test", "test_labels", "forms", "reg_forms",
               "indep_forms", "c", "n_lambda", "n_rho", "threads")
_SIM_KEYS = ("mode", "scenario", "n", "seed")
_REP_KEYS = ("mode", "scenario", "n", "n_test", "replicates", "k_min", "k_max", "forms",
             "reg_forms", "indep_forms", "c", "n_lambda", "n_rho", "seed", "threads")


def _run_cluster(args, forms, reg_forms, indep_forms, threads) -> dict:
    if not args.input:
        raise ConfigError("--input is required in cluster mode")
    data = read_csv_matrix(args.input)
    t0 = time.perf_counter()
    res = select_model(
        data,
        K_range=range(args.k_min, args.k_max + 1),
        forms=forms, reg_forms=reg_forms, indep_forms=indep_forms,
        c=args.c, n_lambda=args.n_lambda, n_rho=args.n_rho,
        init=InitPolicy(seed=args.seed), threads=threads,
    )
    elapsed = time.perf_counter() - t0
    return {
        "schema_version": SCHEMA_VERSION,
        "config": _config_dict(args, threads, _CLUSTER_KEYS),
        "results": _selection_dict(res),
        "timings": {"total_sec": elapsed},
    }


def _run_learn(args, forms, reg_forms, indep_forms, threads) -> dict:
    if not args.input or not args.labels:
        raise ConfigError("--input and --labels are required in learn mode")
    data = read_csv_matrix(args.input)
    labels = read_labels_csv(args.labels)
    if labels.shape[0] != data.shape[0]:
        raise DataError(
            f"label count {labels.shape[0]} does not match data rows {data.shape[0]}")
    t0 = time.perf_counter()
    res = select_model_classif(
        data, labels,
        forms=forms, reg_forms=reg_forms, indep_forms=indep_forms,
        c=args.c, n_lambda=args.n_lambda, n_rho=args.n_rho, threads=threads,
    )
    train_pred = predict_classes(res, data)
    results = _selection_dict(res, include_assignment=False)
    results["train_error"] = error_rate(labels, train_pred)
    if args.test:
        test_data = read_csv_matrix(args.test)
        if test_data.shape[1] != data.shape[1]:
            raise DataError("test data has a different number of columns than training data")
        test_pred = predict_classes(res, test_data)
        results["test_predictions"] = [int(v) for v in test_pred]
        if args.test_labels:
            test_labels = read_labels_csv(args.test_labels)
            if test_labels.shape[0] != test_data.shape[0]:
                raise DataError("test label count does not match test data rows")
            results["test_error"] = error_rate(test_labels, test_pred)
    elapsed = time.perf_counter() - t0
    return {
        "schema_version": SCHEMA_VERSION,
        "config": _config_dict(args, threads, _LEARN_KEYS),
        "results": results,
        "timings": {"total_sec": elapsed},
    }


def _run_simulate(args) -> dict:
    if not args.scenario:
        raise ConfigError("--scenario is required in simulate mode")
    if not args.out:
        raise ConfigError("--out directory is required in simulate mode")
    ds = make_scenario(args.scenario, args.n, args.seed)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "data.csv")
    labels_path = os.path.join(args.out, "labels.csv")
    truth_path = os.path.join(args.out, "truth.json")
    write_csv(data_path, ds.data)
    write_labels_csv(labels_path, ds.labels)
    truth = {
        "schema_version": SCHEMA_VERSION,
        "scenario": ds.name,
        "n": int(ds.data.shape[0]),
        "p": int(ds.data.shape[1]),
        "K": ds.K,
        "partition": _partition_dict(ds.truth),
    }
    with open(truth_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    return {
        "schema_version": SCHEMA_VERSION,
        "config": _config_dict(args, 1, _SIM_KEYS),
        "results": {"files": [data_path, labels_path, truth_path]},
        "timings": {"total_sec": 0.0},
    }


def _replicate_once(args, forms, reg_forms, indep_forms, rep):
    seed = replicate_seed(args.seed, rep)
    ds = make_scenario(args.scenario, args.n, seed)
    supervised = ds.name.startswith("classif")
    t0 = time.perf_counter()
    if supervised:
        res = select_model_classif(
            ds.data, ds.labels, forms=forms, reg_forms=reg_forms,
            indep_forms=indep_forms, c=args.c,
            n_lambda=args.n_lambda, n_rho=args.n_rho, threads=1,
        )
    else:
        res = select_model(
            ds.data, K_range=range(args.k_min, args.k_max + 1), forms=forms,
            reg_forms=reg_forms, indep_forms=indep_forms, c=args.c,
            n_lambda=args.n_lambda, n_rho=args.n_rho,
            init=InitPolicy(seed=seed), threads=1,
        )
    row = {
        "rep": rep,
        "seed": seed,
        "K": res.K,
        "form": res.form.value,
        "partition": _partition_dict(res.partition),
        "crit": res.crit,
        "partition_exact": res.partition == ds.truth,
        "s_exact": res.partition.S == ds.truth.S,
        "s_covers_truth": ds.truth.S <= res.partition.S,
    }
    if supervised:
        test = make_scenario(args.scenario, args.n_test, replicate_seed(seed + 1, rep))
        pred = predict_classes(res, test.data)
        row["test_error"] = error_rate(test.labels, pred)
    else:
        row["ari"] = adjusted_rand_index(ds.labels, res.assignment)
        row["k_correct"] = res.K == ds.K
    return row, time.perf_counter() - t0


def _run_replicate(args, forms, reg_forms, indep_forms, threads) -> dict:
    if not args.scenario:
        raise ConfigError("--scenario is required in replicate mode")
    if args.replicates < 1:
        raise ConfigError("--replicates must be at least 1")
    rows = []
    times = []
    for rep in range(args.replicates):
        row, sec = _replicate_once(args, forms, reg_forms, indep_forms, rep)
        rows.append(row)
        times.append(sec)
    agg = {
        "replicates": len(rows),
        "partition_exact_rate": float(np.mean([r["partition_exact"] for r in rows])),
        "s_exact_rate": float(np.mean([r["s_exact"] for r in rows])),
    }
    if "ari" in rows[0]:
        agg["mean_ari"] = float(np.mean([r["ari"] for r in rows]))
        agg["k_correct_rate"] = float(np.mean([r["k_correct"] for r in rows]))
    if "test_error" in rows[0]:
        agg["mean_test_error"] = float(np.mean([r["test_error"] for r in rows]))
        agg["s_covers_truth_rate"] = float(np.mean([r["s_covers_truth"] for r in rows]))
    return {
        "schema_version": SCHEMA_VERSION,
        "config": _config_dict(args, threads, _REP_KEYS),
        "results": {"replicates": rows, "aggregate": agg},
        "timings": {"total_sec": float(np.sum(times)),
                    "replicate_sec": [float(t) for t in times]},
    }


def _dispatch(args) -> dict:
    _validate_common(args)
    threads = _resolve_threads(args)
    forms = _parse_forms(args.forms, MixtureForm, ALL_FORMS, "--forms")
    reg_forms = _parse_forms(args.reg_forms, RegCovForm, ALL_REG_FORMS, "--reg-forms")
    indep_forms = _parse_forms(args.indep_forms, IndepCovForm, ALL_INDEP_FORMS,
                               "--indep-forms")
    if args.mode == "cluster":
        return _run_cluster(args, forms, reg_forms, indep_forms, threads)
    if args.mode == "learn":
        return _run_learn(args, forms, reg_forms, indep_forms, threads)
    if args.mode == "simulate":
        return _run_simulate(args)
    return _run_replicate(args, forms, reg_forms, indep_forms, threads)


def run(argv=None) -> dict:
    """Parse arguments, execute the requested mode and return the report dict."""
    return _dispatch(build_parser().parse_args(argv))


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse reports its own usage errors on stderr and exits with 2
        return int(exc.code or 0)
    try:
        report = _dispatch(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    _emit(report, args.out if args.mode != "simulate" else None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
