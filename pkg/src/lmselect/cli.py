"""Command-line front end and file input/output.

Subcommands:
    fit        estimate one model on a dataset file, write a JSON fit
    select     fit k = 1..k_max, write the criterion table and selections
    simulate   draw a dataset from a preset or a parameters file
    replicate  run a Monte Carlo study from a config file

File formats (all UTF-8, LF line endings):
    dataset      wide CSV, one row per unit, header ``id,y<j>_t<t>`` with
                 j = 1..r outer and t = 1..T inner; 0-based integer labels.
    parameters   JSON with a "model" block (k, T, categories, homogeneity
                 flags) and a "parameters" block (initial, transitions,
                 emissions as nested arrays of probabilities).
    frequencies  CSV mirroring the study tables: one row per (r, k),
                 criterion columns, preceded by a ``# manifest:`` comment.

Every emitted file names the run manifest that produced it (JSON files in
a "manifest" key, CSV files in the leading comment).  Exit codes:
0 success, 2 usage error, 3 data error, 4 numerical failure.

The seed is taken from --seed, else the LMSELECT_SEED environment
variable, else a config-file value when present, else 20130501.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .criteria import CRITERIA, SelectionReport, select_k
from .em import AllStartsFailed, EMOptions, canonicalize_states, fit
from .harness import StudyConfig, evaluate_k_range, run_study
from .inference import ZeroProbabilityPattern
from .model import Dataset, LMParameters, ModelSpec, count_free_parameters, require_valid
from .simulate import DEFAULT_MASTER_SEED, Scenario, draw_units, scenario_preset

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class DataError(Exception):
    """Malformed input file or configuration (exit code 3)."""


# ----------------------------------------------------------------------
# dataset CSV

def dataset_header(r: int, T: int) -> list[str]:
    return ["id"] + [f"y{j}_t{t}" for j in range(1, r + 1) for t in range(1, T + 1)]


def write_dataset_csv(path, units: np.ndarray, manifest_name: str) -> None:
    units = np.asarray(units)
    n, r, T = units.shape
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# manifest: {manifest_name}\n")
        handle.write(",".join(dataset_header(r, T)) + "\n")
        for i in range(n):
            row = [str(i + 1)] + [
                str(int(units[i, j, t])) for j in range(r) for t in range(T)
            ]
            handle.write(",".join(row) + "\n")


_HEADER_RE = re.compile(r"^y(\d+)_t(\d+)$")


def read_dataset_csv(path) -> np.ndarray:
    """Read a wide dataset CSV into unit records of shape (n, r, T)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            lines = list(csv.reader(handle))
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err

    rows = [
        (ln + 1, row)
        for ln, row in enumerate(lines)
        if row and not row[0].lstrip().startswith("#")
    ]
    if not rows:
        raise DataError(f"{path}: no header row found")
    header_line, header = rows[0]
    if header[0] != "id":
        raise DataError(f"{path}: line {header_line}: first column must be 'id'")
    r = T = 0
    for col in header[1:]:
        m = _HEADER_RE.match(col)
        if not m:
            raise DataError(f"{path}: line {header_line}: bad column name {col!r}")
        r = max(r, int(m.group(1)))
        T = max(T, int(m.group(2)))
    if header != dataset_header(r, T):
        raise DataError(
            f"{path}: line {header_line}: header must be exactly "
            f"{','.join(dataset_header(r, T))}"
        )
    units = np.empty((len(rows) - 1, r, T), dtype=np.int64)
    for i, (ln, row) in enumerate(rows[1:]):
        if len(row) != 1 + r * T:
            raise DataError(
                f"{path}: line {ln}: expected {1 + r * T} fields, got {len(row)}"
            )
        for j in range(r):
            for t in range(T):
                col = 1 + j * T + t
                try:
                    value = int(row[col])
                except ValueError:
                    raise DataError(
                        f"{path}: line {ln}, column {col + 1}: "
                        f"{row[col]!r} is not an integer"
                    ) from None
                if value < 0:
                    raise DataError(
                        f"{path}: line {ln}, column {col + 1}: negative label {value}"
                    )
                units[i, j, t] = value
    if units.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    return units


def infer_categories(units: np.ndarray) -> tuple[int, ...]:
    """Per-response category counts from observed labels (at least binary)."""
    return tuple(max(2, int(units[:, j, :].max()) + 1) for j in range(units.shape[1]))


# ----------------------------------------------------------------------
# parameters JSON

def model_to_dict(spec: ModelSpec) -> dict:
    return {
        "k": spec.k,
        "T": spec.T,
        "categories": list(spec.categories),
        "transition_homogeneous": spec.transition_homogeneous,
        "emission_homogeneous": spec.emission_homogeneous,
    }


def params_to_dict(params: LMParameters) -> dict:
    return {
        "initial": params.initial.tolist(),
        "transitions": params.transitions.tolist(),
        "emissions": [e.tolist() for e in params.emissions],
    }


def model_from_dict(data: dict) -> ModelSpec:
    if not isinstance(data, dict):
        raise DataError("'model' must be an object")
    try:
        return ModelSpec(
            k=int(data["k"]),
            T=int(data["T"]),
            categories=tuple(int(c) for c in data["categories"]),
            transition_homogeneous=bool(data.get("transition_homogeneous", True)),
            emission_homogeneous=bool(data.get("emission_homogeneous", True)),
        )
    except KeyError as err:
        raise DataError(f"'model' is missing field {err.args[0]!r}") from None
    except (TypeError, ValueError) as err:
        raise DataError(f"invalid 'model' block: {err}") from None


def params_from_dict(data: dict, spec: ModelSpec) -> LMParameters:
    if not isinstance(data, dict):
        raise DataError("'parameters' must be an object")
    try:
        params = LMParameters(
            initial=np.asarray(data["initial"], dtype=float),
            transitions=np.asarray(data["transitions"], dtype=float),
            emissions=tuple(np.asarray(e, dtype=float) for e in data["emissions"]),
        )
    except KeyError as err:
        raise DataError(f"'parameters' is missing field {err.args[0]!r}") from None
    except (TypeError, ValueError) as err:
        raise DataError(f"invalid 'parameters' block: {err}") from None
    try:
        require_valid(params, spec)
    except ValueError as err:
        raise DataError(str(err)) from None
    return params


def read_params_json(path) -> tuple[ModelSpec, LMParameters]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: invalid JSON: {err}") from err
    if "model" not in data or "parameters" not in data:
        raise DataError(f"{path}: expected 'model' and 'parameters' blocks")
    spec = model_from_dict(data["model"])
    return spec, params_from_dict(data["parameters"], spec)


# ----------------------------------------------------------------------
# study config JSON

_STUDY_FIELDS = {
    "scenarios", "r_values", "n_values", "k_max", "replicates", "seed", "em",
}
_EM_FIELDS = {"tol", "max_iter", "starts"}


def _int_list(data, field) -> tuple[int, ...]:
    if not isinstance(data, list) or not all(isinstance(v, int) for v in data):
        raise DataError(f"field {field!r}: expected a list of integers")
    return tuple(data)


def read_study_config(path) -> tuple[StudyConfig, int | None]:
    """Parse a study config file; returns (config, seed-or-None)."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(data, dict):
        raise DataError(f"{path}: top level must be an object")
    unknown = set(data) - _STUDY_FIELDS
    if unknown:
        raise DataError(f"{path}: unknown field(s) {sorted(unknown)}")
    if "scenarios" not in data:
        raise DataError(f"{path}: field 'scenarios' is required")

    em_data = data.get("em", {})
    if not isinstance(em_data, dict):
        raise DataError("field 'em': expected an object")
    unknown = set(em_data) - _EM_FIELDS
    if unknown:
        raise DataError(f"field 'em': unknown field(s) {sorted(unknown)}")
    for field, kind in (("tol", float), ("max_iter", int), ("starts", int)):
        if field in em_data and not isinstance(em_data[field], (int, float) if kind is float else int):
            raise DataError(f"field 'em.{field}': expected {kind.__name__}")
    em = EMOptions(
        max_iter=em_data.get("max_iter", 5000),
        tol=float(em_data.get("tol", 1e-8)),
        n_random_starts=em_data.get("starts", 4),
    )

    for field in ("k_max", "replicates", "seed"):
        if field in data and not isinstance(data[field], int):
            raise DataError(f"field {field!r}: expected an integer")
    try:
        config = StudyConfig(
            scenarios=_int_list(data["scenarios"], "scenarios"),
            r_values=_int_list(data.get("r_values", [1, 3, 5]), "r_values"),
            n_values=_int_list(data.get("n_values", [250]), "n_values"),
            k_max=data.get("k_max", 5),
            n_replicates=data.get("replicates", 100),
            em=em,
        )
    except ValueError as err:
        raise DataError(f"{path}: {err}") from None
    return config, data.get("seed")


def study_config_to_dict(config: StudyConfig) -> dict:
    return {
        "scenarios": list(config.scenarios),
        "r_values": list(config.r_values),
        "n_values": list(config.n_values),
        "k_max": config.k_max,
        "replicates": config.n_replicates,
        "seed": config.master_seed,
        "em": {
            "tol": config.em.tol,
            "max_iter": config.em.max_iter,
            "starts": config.em.n_random_starts,
        },
    }


# ----------------------------------------------------------------------
# reports

def selection_table_rows(report: SelectionReport) -> list[dict]:
    rows = []
    for v in report.values:
        row = {
            "k": v.k,
            "log_likelihood": v.log_likelihood,
            "n_parameters": v.n_parameters,
            "EN": v.entropy,
            "EN1": v.entropy_marginal,
            "EN2": v.entropy_normalized,
        }
        for criterion in CRITERIA:
            row[criterion] = v.value(criterion)
        rows.append(row)
    return rows


def write_selection_csv(path, report: SelectionReport, manifest_name: str) -> None:
    columns = ["k", "log_likelihood", "n_parameters", "EN", "EN1", "EN2", *CRITERIA]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# manifest: {manifest_name}\n")
        handle.write(",".join(columns) + "\n")
        for row in selection_table_rows(report):
            cells = []
            for col in columns:
                value = row[col]
                cells.append(str(value) if isinstance(value, int) else f"{value:.6f}")
            handle.write(",".join(cells) + "\n")


def read_selection_csv(path) -> list[dict]:
    """Parse a selection-table CSV back into one record per k row."""
    columns = ["k", "log_likelihood", "n_parameters", "EN", "EN1", "EN2", *CRITERIA]
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            lines = [
                row for row in csv.reader(handle)
                if row and not row[0].lstrip().startswith("#")
            ]
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    if not lines or lines[0] != columns:
        raise DataError(f"{path}: bad selection table header")
    out = []
    for row in lines[1:]:
        if len(row) != len(columns):
            raise DataError(f"{path}: bad selection row {row!r}")
        record = {"k": int(row[0]), "n_parameters": int(row[2])}
        for name, value in zip(columns, row):
            if name not in record:
                record[name] = float(value)
        out.append(record)
    return out


def write_frequency_csv(path, cells, k_max: int, manifest_name: str) -> None:
    """One study CSV: blocks of k rows per r, criterion columns."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"# manifest: {manifest_name}\n")
        handle.write("r,k," + ",".join(CRITERIA) + "\n")
        for cell in cells:
            for k in range(1, k_max + 1):
                freqs = [
                    f"{cell.frequencies[i, k - 1]:.4f}" for i in range(len(CRITERIA))
                ]
                handle.write(f"{cell.r},{k}," + ",".join(freqs) + "\n")


def read_frequency_csv(path) -> list[dict]:
    """Parse a frequency CSV back into one record per (r, k) row."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            lines = [
                row for row in csv.reader(handle)
                if row and not row[0].lstrip().startswith("#")
            ]
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err
    if not lines or lines[0] != ["r", "k", *CRITERIA]:
        raise DataError(f"{path}: bad frequency table header")
    out = []
    for row in lines[1:]:
        if len(row) != 2 + len(CRITERIA):
            raise DataError(f"{path}: bad frequency row {row!r}")
        record = {"r": int(row[0]), "k": int(row[1])}
        for name, value in zip(CRITERIA, row[2:]):
            record[name] = float(value)
        out.append(record)
    return out


def write_manifest(path, command: str, config: dict, seed: int, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "master_seed": seed,
        "config": config,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": outputs,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


# ----------------------------------------------------------------------
# argument parsing

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _add_em_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol", type=_positive_float, default=1e-8,
                        help="relative log-likelihood convergence tolerance")
    parser.add_argument("--max-iter", type=_positive_int, default=5000,
                        help="maximum EM iterations per start")
    parser.add_argument("--starts", type=_nonnegative_int, default=4,
                        help="number of random starts besides the deterministic one")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmselect",
        description="Latent Markov model estimation and latent-state selection",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model to a dataset CSV")
    p_fit.add_argument("--data", required=True, help="dataset CSV path")
    p_fit.add_argument("--k", type=_positive_int, required=True, help="number of latent states")
    p_fit.add_argument("--T", type=_positive_int, help="expected number of occasions (checked against the data)")
    p_fit.add_argument("--r", type=_positive_int, help="expected number of responses (checked against the data)")
    p_fit.add_argument("--seed", type=int, default=None)
    _add_em_flags(p_fit)
    p_fit.add_argument("--out", default="fit.json", help="output JSON path")
    p_fit.set_defaults(func=cmd_fit)

    p_sel = sub.add_parser("select", help="fit k = 1..k_max and select per criterion")
    p_sel.add_argument("--data", required=True)
    p_sel.add_argument("--k-max", type=_positive_int, default=5)
    p_sel.add_argument("--T", type=_positive_int)
    p_sel.add_argument("--r", type=_positive_int)
    p_sel.add_argument("--seed", type=int, default=None)
    _add_em_flags(p_sel)
    p_sel.add_argument("--out", default="select", help="output path prefix")
    p_sel.set_defaults(func=cmd_select)

    p_sim = sub.add_parser("simulate", help="draw a dataset from a preset or parameters file")
    source = p_sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", type=int, choices=(1, 2, 3, 4, 5))
    source.add_argument("--params", help="parameters JSON instead of a preset")
    p_sim.add_argument("--n", type=_positive_int, help="sample size")
    p_sim.add_argument("--r", type=_positive_int, default=1, help="responses (presets only)")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", default="dataset.csv", help="output CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("replicate", help="run a Monte Carlo study from a config file")
    p_rep.add_argument("--config", required=True, help="study config JSON")
    p_rep.add_argument("--out", default="study", help="output directory")
    p_rep.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_rep.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    p_rep.set_defaults(func=cmd_replicate)
    return parser


def _resolve_seed(flag_value: int | None, config_value: int | None = None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("LMSELECT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataError(f"LMSELECT_SEED must be an integer, got {env!r}") from None
    if config_value is not None:
        return config_value
    return DEFAULT_MASTER_SEED


def _load_dataset(args) -> tuple[Dataset, np.ndarray, tuple[int, ...]]:
    units = read_dataset_csv(args.data)
    _, r, T = units.shape
    if args.T is not None and args.T != T:
        raise DataError(f"{args.data}: data has T={T}, --T says {args.T}")
    if args.r is not None and args.r != r:
        raise DataError(f"{args.data}: data has r={r}, --r says {args.r}")
    return Dataset.from_units(units), units, infer_categories(units)


# ----------------------------------------------------------------------
# commands

def cmd_fit(args) -> int:
    dataset, units, categories = _load_dataset(args)
    _, r, T = units.shape
    seed = _resolve_seed(args.seed)
    spec = ModelSpec(k=args.k, T=T, categories=categories)
    options = EMOptions(max_iter=args.max_iter, tol=args.tol,
                        n_random_starts=args.starts, seed=seed)
    result = canonicalize_states(fit(spec, dataset, options))
    n_params = count_free_parameters(spec)

    out = Path(args.out)
    manifest_name = out.stem + ".manifest.json"
    payload = {
        "model": model_to_dict(spec),
        "parameters": params_to_dict(result.params),
        "log_likelihood": result.log_likelihood,
        "n_parameters": n_params,
        "n_iterations": result.n_iter,
        "converged": result.converged,
        "start_index": result.start_index,
        "start_type": result.start_type,
        "fallback_rows": result.n_fallback_rows,
        "trace": result.trace.tolist(),
        "n": dataset.n,
        "seed": seed,
        "manifest": manifest_name,
    }
    _write_json(out, payload)
    write_manifest(out.with_name(manifest_name), "fit",
                   {"data": str(args.data), "k": args.k}, seed, [out.name])
    print(f"log_likelihood={result.log_likelihood:.6f} n_parameters={n_params} "
          f"iterations={result.n_iter} converged={result.converged}")
    return 0


def cmd_select(args) -> int:
    dataset, units, categories = _load_dataset(args)
    _, r, T = units.shape
    seed = _resolve_seed(args.seed)
    options = EMOptions(max_iter=args.max_iter, tol=args.tol,
                        n_random_starts=args.starts, seed=seed)
    result = evaluate_k_range(dataset, T, categories, args.k_max, options)
    report = select_k(result.values)

    prefix = Path(args.out)
    manifest_name = prefix.name + ".manifest.json"
    csv_path = prefix.with_name(prefix.name + ".csv")
    json_path = prefix.with_name(prefix.name + ".json")
    write_selection_csv(csv_path, report, manifest_name)
    _write_json(json_path, {
        "selected": report.selected,
        "boundary": report.boundary,
        "table": selection_table_rows(report),
        "n": dataset.n,
        "seed": seed,
        "manifest": manifest_name,
    })
    write_manifest(prefix.with_name(manifest_name), "select",
                   {"data": str(args.data), "k_max": args.k_max}, seed,
                   [csv_path.name, json_path.name])
    for criterion in CRITERIA:
        flag = " (boundary)" if report.boundary[criterion] else ""
        print(f"{criterion}: k={report.selected[criterion]}{flag}")
    return 0


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.scenario is not None:
        try:
            scenario = scenario_preset(args.scenario, n=args.n, r=args.r)
        except ValueError as err:
            raise DataError(str(err)) from None
        scenario_label = scenario.name
    else:
        spec, params = read_params_json(args.params)
        if args.n is None:
            raise DataError("--n is required with --params")
        scenario = Scenario(name="custom", spec=spec, params=params, n=args.n)
        scenario_label = None

    units = draw_units(scenario, replicate_index=0, master_seed=seed)
    out = Path(args.out)
    manifest_name = out.stem + ".manifest.json"
    sidecar = out.with_name(out.stem + ".params.json")
    write_dataset_csv(out, units, manifest_name)
    _write_json(sidecar, {
        "model": model_to_dict(scenario.spec),
        "parameters": params_to_dict(scenario.params),
        "scenario": scenario_label,
        "n": scenario.n,
        "seed": seed,
        "manifest": manifest_name,
    })
    write_manifest(out.with_name(manifest_name), "simulate",
                   {"scenario": scenario_label, "n": scenario.n, "r": scenario.spec.r},
                   seed, [out.name, sidecar.name])
    print(f"wrote {scenario.n} units to {out}")
    return 0


def _progress_printer(stream):
    def progress(label: str, done: int, total: int) -> None:
        if done == total or done % 10 == 0:
            print(f"{label}: {done}/{total}", file=stream)
    return progress


def cmd_replicate(args) -> int:
    config, config_seed = read_study_config(args.config)
    seed = _resolve_seed(args.seed, config_seed)
    config = replace(config, master_seed=seed)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = run_study(config, n_jobs=args.jobs, progress=_progress_printer(sys.stderr))

    manifest_name = "manifest.json"
    outputs = []
    groups: dict[tuple[str, int], list] = {}
    for cell in table.cells:
        groups.setdefault((cell.scenario, cell.n), []).append(cell)
    for (scenario, n), cells in groups.items():
        path = out_dir / f"{scenario}_n{n}.csv"
        write_frequency_csv(path, cells, config.k_max, manifest_name)
        outputs.append(path.name)

    audit = {
        "config": study_config_to_dict(config),
        "cells": [
            {
                "scenario": cell.scenario,
                "r": cell.r,
                "n": cell.n,
                "n_failures": cell.n_failures,
                "frequencies": {
                    criterion: cell.frequencies[i].tolist()
                    for i, criterion in enumerate(CRITERIA)
                },
                "replicates": [
                    {
                        "replicate": rec.replicate,
                        "selected": rec.selected,
                        "error": rec.error,
                        "min_trace_step": rec.min_trace_step,
                    }
                    for rec in cell.replicates
                ],
            }
            for cell in table.cells
        ],
        "manifest": manifest_name,
    }
    audit_path = out_dir / "audit.json"
    _write_json(audit_path, audit)
    outputs.append(audit_path.name)
    write_manifest(out_dir / manifest_name, "replicate",
                   study_config_to_dict(config), seed, sorted(outputs))
    print(f"wrote {len(outputs) + 1} files to {out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (AllStartsFailed, ZeroProbabilityPattern) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
