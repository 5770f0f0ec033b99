"""Command-line experiment runner.

    natprob run CONFIG.json [--out DIR] [--seed N]
    natprob validate CONFIG.json
    natprob list-experiments

Exit codes: 0 all checks passed, 1 a check failed or the run raised, 2 config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from natprob import __version__
from natprob.experiments import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SEED_MAX = 2**64 - 1

_num = {"type": "number"}
_nonneg_int = {"type": "integer", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_table = {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}, "minItems": 2, "maxItems": 2}
_weights = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

PARAM_SCHEMAS: dict[str, dict] = {
    "chsh": {
        "angles": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "sweep_trials": _nonneg_int,
        "expected_abs_S": _num,
    },
    "bell-feasibility": {
        "tables": {"type": "array", "items": _table},
        "random_tables": _nonneg_int,
        "include_fixtures": {"type": "boolean"},
        "lp_tol": {"type": "number", "minimum": 0},
    },
    "darwinism-decay": {
        "n_env": {"type": "integer", "minimum": 2, "maximum": 11},
        "overlaps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}, "minItems": 1},
        "weights": _weights,
    },
    "visibility-scan": {
        "n_env": {"type": "integer", "minimum": 1, "maximum": 8},
        "overlap": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "weights": _weights,
        "method": {"enum": ["auto", "spectral", "schmidt", "helstrom", "exact", "none"]},
    },
    "algebra-verify": {
        "fixture": {"enum": ["ghz", "product", "random", "all"]},
        "n_qubits": {"type": "integer", "minimum": 1, "maximum": 10},
        "trials": _nonneg_int,
        "contraction_trials": _nonneg_int,
    },
    "record-swap": {
        "replacement_trials": _nonneg_int,
        "permutation_trials": _nonneg_int,
        "max_statements": {"type": "integer", "minimum": 1, "maximum": 6},
        "max_qubits": {"type": "integer", "minimum": 2, "maximum": 10},
        "noise_max": {"type": "number", "minimum": 0},
        "algebra_swap": {
            "oneOf": [
                {"type": "boolean", "const": False},
                {
                    "type": "object",
                    "properties": {"n_qubits": {"type": "integer", "minimum": 4, "maximum": 10}, "noise": {"type": "number", "minimum": 0}},
                    "additionalProperties": False,
                },
            ]
        },
    },
    "ensemble-verify": {
        "mixing_trials": _nonneg_int,
        "purity_trials": _nonneg_int,
        "refinement_trials": _nonneg_int,
    },
    "measurement-check": {
        "lambdas": _weights,
        "overlaps": {"type": "array", "items": _prob, "minItems": 1},
    },
}

TOLERANCE_KEYS = ["chsh", "tsirelson", "witness", "slope_rel", "residual", "visibility", "definition", "stone", "bound", "identity", "delta"]


def config_schema(experiment: str | None = None) -> dict:
    params: dict = {"type": "object"}
    if experiment in PARAM_SCHEMAS:
        params = {"type": "object", "properties": PARAM_SCHEMAS[experiment], "additionalProperties": False}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["experiment", "seed"],
        "properties": {
            "experiment": {"enum": sorted(SUITES)},
            "seed": {"type": "integer", "minimum": 0, "maximum": SEED_MAX},
            "description": {"type": "string"},
            "params": params,
            "tolerances": {
                "type": "object",
                "properties": {k: {"type": "number", "minimum": 0} for k in TOLERANCE_KEYS},
                "additionalProperties": False,
            },
            "output_dir": {"type": "string"},
        },
        "additionalProperties": False,
    }


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output_dir: str = "results"
    description: str = ""


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


def _fmt_error(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def validate_obj(obj) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    exp = obj.get("experiment")
    validator = jsonschema.Draft202012Validator(config_schema(exp if isinstance(exp, str) else None))
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError([_fmt_error(e) for e in errors])
    return ExperimentConfig(
        experiment=obj["experiment"],
        seed=int(obj["seed"]),
        params=copy.deepcopy(obj.get("params", {})),
        tolerances=dict(obj.get("tolerances", {})),
        output_dir=obj.get("output_dir", "results"),
        description=obj.get("description", ""),
    )


def validate(path: str | os.PathLike) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {p}"])
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from exc
    return validate_obj(obj)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> tuple[int, dict]:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    manifest = {
        "config": asdict(cfg),
        "versions": {"natprob": __version__, "numpy": np.__version__, "jsonschema": metadata.version("jsonschema"), "python": platform.python_version()},
        "status": "running",
    }
    try:
        result = run_suite(cfg.experiment, cfg.params, cfg.tolerances, cfg.seed)
    except Exception as exc:  # surfaced with context, recorded as partial
        manifest.update(status="error", error=f"{cfg.experiment}: {type(exc).__name__}: {exc}", partial=True, wall_time=time.perf_counter() - start)
        _atomic_write(out / "manifest.json", json.dumps(_jsonable(manifest), indent=2))
        return EXIT_FAIL, manifest
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([format_value(v) for v in row])
    _atomic_write(out / "results.csv", buf.getvalue())
    payload = {"experiment": cfg.experiment, "seed": cfg.seed, "summary": result.summary, "checks": result.checks, "passed": result.passed}
    _atomic_write(out / "results.json", json.dumps(_jsonable(payload), indent=2))
    manifest.update(status="passed" if result.passed else "failed", checks=result.counts(), partial=False, wall_time=time.perf_counter() - start)
    _atomic_write(out / "manifest.json", json.dumps(_jsonable(manifest), indent=2))
    return (EXIT_OK if result.passed else EXIT_FAIL), manifest


def _summary_lines(cfg: ExperimentConfig, manifest: dict, out: Path) -> list[str]:
    lines = [f"{cfg.experiment}  seed={cfg.seed}  status={manifest['status']}  time={manifest['wall_time']:.2f}s"]
    if "error" in manifest:
        lines.append(f"  error: {manifest['error']}")
    else:
        res = json.loads((out / "results.json").read_text())
        for name, ok in res["checks"].items():
            lines.append(f"  [{'PASS' if ok else 'FAIL'}] {name}")
    lines.append(f"  outputs in {out}")
    return lines


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="natprob", description="Run reproducible experiments from JSON configs.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides output_dir)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_val = sub.add_parser("validate", help="validate a config and list every violation")
    p_val.add_argument("config")
    sub.add_parser("list-experiments", help="print the experiment ids")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in sorted(SUITES):
            print(name)
        return EXIT_OK
    try:
        cfg = validate(args.config)
        if args.command == "run" and args.seed is not None:
            if not 0 <= args.seed <= SEED_MAX:
                raise ConfigError([f"--seed: {args.seed} is outside [0, 2**64 - 1]"])
            cfg.seed = args.seed
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"{args.config}: valid ({cfg.experiment})")
        return EXIT_OK
    out = Path(args.out or cfg.output_dir)
    code, manifest = run(cfg, out)
    print("\n".join(_summary_lines(cfg, manifest, out)))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
