"""Command-line harness: ``ergoshift run`` and ``ergoshift list``.

Every run writes ``manifest.json`` (resolved configuration and versions),
``results.csv`` (deterministic for a given configuration and seed) and
``report.json`` (summary, verdicts and timing).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .experiments import REGISTRY, Experiment
from .gordin_criteria import UNDECIDED

EXIT_OK, EXIT_ERROR, EXIT_UNDECIDED = 0, 1, 2
OUT_ENV = "ERGOSHIFT_OUT"


class ConfigError(ValueError):
    pass


def _parse_value(name: str, raw, default):
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"parameter {name} expects a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            v = float(raw) if isinstance(raw, str) and ("e" in raw.lower() or "." in raw) else raw
            if isinstance(v, float) and not v.is_integer():
                raise ValueError
            return int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {name} expects an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {name} expects a number, got {raw!r}") from None
    return raw if isinstance(raw, str) else json.dumps(raw)


def resolve_params(exp: Experiment, overrides: dict) -> dict:
    """Defaults updated by ``overrides``; unknown keys are rejected."""
    unknown = sorted(set(overrides) - set(exp.params))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {exp.id}: {', '.join(unknown)}; "
                          f"known: {', '.join(sorted(exp.params)) or 'none'}")
    out = dict(exp.params)
    for k, v in overrides.items():
        out[k] = _parse_value(k, v, exp.params[k])
    return out


def load_config(path: str) -> dict:
    """A JSON object, or ``key = value`` lines with ``#`` comments."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = {}
        for i, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{i}: expected key = value")
            k, v = line.split("=", 1)
            data[k.strip()] = v.strip()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: configuration must be an object")
    return data


def _split_kv(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def run_experiment(experiment: str, seed: int = 0, params: dict | None = None,
                   out: str | os.PathLike | None = None) -> dict:
    """Run one registered experiment, write its three artifacts and return the report."""
    if experiment not in REGISTRY:
        raise ConfigError(f"unknown experiment {experiment!r}; see `ergoshift list`")
    exp = REGISTRY[experiment]
    resolved = resolve_params(exp, params or {})
    out_dir = Path(out or os.environ.get(OUT_ENV) or Path("runs") / f"{experiment}-seed{seed}")
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "experiment": experiment,
        "seed": int(seed),
        "params": resolved,
        "anchors": list(exp.anchors),
        "versions": {"ergoshift": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    t0 = time.perf_counter()
    outcome = exp.run(resolved, int(seed))
    wall = time.perf_counter() - t0

    with open(out_dir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(outcome.columns)
        w.writerows(outcome.rows)

    report = {"experiment": experiment, "seed": int(seed), "verdicts": list(outcome.verdicts),
              "undecided": UNDECIDED in outcome.verdicts, "summary": outcome.report,
              "wall_time": wall}
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
    report["out"] = str(out_dir)
    return report


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergoshift", description="Martingale-coboundary experiments on shift spaces.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--experiment", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--config", help="JSON or key = value file; --param entries override it")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or runs/<id>-seed<seed>)")
    r.add_argument("--decide", action="store_true", help="exit with status 2 when a verdict is undecided")
    sub.add_parser("list", help="list experiments with their anchors")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list":
        for exp in REGISTRY.values():
            print(f"{exp.id:28s} {', '.join(exp.anchors):60s} {exp.summary}")
        return EXIT_OK
    try:
        params = load_config(args.config) if args.config else {}
        params.update(_split_kv(args.param))
        report = run_experiment(args.experiment, args.seed, params, args.out)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"ergoshift: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps({"out": report["out"], "verdicts": report["verdicts"],
                      "wall_time": round(report["wall_time"], 3)}))
    if args.decide and report["undecided"]:
        return EXIT_UNDECIDED
    return EXIT_OK
