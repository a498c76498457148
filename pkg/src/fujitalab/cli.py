"""Command line driver: ``fujitalab <experiment> --config <path> [--out <dir>] [--seed <int>]``.

Exit codes: 0 when every asserted invariant holds, 1 when one fails (or the
run raises), 2 for an invalid configuration.  A ``manifest.json`` with the
inputs, package versions, checks and timings is written in every case.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
import traceback
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema

from . import __version__
from .io import write_json

SCHEMA_VERSION = 1
EXPERIMENTS = ["geometry-check", "kernel-check", "trace", "sweep-threshold", "supersolution", "cantor",
               "maximal-ratio", "cover", "classify-growth", "all"]

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": EXPERIMENTS},
        "manifold": {
            "type": "object",
            "required": ["kind", "dim"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["euclidean", "sphere", "circle", "hyperbolic", "cylinder"]},
                "dim": {"type": "integer", "minimum": 1},
                "curvature": {"type": "number", "minimum": 0},
                "sphere_dim": {"type": "integer", "minimum": 1},
            },
        },
        "p": {"type": "number", "exclusiveMinimum": 1},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "measure": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["dirac", "zero", "uniform", "critical", "singular"]},
                "mass": {"type": "number", "minimum": 0},
                "value": {"type": "number", "minimum": 0},
                "C": {"type": "number", "minimum": 0},
            },
        },
        "params": {"type": "object"},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: list | None = None):
        super().__init__(message)
        self.path = path or []

    def to_dict(self) -> dict:
        return {"error": "config", "message": str(self), "path": self.path}


def load_config(path: Path, experiment: str) -> dict:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message, [str(p) for p in exc.absolute_path]) from None
    if cfg.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {cfg['experiment']!r}, not {experiment!r}", ["experiment"])
    _check_semantics(cfg, experiment)
    return cfg


def _check_semantics(cfg: dict, experiment: str) -> None:
    """Build the manifold and measure once so that bad combinations fail as config errors."""
    from .experiments import DEFAULT_PT, build_manifold, build_measure
    try:
        M = build_manifold(cfg.get("manifold"), experiment)
        if "measure" in cfg:
            p, T = DEFAULT_PT.get(experiment, (3.0, 1.0))
            build_measure(cfg["measure"], M, float(cfg.get("p", p)), float(cfg.get("T", T)), cfg["measure"])
    except (ValueError, NotImplementedError) as exc:
        raise ConfigError(str(exc), ["manifold" if "measure" not in cfg else "measure"]) from None


def _versions() -> dict:
    out = {"python": platform.python_version(), "fujitalab": __version__}
    for pkg in ("numpy", "scipy", "matplotlib", "mpmath", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _file_table(out: Path) -> list:
    rows = []
    for f in sorted(out.rglob("*")):
        if f.is_file() and f.name != "manifest.json" and not f.name.startswith("."):
            rows.append({"path": str(f.relative_to(out)),
                         "sha256": hashlib.sha256(f.read_bytes()).hexdigest()})
    return rows


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fujitalab", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, type=Path, help="JSON experiment config")
    ap.add_argument("--out", type=Path, default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    return ap


def run(experiment: str, config: Path, out: Path | None = None, seed: int | None = None) -> int:
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    manifest = {"experiment": experiment, "config_path": str(config), "versions": _versions(),
                "started": started.isoformat(timespec="seconds")}
    cfg = None
    try:
        cfg = load_config(config, experiment)
    except ConfigError as exc:
        diag = exc.to_dict()
        print(json.dumps(diag), file=sys.stderr)
        out = out or Path("results") / experiment
        out.mkdir(parents=True, exist_ok=True)
        manifest.update(status="config_error", exit_code=2, diagnostic=diag)
        _finish(manifest, out, t0)
        return 2
    seed = seed if seed is not None else int(cfg.get("seed", 0))
    out = out or Path(cfg.get("output_dir", Path("results") / experiment))
    out.mkdir(parents=True, exist_ok=True)
    manifest.update(config=cfg, config_sha256=hashlib.sha256(config.read_bytes()).hexdigest(), seed=seed)

    from .experiments import RUNNERS
    try:
        checks, summary = RUNNERS[experiment](cfg, out, seed)
        checks = {k: bool(v) for k, v in checks.items()}
        failed = sorted(k for k, v in checks.items() if not v)
        manifest.update(status="pass" if not failed else "fail", checks=checks, failed=failed,
                        summary=summary, exit_code=0 if not failed else 1)
    except Exception as exc:  # numerical failures are recorded, not fatal
        manifest.update(status="error", exit_code=1,
                        error={"type": type(exc).__name__, "message": str(exc),
                               "traceback": traceback.format_exc(limit=8)})
    _finish(manifest, out, t0)
    print(f"{experiment}: {manifest['status']} -> {out / 'manifest.json'}")
    for name in manifest.get("failed", []):
        print(f"  failed check: {name}")
    return manifest["exit_code"]


def _finish(manifest: dict, out: Path, t0: float) -> None:
    manifest["finished"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    manifest["runtime_s"] = time.perf_counter() - t0
    manifest["files"] = _file_table(out)
    write_json(out / "manifest.json", manifest)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.experiment, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
