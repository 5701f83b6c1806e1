"""Command-line entry point: ``wke <subcommand> [options]``.

Configuration precedence: scenario defaults < --config file < WKE_* environment
variables < command-line flags.  Every run directory receives its artifacts,
a summary.json and a manifest.json holding the config hash and versions.

Exit status: 0 success, 1 invalid configuration, 2 numerical failure (a
diagnostic.json is written next to the manifest).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

from . import __version__, _backend
from .scenarios import COMMANDS, SCENARIOS, ConfigError, ScenarioConfig, _dumps, resolve, run

ENV_PREFIX = "WKE_"
# environment variables that map to config fields; WKE_DISABLE_EXT and WKE_THREADS are also read by the backend
ENV_FIELDS = ("scenario", "sigma", "horizon", "samples", "seed", "threads", "tolerance", "output", "mode",
              "sample_spacing")


class NumericalFailure(RuntimeError):
    pass


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name in ENV_FIELDS:
        key = ENV_PREFIX + name.upper()
        if key in environ and environ[key] != "":
            out[name] = _parse_env_value(environ[key])
    if environ.get(ENV_PREFIX + "OUT"):
        out["output"] = environ[ENV_PREFIX + "OUT"]
    return out


def load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config: file {path!r} does not exist"])
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: not valid JSON ({exc.msg} at line {exc.lineno})"]) from exc
    if not isinstance(d, dict):
        raise ConfigError(["config: top level must be an object"])
    d.pop("command", None)
    initial = d.get("initial_file")
    if initial is not None:
        f = (p.parent / initial) if not Path(initial).is_absolute() else Path(initial)
        if not f.is_file():
            raise ConfigError([f"initial_file: file {initial!r} does not exist"])
        d.pop("initial_file")
        try:
            d["initial"] = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"initial_file: not valid JSON ({exc.msg})"]) from exc
    return d


def build_config(command: str, args: argparse.Namespace, environ=None) -> ScenarioConfig:
    environ = os.environ if environ is None else environ
    raw: dict = {}
    path = args.config or environ.get(ENV_PREFIX + "CONFIG")
    if path:
        raw.update(load_config_file(path))
    raw.update(env_overrides(environ))
    flags = {"scenario": args.scenario, "output": args.out, "seed": args.seed, "threads": args.threads,
             "tolerance": args.tolerance}
    raw.update({k: v for k, v in flags.items() if v is not None})
    return resolve(command, raw)


def config_hash(cfg: ScenarioConfig) -> str:
    d = cfg.to_dict()
    d.pop("output", None)
    d.pop("threads", None)  # results do not depend on the thread count
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def versions() -> dict:
    import mpmath
    import numpy
    import scipy

    return {"wke": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__}


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_run(cfg: ScenarioConfig, files: dict, summary: dict, runtime: float, outdir: Path) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    files = dict(files)
    files["summary.json"] = _dumps(summary)
    for name, text in files.items():
        (outdir / name).write_text(text)
    manifest = {"subcommand": cfg.command, "scenario": cfg.scenario, "config": cfg.to_dict(),
                "config_hash": config_hash(cfg), "versions": versions(), "backend": _backend.BACKEND,
                "threads": _backend.THREADS, "runtime_s": runtime,
                "artifacts": {n: _sha(t) for n, t in sorted(files.items())}}
    (outdir / "manifest.json").write_text(_dumps(manifest))
    return manifest


def execute(command: str, cfg: ScenarioConfig, out: str | None = None) -> int:
    outdir = Path(out or cfg.output)
    _backend.set_threads(cfg.threads)
    t0 = time.perf_counter()
    try:
        files, summary = run(cfg)
    except ConfigError:
        raise
    except (ArithmeticError, RuntimeError, ValueError, np_errors()) as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        diag = {"subcommand": command, "scenario": cfg.scenario, "config_hash": config_hash(cfg),
                "error": type(exc).__name__, "message": str(exc), "config": cfg.to_dict()}
        (outdir / "diagnostic.json").write_text(_dumps(diag))
        print(f"wke {command}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    runtime = time.perf_counter() - t0
    write_run(cfg, files, summary, runtime, outdir)
    print(f"wke {command} [{cfg.scenario}]: wrote {len(files) + 2} files to {outdir} in {runtime:.1f}s")
    return 0


def np_errors():
    import numpy as np

    return np.linalg.LinAlgError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file (env WKE_CONFIG)")
    p.add_argument("--out", metavar="DIR", help="output directory (env WKE_OUT; default config 'output')")
    p.add_argument("--seed", type=int, metavar="N", help="seed for sampled configurations (env WKE_SEED)")
    p.add_argument("--threads", type=int, metavar="N", help="threads for the compiled kernel (env WKE_THREADS)")
    p.add_argument("--tolerance", type=float, metavar="X", help="solver / quadrature tolerance (env WKE_TOLERANCE)")


def build_parser() -> argparse.ArgumentParser:
    env = ", ".join(ENV_PREFIX + k.upper() for k in ENV_FIELDS)
    ap = argparse.ArgumentParser(
        prog="wke", description="Isotropic four-wave kinetic equation: solvers, fluxes and diagnostics.",
        epilog=f"Environment overrides: {env}, WKE_OUT, WKE_CONFIG, WKE_DISABLE_EXT=1 (pure-Python core). "
               "Precedence: defaults < config file < environment < flags.")
    ap.add_argument("--version", action="version", version=f"wke {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        names = ", ".join(sorted(SCENARIOS[c]))
        p = sub.add_parser(c, help=f"run a {c} scenario", description=f"Shipped scenarios: {names}, custom.")
        p.add_argument("--scenario", help=f"one of: {names}, custom (env WKE_SCENARIO)")
        _add_common(p)
    rp = sub.add_parser("report", help="evaluate acceptance criteria over run directories",
                        description="Scans the given directories (recursively) for manifest.json files.")
    rp.add_argument("runs", nargs="+", metavar="RUN_DIR")
    rp.add_argument("--out", metavar="DIR", default=None, help="where report.json / report.txt go (env WKE_OUT)")
    rp.add_argument("--tolerance", type=float, metavar="X", help="unused; accepted for uniformity")
    rp.add_argument("--config", metavar="PATH", help="unused; accepted for uniformity")
    rp.add_argument("--seed", type=int, metavar="N", help="unused; accepted for uniformity")
    rp.add_argument("--threads", type=int, metavar="N", help="unused; accepted for uniformity")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        from .acceptance import evaluate, write_report

        rep = evaluate(args.runs)
        out = Path(args.out or os.environ.get(ENV_PREFIX + "OUT") or ".")
        txt = write_report(rep, out)
        print(txt, end="")
        return 0
    try:
        cfg = build_config(args.command, args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"wke {args.command}: invalid config: {e}", file=sys.stderr)
        return 1
    return execute(args.command, cfg, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
