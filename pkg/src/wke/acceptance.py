"""Acceptance criteria evaluated from stored run directories.

Each check re-derives its numbers from the CSV artifacts where one exists, so
an edited time series is caught even if summary.json was left untouched.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

CSTAR = 0.32964
MONOTONE_FLOOR = 1e-8


@dataclass
class Criterion:
    number: int
    name: str
    status: str  # "pass", "fail" or "not run"
    detail: dict = field(default_factory=dict)
    missing: list = field(default_factory=list)


@dataclass
class Run:
    path: Path
    manifest: dict
    summary: dict

    @property
    def key(self) -> tuple[str, str]:
        return self.manifest["subcommand"], self.manifest["scenario"]

    def table(self, name: str) -> dict[str, np.ndarray]:
        with open(self.path / name, newline="") as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], rows[1:]
        cols = {}
        for j, h in enumerate(head):
            try:
                cols[h] = np.array([float(r[j]) for r in body])
            except ValueError:
                cols[h] = np.array([r[j] for r in body])
        return cols

    @property
    def runtime(self) -> float:
        return float(self.manifest.get("runtime_s", 0.0))


def find_runs(paths) -> dict[tuple[str, str], Run]:
    runs: dict = {}
    for p in paths:
        for m in sorted(Path(p).rglob("manifest.json")):
            d = m.parent
            try:
                man = json.loads(m.read_text())
                summ = json.loads((d / "summary.json").read_text())
            except (OSError, json.JSONDecodeError):
                continue
            runs[(man["subcommand"], man["scenario"])] = Run(d, man, summ)
    return runs


def _drift_rate(t, v):
    T = float(t[-1] - t[0]) or 1.0
    return float(np.max(np.abs(v - v[0])) / max(abs(v[0]), 1e-300) / T)


def _monotone_min(run: Run) -> dict:
    cols = run.table("monotone.csv")
    out = {}
    for k, v in cols.items():
        if k == "t" or v.size < 2:
            continue
        scale = max(float(np.max(np.abs(v))), 1e-300)
        out[k] = float(np.min(np.diff(v)) / scale)
    return out


def _c1(r, R):
    s = r["cstar", "default"].summary
    d = {"value": s["value"], "gap": s["gap"], "runtime_s": r["cstar", "default"].runtime}
    ok = abs(s["value"] - CSTAR) <= 1e-4 and s["gap"] <= 1e-5 and d["runtime_s"] < 10
    return ok, d


def _c2(r, R):
    run = r["flux", "kz"]
    t = run.table("flux_n.csv")
    j = t["J_n"]
    ref = float(np.interp(1.0, t["omega"], j))
    spread = float(np.max(np.abs(j - ref)) / abs(ref))
    tol = max(float(run.summary.get("tolerance", 1e-4)), float(np.max(t["err_n"])) / abs(ref))
    span = (float(t["omega"].min()), float(t["omega"].max()))
    ok = ref < 0 and spread <= tol and span[0] <= 0.1 and span[1] >= 10 and run.runtime < 60
    return ok, {"J_n(1)": ref, "rel_spread": spread, "tolerance": tol, "omega_range": span}


def _c3(r, R):
    t = r["flux", "kz"].table("flux_e.csv")
    ratio = np.abs(t["J_e"]) / (t["positive"] + t["negative"])
    ok = t["omega"].size >= 5 and float(ratio.max()) <= 1e-3 and r["flux", "kz"].runtime < 60
    return ok, {"max_ratio": float(ratio.max()), "n_omega": int(t["omega"].size)}


def _c4(r, R):
    t = r["flux", "kz"].table("identity.csv")
    gap = np.abs(t["lhs"] - t["rhs"])
    secs = float(r["flux", "kz"].summary.get("identity_runtime_s", float("inf")))
    ok = t["case"].size >= 20 and bool(np.all(gap <= 1e-8 * t["scale"])) and secs < 10
    rel = float(np.max(gap / np.maximum(t["scale"], 1e-300)))
    return ok, {"cases": int(t["case"].size), "max_rel_gap": rel, "runtime_s": secs}


def _c5(r, R):
    run = r["simulate-weak", "smooth"]
    t = run.table("trajectory.csv")
    dm, de = _drift_rate(t["t"], t["mass"]), _drift_rate(t["t"], t["energy"])
    ok = dm <= 1e-6 and de <= 1e-4 and run.runtime < 300
    return ok, {"mass_drift_rate": dm, "energy_drift_rate": de}


def _c6(r, R):
    worst = {}
    for key, run in sorted(r.items()):
        if (run.path / "monotone.csv").exists():
            m = _monotone_min(run)
            worst["/".join(key)] = min(m.values()) if m else 0.0
    if not worst:
        raise KeyError("monotone.csv")
    ok = all(v >= -MONOTONE_FLOOR for v in worst.values())
    return ok, {"min_scaled_increment": worst}


def _c7(r, R):
    run = r["equilibria", "default"]
    iso = run.table("isotropic.csv")
    two = run.table("two_atom.csv")
    ok = bool(np.all(iso["residual"] == 0.0)) and bool(np.all(two["residual"] > 0)) and run.runtime < 1
    return ok, {"isotropic_max": float(iso["residual"].max()), "two_atom_min": float(two["residual"].min()),
                "runtime_s": run.runtime}


def _c8(r, R):
    run = r["simulate-weak", "two-dirac"]
    t = run.table("trajectory.csv")
    i = int(np.argmin(t["dist_to_dirac"]))
    rs = run.summary.get("r_star")
    ok = float(t["dist_to_dirac"][i]) <= 0.05 and rs == 1.0 and run.runtime < 300
    return ok, {"min_distance": float(t["dist_to_dirac"][i]), "t": float(t["t"][i]), "r_star": rs}


def _c9(r, R):
    lat = r["simulate-lattice", "parity"]
    fam = lat.table("families.csv")
    par = lat.summary["parity"]
    beyond = [f"m{a}" for a in par["empty_families"]]
    parity_max = max((float(np.max(np.abs(fam[c]))) for c in beyond), default=0.0)
    leaks = {}
    for key in (("simulate-weak", "two-dirac"), ("simulate-lattice", "parity")):
        if key in r:
            s = r[key].summary.get("support")
            t = r[key].table("trajectory.csv")
            if s is not None:
                leaks["/".join(key)] = s["max_leak"] / float(t["mass"][0])
    ok = bool(beyond) and parity_max == 0.0 and bool(leaks) and all(v <= 1e-10 for v in leaks.values())
    return ok, {"parity_max_mass": parity_max, "empty_families": par["empty_families"], "relative_leak": leaks}


def _c10(r, R):
    run = r["pulsate", "two-family"]
    s = run.summary
    fam = run.table("families.csv")
    t = fam["t"]
    eps, etas = s["eps"], s["etas"]
    w0, w1 = s["windows"]["0"], s["windows"]["1"]
    plateau = t < w0[1]
    a0 = fam["a0_1"]
    a1 = fam["a1_1"]
    plateau_ok = plateau.sum() >= 3 and bool(np.all(np.abs(a0[plateau] - eps[0]) <= 4 * etas[0]))
    win = (t >= w1[0]) & (t <= w1[1])
    window_ok = win.sum() >= 2 and bool(np.all(a1[win] >= 1 - 4 * etas[1]))
    trans = (t > w0[1]) & (t < w1[0])
    tstat = float(fam["scale_invariant_distance"][trans].max()) if trans.any() else 0.0
    ok = plateau_ok and window_ok and s["plateau_ok"] and tstat > s["threshold"] and run.runtime < 600
    return ok, {"plateau_ok": bool(plateau_ok), "window": w1, "window_ok": bool(window_ok),
                "transition_stat": tstat, "threshold": s["threshold"]}


def _c11(r, R):
    run = r["simulate-mild", "dichotomy"]
    s = run.summary
    a = run.table("trajectory_sigma0.csv")
    b = run.table("trajectory_sigma.csv")
    growth = float(np.max(a["sup_norm"]) / a["sup_norm"][0])
    horizon = float(run.manifest["config"]["horizon"])
    ok = (s["singular"]["verdict"] == "blew_up" and max(growth, s["singular"]["growth"]) >= 1e3
          and s["regular"]["verdict"] == "completed" and float(b["t"][-1]) >= horizon * (1 - 1e-9)
          and run.runtime < 600)
    return ok, {"growth": max(growth, s["singular"]["growth"]), "regular_t_end": float(b["t"][-1]), "nu": s["nu"]}


def _c12(r, R):
    run = r["simulate-weak", "front"]
    f = run.summary["front"]
    t = run.table("trajectory.csv")
    lo, hi = f["window"]
    sel = (t["t"] >= lo) & (t["t"] <= hi)
    r2 = t["front_radius"][sel] ** 2
    a, b = np.polyfit(t["t"][sel], r2, 1)
    dev = float(np.max(np.abs(a * t["t"][sel] + b - r2) / r2))
    ratio = f["halving_ratio"]
    ok = hi / lo >= 10 and dev <= 0.1 and ratio is not None and 2 <= ratio <= 8 and run.runtime < 600
    return ok, {"max_rel_dev": dev, "slope": float(a), "kappa": f["kappa"], "window": [lo, hi], "halving_ratio": ratio}


def _c13(r, R):
    run = r["coagfrag", "selfsim"]
    s = run.summary
    th = run.table("thermal.csv")
    order = float(np.polyfit(np.log(th["h"]), np.log(th["residual"]), 1)[0])
    ok = (order >= 1 and s["step_drift"] <= 1e-8 and s["collapse_relative"] <= 0.1
          and abs(s["exponent"] + 0.5) <= 0.1 and run.runtime < 600)
    return ok, {"thermal_order": order, "step_drift": s["step_drift"], "collapse": s["collapse_relative"],
                "exponent": s["exponent"]}


def _c14(r, R):
    run = r["simulate-mild", "crosscheck"]
    t = run.table("crosscheck.csv")
    ok = t["t"].size > 0 and bool(np.all(t["distance"] <= t["threshold"])) and run.runtime < 300
    return ok, {"max_distance": float(t["distance"].max()), "threshold": float(t["threshold"].min()),
                "samples": int(t["t"].size)}


def _c15(r, R):
    run = r["equilibria", "default"]
    s = run.summary
    ok = bool(s["sampled_stationary"]) and all(s["sampled_stationary"]) and s["counterexample_flagged"] \
        and min(s["sampled_min_delta"]) > 1e-6 and run.runtime < 1
    return ok, {"configs": len(s["sampled_stationary"]), "min_delta": min(s["sampled_min_delta"]),
                "counterexample_flagged": s["counterexample_flagged"]}


CRITERIA = [
    (1, "c* by two routes", _c1, [("cstar", "default")]),
    (2, "J_n negative and frequency independent", _c2, [("flux", "kz")]),
    (3, "J_e vanishes on the power law", _c3, [("flux", "kz")]),
    (4, "atomic flux identity", _c4, [("flux", "kz")]),
    (5, "mass and energy conservation", _c5, [("simulate-weak", "smooth")]),
    (6, "convex functionals nondecreasing", _c6, []),
    (7, "isotropic Dirac stationarity", _c7, [("equilibria", "default")]),
    (8, "long-time Dirac limit", _c8, [("simulate-weak", "two-dirac")]),
    (9, "support and parity invariance", _c9, [("simulate-lattice", "parity"), ("simulate-weak", "two-dirac")]),
    (10, "one pulsation cycle", _c10, [("pulsate", "two-family")]),
    (11, "blow-up dichotomy", _c11, [("simulate-mild", "dichotomy")]),
    (12, "energy-front scaling", _c12, [("simulate-weak", "front")]),
    (13, "coagulation-fragmentation model", _c13, [("coagfrag", "selfsim")]),
    (14, "mild versus weak solver", _c14, [("simulate-mild", "crosscheck")]),
    (15, "non-resonant equilibria", _c15, [("equilibria", "default")]),
]


def evaluate(paths) -> list[Criterion]:
    runs = find_runs(paths)
    out = []
    for num, name, fn, needs in CRITERIA:
        missing = ["/".join(k) for k in needs if k not in runs]
        if num == 6 and not any((run.path / "monotone.csv").exists() for run in runs.values()):
            missing = ["any run with monotone.csv"]
        if missing:
            out.append(Criterion(num, name, "not run", missing=missing))
            continue
        try:
            ok, detail = fn(runs, None)
        except (KeyError, OSError, ValueError, IndexError) as exc:
            out.append(Criterion(num, name, "fail", {"error": f"{type(exc).__name__}: {exc}"}))
            continue
        out.append(Criterion(num, name, "pass" if ok else "fail", detail))
    return out


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def render(report: list[Criterion]) -> str:
    lines = []
    for c in report:
        tag = {"pass": "PASS", "fail": "FAIL", "not run": "NOT RUN"}[c.status]
        extra = f"  missing: {', '.join(c.missing)}" if c.missing else ""
        lines.append(f"{tag:8s} {c.number:2d}  {c.name}{extra}")
    n = sum(c.status == "pass" for c in report)
    lines.append(f"{n}/{len(report)} criteria pass")
    return "\n".join(lines) + "\n"


def write_report(report: list[Criterion], outdir) -> str:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(json.dumps(_clean([asdict(c) for c in report]), indent=2, sort_keys=True) + "\n")
    txt = render(report)
    (outdir / "report.txt").write_text(txt)
    return txt
