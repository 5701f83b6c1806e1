"""Scenario configurations and runners behind the command line.

A runner takes a validated ScenarioConfig and returns (files, summary):
``files`` maps artifact names to their text content and ``summary`` is a
JSON-ready dict.  Runners never touch the filesystem.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import asymptotics as asy
from . import equilibria as eq
from . import fluxes as fx
from . import lattice as lt
from . import mild
from . import weak
from .kernels import KernelParams, convex_catalog, spline_bump
from .measures import Measure, extended_support, weak_distance

COMMANDS = ("simulate-mild", "simulate-weak", "simulate-lattice", "pulsate", "coagfrag", "flux", "cstar",
            "equilibria")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists field-level messages."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


# ------------------------------------------------------------------ shipped scenarios

SCENARIOS: dict[str, dict[str, dict]] = {
    "simulate-weak": {
        "two-dirac": {
            "initial": {"atoms": [[1.0, 0.5], [2.0, 0.5]]},
            "grid": {"omega_cap": 50.0},
            "horizon": 800.0, "samples": 81,
            "diagnostics": ["dirac", "support", "monotone"],
        },
        "smooth": {
            "initial": {"profile": "bump", "lo": 0.5, "hi": 3.0},
            "grid": {"h": 0.05, "omega_cap": 8.0},
            "horizon": 4.0, "samples": 9,
            "diagnostics": ["conservation", "monotone"],
        },
        "front": {
            "initial": {"profile": "lattice-gaussian", "center": 4.0, "mass": 0.05, "condensate": 1.0},
            "grid": {"h": 1.0, "omega_cap": 128.0},
            "horizon": 1000.0, "samples": 50, "sample_spacing": "log",
            "diagnostics": ["front", "monotone"],
            "params": {"front_window": [100.0, 1000.0], "radii": [4.0, 8.0]},
        },
        "delta1": {
            "initial": {"atoms": [[1.0, 1.0]]},
            "grid": {"omega_cap": 4.0},
            "horizon": 10.0, "samples": 11,
            "diagnostics": ["conservation", "monotone"],
        },
    },
    "simulate-lattice": {
        "parity": {
            "initial": {"alpha_max": 2, "masses": [[0, 1, 0.5], [0, 2, 0.25], [1, 1, 0.25]]},
            "grid": {"omega_cap": 8.0},
            "horizon": 30.0, "samples": 61,
            "diagnostics": ["support", "monotone"],
        },
    },
    "pulsate": {
        "two-family": {
            "grid": {"omega_cap": 16.0},
            "horizon": 160.0, "samples": 400,
            "diagnostics": ["monotone"],
            "params": {"alpha_max": 1, "etas": [0.05, 0.04], "c1": 0.1, "c2": 0.2, "b_const": 1.0,
                       "convention": "multiply", "threshold": 0.05},
        },
    },
    "simulate-mild": {
        "dichotomy": {
            "grid": {"kind": "geometric", "w_min": 1e-6, "omega_cap": 4.0, "n": 80, "h_max": 0.05},
            "horizon": 20.0,
            "params": {"mode": "dichotomy", "r": 1.0, "nu0": 0.5, "max_doublings": 4, "max_dt": 0.05,
                       "sigma_regular": 0.5},
        },
        "crosscheck": {
            "initial": {"profile": "bump", "lo": 0.5, "hi": 3.0},
            "sigma": 0.5,
            "grid": {"kind": "uniform", "h": 0.05, "omega_cap": 8.0},
            "horizon": 4.0,
            "params": {"mode": "crosscheck", "max_dt": 0.05, "times": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]},
        },
    },
    "coagfrag": {
        "selfsim": {
            "initial": {"profile": "gaussian", "center": 1.0, "width": 0.05},
            "grid": {"h": 1.0 / 32, "length": 400.0},
            "horizon": 4000.0, "samples": 60,
            "params": {"window": [0.05, 1.5], "fit_window": [0.01, 0.04], "thermal_steps": [1 / 32, 1 / 64, 1 / 128, 1 / 256],
                       "step_dt": 0.01},
        },
    },
    "flux": {
        "kz": {
            "params": {"amplitude": 1.0, "exponent": -2.0 / 3.0, "omegas_n": [0.1, 0.3, 1.0, 3.0, 10.0],
                       "omegas_e": [0.2, 0.5, 1.0, 2.0, 5.0], "n": 16, "n_check": 24, "n_random": 20},
        },
    },
    "cstar": {"default": {}},
    "equilibria": {
        "default": {
            "params": {"masses": [0.5, 1.0, 2.0], "omegas": [0.25, 1.0, 3.0], "count": 4, "n_configs": 5},
        },
    },
}

DEFAULT_SCENARIO = {"simulate-weak": "two-dirac", "simulate-lattice": "parity", "pulsate": "two-family",
                    "simulate-mild": "dichotomy", "coagfrag": "selfsim", "flux": "kz", "cstar": "default",
                    "equilibria": "default"}


@dataclass
class ScenarioConfig:
    command: str
    scenario: str = ""
    initial: dict | None = None
    sigma: float = 0.0
    sigma_schedule: list | None = None
    grid: dict = field(default_factory=dict)
    horizon: float = 1.0
    samples: int = 41
    sample_spacing: str = "linear"
    diagnostics: list = field(default_factory=list)
    output: str = "out"
    seed: int = 0
    tolerance: float | None = None
    threads: int = 1
    mode: str = "interacting"
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ScenarioConfig":
        errs: list[str] = []
        if self.command not in COMMANDS:
            errs.append(f"command: unknown command {self.command!r}")
        elif self.scenario not in SCENARIOS[self.command] and self.scenario != "custom":
            errs.append(f"scenario: {self.scenario!r} is not one of {sorted(SCENARIOS[self.command])} or 'custom'")
        if self.scenario == "custom" and self.initial is None and self.command in (
                "simulate-weak", "simulate-lattice", "simulate-mild"):
            errs.append("initial: custom scenarios need initial data")
        num = {"sigma": self.sigma, "horizon": self.horizon}
        for k, v in num.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v < 0:
                errs.append(f"{k}: must be a finite number >= 0, got {v!r}")
        if not isinstance(self.samples, int) or isinstance(self.samples, bool) or self.samples < 2:
            errs.append(f"samples: must be an integer >= 2, got {self.samples!r}")
        if self.sample_spacing not in ("linear", "log"):
            errs.append("sample_spacing: must be 'linear' or 'log'")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            errs.append(f"seed: must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.threads, int) or isinstance(self.threads, bool) or self.threads < 1:
            errs.append(f"threads: must be a positive integer, got {self.threads!r}")
        if self.tolerance is not None and (not isinstance(self.tolerance, (int, float)) or not 0 < self.tolerance < 1):
            errs.append(f"tolerance: must lie in (0, 1), got {self.tolerance!r}")
        if self.mode not in weak.MODES:
            errs.append(f"mode: must be one of {list(weak.MODES)}")
        if self.sigma_schedule is not None:
            s = self.sigma_schedule
            if not isinstance(s, list) or any(not isinstance(x, (int, float)) or x < 0 for x in s) or \
                    any(b >= a for a, b in zip(s, s[1:])):
                errs.append("sigma_schedule: must be a strictly decreasing list of numbers >= 0")
        if not isinstance(self.grid, dict):
            errs.append("grid: must be an object")
        else:
            for k in ("h", "omega_cap", "w_min", "h_max", "length"):
                v = self.grid.get(k)
                if v is not None and (not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0):
                    errs.append(f"grid.{k}: must be a positive number, got {v!r}")
            if "n" in self.grid and (not isinstance(self.grid["n"], int) or self.grid["n"] < 2):
                errs.append("grid.n: must be an integer >= 2")
        if self.initial is not None and not isinstance(self.initial, dict):
            errs.append("initial: must be an object")
        elif isinstance(self.initial, dict):
            errs += _initial_errors(self.command, self.initial)
        if not isinstance(self.params, dict):
            errs.append("params: must be an object")
        if not isinstance(self.diagnostics, list):
            errs.append("diagnostics: must be a list")
        if errs:
            raise ConfigError(errs)
        return self


PROFILES = ("bump", "gaussian", "lattice-gaussian")


def _initial_errors(command: str, d: dict) -> list[str]:
    errs = []
    if "profile" in d:
        if d["profile"] not in PROFILES:
            errs.append(f"initial.profile: must be one of {list(PROFILES)}")
        return errs
    if command in ("simulate-lattice",):
        if "alpha_max" not in d or not isinstance(d["alpha_max"], int) or d["alpha_max"] < 0:
            errs.append("initial.alpha_max: must be a nonnegative integer")
        for i, row in enumerate(d.get("masses", [])):
            if not (isinstance(row, list) and len(row) == 3 and row[1] >= 1 and row[2] >= 0):
                errs.append(f"initial.masses[{i}]: expected [alpha, k >= 1, mass >= 0]")
        return errs
    for i, a in enumerate(d.get("atoms", [])):
        if not (isinstance(a, list) and len(a) == 2 and all(isinstance(v, (int, float)) for v in a)):
            errs.append(f"initial.atoms[{i}]: expected [position, mass]")
        elif a[0] <= 0 or a[1] < 0:
            errs.append(f"initial.atoms[{i}]: need position > 0 and mass >= 0")
    c = d.get("condensate", 0.0)
    if not isinstance(c, (int, float)) or c < 0:
        errs.append("initial.condensate: must be a number >= 0")
    return errs


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(command: str, raw: dict | None = None) -> ScenarioConfig:
    """Defaults of the named scenario overlaid with raw; validated."""
    raw = dict(raw or {})
    unknown = sorted(set(raw) - set(ScenarioConfig.__dataclass_fields__) - {"command"})
    if unknown:
        raise ConfigError([f"{k}: unknown field" for k in unknown])
    if command not in COMMANDS:
        raise ConfigError([f"command: unknown command {command!r}"])
    name = raw.get("scenario") or DEFAULT_SCENARIO[command]
    base = copy.deepcopy(SCENARIOS[command].get(name, {}))
    merged = _merge(base, {k: v for k, v in raw.items() if k != "command"})
    merged["scenario"] = name
    try:
        cfg = ScenarioConfig(command=command, **merged)
    except TypeError as exc:  # pragma: no cover - guarded by the unknown-field check
        raise ConfigError([str(exc)]) from exc
    return cfg.validate()


# ------------------------------------------------------------------ helpers


def _times(cfg: ScenarioConfig) -> list[float]:
    if cfg.sample_spacing == "log":
        t = np.geomspace(cfg.horizon / 2000.0, cfg.horizon, cfg.samples - 1)
        return [0.0] + [float(x) for x in t]
    return [float(x) for x in np.linspace(0.0, cfg.horizon, cfg.samples)]


def profile_density(prof: dict, h: float, cap: float) -> Measure:
    """Smooth initial data binned on cells of width h up to cap."""
    edges = h * np.arange(0, int(round(cap / h)) + 1)
    c = 0.5 * (edges[:-1] + edges[1:])
    return Measure.from_density(edges, profile_values(prof, c), float(prof.get("condensate", 0.0)))


def profile_values(prof: dict, w):
    w = np.asarray(w, dtype=float)
    kind = prof["profile"]
    if kind == "bump":
        lo, hi = float(prof["lo"]), float(prof["hi"])
        v = np.where((w > lo) & (w < hi), (w - lo) ** 2 * (hi - w) ** 2, 0.0)
    elif kind in ("gaussian", "lattice-gaussian"):
        c = float(prof["center"])
        s = float(prof.get("width", c * c / 4.0))
        v = np.exp(-((w - c) ** 2) / s)
    else:
        raise ConfigError([f"initial.profile: unknown profile {kind!r}"])
    if "mass" in prof and kind != "lattice-gaussian":
        raise ConfigError(["initial.mass: only lattice profiles are normalized"])
    return float(prof.get("scale", 1.0)) * v


def initial_measure(cfg: ScenarioConfig) -> Measure:
    d = cfg.initial or {}
    g = cfg.grid
    if d.get("profile") == "lattice-gaussian":
        h = float(g.get("h", 1.0))
        c = float(d["center"])
        k = h * np.arange(1, int(3 * c / h))
        v = profile_values(d, k)
        v = float(d.get("mass", 1.0)) * v / v.sum()
        return Measure.atoms(list(zip(k, v)), condensate=float(d.get("condensate", 0.0)))
    if "profile" in d:
        return profile_density(d, float(g["h"]), float(g["omega_cap"]))
    return Measure.from_dict(d)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _monotone(times, snaps):
    cat = convex_catalog()
    vals = np.array([[s.integrate(f) for f in cat] for s in snaps])
    files = _csv(["t"] + [f.name for f in cat], [[float(t)] + [float(v) for v in row] for t, row in zip(times, vals)])
    summary = {}
    for j, f in enumerate(cat):
        col = vals[:, j]
        scale = max(float(np.max(np.abs(col))), 1e-300)
        summary[f.name] = float(np.min(np.diff(col)) / scale) if col.size > 1 else 0.0
    return files, summary


def _support_leak(init: Measure, snaps, cap: float) -> dict:
    pts = list(init.positions) + ([0.0] if init.condensate_mass > 0 else [])
    sup = extended_support(pts, omega_cap=cap)
    if sup.dense:
        return {"r_star": float(sup.r_star), "dense": True, "max_leak": 0.0}
    allowed = np.asarray(sup.points, dtype=float)
    leak = 0.0
    for s in snaps:
        x = s.positions
        if x.size == 0:
            continue
        d = np.min(np.abs(x[:, None] - allowed[None, :]), axis=1) if allowed.size else np.full(x.size, np.inf)
        leak = max(leak, float(np.sum(s.masses[d > 1e-9 * np.maximum(1.0, x)])))
    return {"r_star": float(sup.r_star), "dense": False, "max_leak": leak}


def _finite(x):
    if isinstance(x, dict):
        return {str(k): _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _report_summary(rep: weak.RunReport, cfg: ScenarioConfig, init: Measure) -> tuple[dict, dict]:
    files = {"trajectory.csv": rep.to_csv(), "final_measure.json": rep.snapshots[-1].to_json()}
    T = float(rep.times[-1] - rep.times[0]) or 1.0
    m0, e0 = float(rep.mass[0]), float(rep.energy[0])
    s: dict = {
        "lattice": list(rep.meta.get("lattice", ())),
        "r_star": rep.r_star,
        "mass0": m0,
        "energy0": e0,
        "mass_drift_rate": float(np.max(np.abs(rep.mass - m0)) / max(m0, 1e-300) / T),
        "energy_drift_rate": float(np.max(np.abs(rep.energy - e0)) / max(e0, 1e-300) / T),
        "max_defect": float(np.max(rep.defect)) if rep.defect.size else 0.0,
        "min_dist_to_dirac": float(np.min(rep.dist_to_dirac)),
        "t_min_dist": float(rep.times[int(np.argmin(rep.dist_to_dirac))]),
    }
    if "monotone" in cfg.diagnostics:
        files["monotone.csv"], s["monotone"] = _monotone(rep.times, rep.snapshots)
    if "support" in cfg.diagnostics and init.density is None:
        s["support"] = _support_leak(init, rep.snapshots, rep.omega_cap)
    if "dirac" in cfg.diagnostics:
        d = weak.asymptotics_diagnostics(rep, init)
        s["verdict"] = d.verdict
    if "front" in cfg.diagnostics:
        p = cfg.params
        fr = weak.energy_front(rep, tuple(p.get("front_window", (rep.times[1], rep.times[-1]))),
                               radii=p.get("radii", ()))
        hv = [fr.halving[float(r)] for r in p.get("radii", ())]
        s["front"] = {"slope": fr.slope, "intercept": fr.intercept, "max_rel_dev": fr.max_rel_dev,
                      "kappa": fr.kappa, "window": list(p.get("front_window", ())),
                      "halving": {repr(float(k)): v for k, v in fr.halving.items()},
                      "halving_ratio": (hv[1] / hv[0]) if len(hv) == 2 and hv[0] > 0 else None}
    return files, s


# ------------------------------------------------------------------ runners


def run_simulate_weak(cfg: ScenarioConfig):
    init = initial_measure(cfg)
    cap = float(cfg.grid.get("omega_cap", 32.0))
    h = cfg.grid.get("h")
    wc = weak.WeakRunConfig(horizon=cfg.horizon, sample_times=_times(cfg), omega_cap=cap,
                            h=None if h is None else float(h), mode=cfg.mode,
                            alpha=float(cfg.params.get("alpha", 1.0)), beta=float(cfg.params.get("beta", 1.0)),
                            rtol=cfg.tolerance or 1e-10,
                            sigma_schedule=cfg.sigma_schedule or [1.0],
                            diagnostics=True)
    if cfg.sigma_schedule:
        rep = weak.sigma_continuation(init, wc)
    else:
        rep = weak.run_weak(init, KernelParams(cfg.sigma), wc)
    files, s = _report_summary(rep, cfg, init)
    if "cauchy_distances" in rep.meta:
        s["cauchy_distances"] = rep.meta["cauchy_distances"]
    return files, s


def run_simulate_lattice(cfg: ScenarioConfig):
    d = cfg.initial
    cap = float(cfg.grid.get("omega_cap", 8.0))
    st = lt.LatticeState.empty(int(d["alpha_max"]), cap)
    for a, k, m in d["masses"]:
        st.set(int(a), int(k), float(m))
    lat = st.lattice()
    times = _times(cfg)
    out, defects = weak.integrate_lattice(st.masses, lat, KernelParams(0.0), times, rtol=cfg.tolerance or 1e-10)
    snaps = [weak.from_lattice(row, lat) for row in out]
    init = st.to_measure()
    rep = weak.build_report(times, snaps, weak.r_star_of(init, cap), float(2 ** math.ceil(math.log2(cap))), defects,
                            {"lattice": (lat.x0, lat.h, lat.n)})
    files, s = _report_summary(rep, cfg, init)
    files["resonances.csv"] = lt.enumerate_resonances(st).to_csv()
    fam = st.families
    nfam = st.alpha_max + 1
    fm = np.array([np.bincount(fam, weights=row, minlength=nfam) for row in out])
    files["families.csv"] = _csv(["t"] + [f"m{a}" for a in range(nfam)],
                                 [[float(t)] + [float(v) for v in row] for t, row in zip(times, fm)])
    top = int(max(fam[st.masses > 0]))
    s["parity"] = {"max_initial_family": top,
                   "empty_families": list(range(top + 1, nfam)),
                   "max_mass_beyond": float(np.max(np.abs(out[:, fam > top]))) if np.any(fam > top) else 0.0}
    states = []
    for row, t in zip(out, times):
        states.append(lt.LatticeState(st.alpha_max, row, t))
    s["growth_bound_ok"] = lt.family_growth_bound_check(times, states)
    return files, s


def run_pulsate(cfg: ScenarioConfig):
    p = cfg.params
    etas = [float(x) for x in p["etas"]]
    if "eps" in p:
        eps = np.asarray(p["eps"], dtype=float)
        sched = None
    else:
        sched = lt.epsilon_schedule(int(p.get("alpha_max", len(etas) - 1)), etas, c1=float(p.get("c1", 1.0)),
                                    c2=float(p.get("c2", 1.0)), b_const=float(p.get("b_const", 1.0)),
                                    convention=p.get("convention", "multiply"))
        eps = sched.eps
    res = lt.pulsating_run(eps, cfg.horizon, etas, omega_cap=float(cfg.grid.get("omega_cap", 16.0)),
                           n_samples=cfg.samples, threshold=float(p.get("threshold", 0.05)),
                           rtol=cfg.tolerance or 1e-10,
                           t_plateau=float(sched.t_slow[0]) if sched is not None else None)
    rep = res.report
    files = {"trajectory.csv": rep.to_csv()}
    nf = res.a1.shape[1]
    files["families.csv"] = _csv(["t"] + [f"a{a}_1" for a in range(nf)] + ["scale_invariant_distance"],
                                 [[float(t)] + [float(v) for v in row] + [float(d)]
                                  for t, row, d in zip(rep.times, res.a1, res.stat_series)])
    sched_d = {"eps": [float(e) for e in eps], "etas": etas}
    if sched is not None:
        sched_d.update(t_slow=[float(x) for x in sched.t_slow], caps=[float(x) for x in sched.caps],
                       convention=sched.convention)
    files["schedule.json"] = _dumps(sched_d)
    s = {"eps": sched_d["eps"], "etas": etas, "windows": {str(k): list(v) for k, v in res.windows.items()},
         "plateau_ok": res.plateau_ok, "window_ok": {str(k): v for k, v in res.window_ok.items()},
         "transition_stat": res.transition_stat, "plateau_stat": res.plateau_stat,
         "threshold": float(p.get("threshold", 0.05)), "max_defect": res.defect,
         "final_a1": [float(v) for v in res.a1[-1]]}
    if "monotone" in cfg.diagnostics:
        files["monotone.csv"], s["monotone"] = _monotone(rep.times, rep.snapshots)
    return files, s


def mild_grid(g: dict) -> mild.MildGrid:
    if g.get("kind", "uniform") == "geometric":
        return mild.MildGrid.geometric(float(g["w_min"]), float(g["omega_cap"]), int(g["n"]),
                                       None if g.get("h_max") is None else float(g["h_max"]))
    return mild.MildGrid.uniform(float(g["h"]), float(g["omega_cap"]))


def _f_from_profile(prof: dict):
    def fn(w):
        w = np.asarray(w, dtype=float)
        safe = np.where(w > 0, w, 1.0)
        return np.where(w > 0, profile_values(prof, w) / np.sqrt(safe), 0.0)

    return fn


def run_simulate_mild(cfg: ScenarioConfig):
    p = cfg.params
    grid = mild_grid(cfg.grid)
    mode = p.get("mode", "single")
    kw = {"max_dt": float(p["max_dt"])} if "max_dt" in p else {}
    files: dict = {}
    s: dict = {"mode": mode, "nodes": int(grid.nodes.size), "spacing": grid.spacing}
    if mode == "dichotomy":
        search = mild.blowup_search(grid, cfg.horizon, r=float(p.get("r", 1.0)), nu0=float(p.get("nu0", 1.0)),
                                    max_doublings=int(p.get("max_doublings", 8)), **kw)
        files["trajectory_sigma0.csv"] = search.run.to_csv()
        sig = float(p.get("sigma_regular", 0.5))
        st = mild.MildState.from_f(mild.concentrated_profile(search.nu, float(p.get("r", 1.0))), grid, KernelParams(sig))
        reg = mild.run_mild(st, cfg.horizon, **kw)
        files["trajectory_sigma.csv"] = reg.to_csv()
        s.update(nu=search.nu, tried=[list(t) for t in search.tried],
                 singular={"sigma": 0.0, "verdict": search.run.verdict, "growth": search.run.growth,
                           "t_end": search.run.t_end, "t_blowup": search.run.t_blowup},
                 regular={"sigma": sig, "verdict": reg.verdict, "growth": reg.growth, "t_end": reg.t_end,
                          "horizon": cfg.horizon})
        return files, s
    if cfg.initial is None or "profile" not in cfg.initial:
        raise ConfigError(["initial: the mild solver needs a smooth profile"])
    st = mild.MildState.from_f(_f_from_profile(cfg.initial), grid, KernelParams(cfg.sigma))
    times = [float(t) for t in p.get("times", _times(cfg)[1:])]
    run = mild.run_mild(st, cfg.horizon, sample_times=times, **kw)
    files["trajectory.csv"] = run.to_csv()
    rows = run.rows
    m0 = rows[0][1]
    e0 = rows[0][2]
    T = max(run.t_end, 1e-300)
    s.update(verdict=run.verdict, t_end=run.t_end, growth=run.growth, a_min=run.a_min,
             mass_drift_rate=max(abs(r[1] - m0) for r in rows) / max(m0, 1e-300) / T,
             energy_drift_rate=max(abs(r[2] - e0) for r in rows) / max(e0, 1e-300) / T)
    if mode == "crosscheck":
        h = grid.spacing
        cap = float(grid.nodes[-1])
        edges = h * np.arange(0, int(round(cap / h)) + 1)
        cells = 0.5 * (edges[:-1] + edges[1:])
        mu = Measure.from_density(edges, profile_values(cfg.initial, cells))
        wc = weak.WeakRunConfig(horizon=cfg.horizon, sample_times=times, omega_cap=cap, h=h, diagnostics=False,
                                rtol=cfg.tolerance or 1e-10)
        rep = weak.run_weak(mu, KernelParams(cfg.sigma), wc)
        dt = max(float(np.max(np.diff([r[0] for r in rows]))), 0.0)
        thr = 5.0 * max(h, dt)
        out = []
        for i, t in enumerate(rep.times):
            if t == 0.0 or t not in run.snapshots:
                continue
            d = weak_distance(run.snapshots[t].to_measure(), rep.snapshots[i], omega_cap=cap)
            out.append((float(t), d, thr))
        files["crosscheck.csv"] = _csv(["t", "distance", "threshold"], out)
        s["crosscheck"] = {"h": h, "dt_max": dt, "threshold": thr, "max_distance": max(o[1] for o in out),
                           "times": [o[0] for o in out]}
    return files, s


def run_coagfrag(cfg: ScenarioConfig):
    p = cfg.params
    g = cfg.grid
    h = float(g.get("h", 1 / 32))
    prof = cfg.initial or {"profile": "gaussian", "center": 1.0, "width": 0.05}
    state = asy.CoagFragState.from_function(lambda w: profile_values(prof, w), h, float(g.get("length", 400.0)))
    run = asy.run_coagfrag(state, cfg.horizon, n_samples=cfg.samples, rtol=cfg.tolerance or 1e-8)
    col = asy.selfsim_collapse(run, tuple(p.get("window", (0.05, 1.5))), tuple(p.get("fit_window", (0.01, 0.04))))
    steps, res, order = asy.thermal_convergence(steps=tuple(p.get("thermal_steps", (1 / 32, 1 / 64, 1 / 128, 1 / 256))))
    drift = asy.first_moment_step_drift(state, float(p.get("step_dt", 0.01)))
    files = {"trajectory.csv": run.to_csv(), "collapse.json": col.to_json()}
    files["thermal.csv"] = _csv(["h", "residual"], [(float(a), float(b)) for a, b in zip(steps, res)])
    s = {"collapse_relative": col.relative_distance, "exponent": col.exponent, "fit_window": list(col.exponent_window),
         "thermal_order": order, "thermal_residuals": [float(r) for r in res], "step_drift": drift,
         "run_drift": run.moment_drift, "trailing_times": col.times}
    return files, s


def _random_three_atoms(rng):
    x = np.sort(rng.uniform(0.2, 3.0, 3))
    m = rng.uniform(0.2, 1.5, 3)
    c = float(rng.uniform(0.5, 3.0))
    f = spline_bump(c, float(rng.uniform(0.1, 0.45)) * c)
    return Measure.atoms(list(zip(x, m))), f


def run_flux(cfg: ScenarioConfig):
    p = cfg.params
    g = fx.PowerLaw(float(p.get("amplitude", 1.0)), float(p.get("exponent", -2.0 / 3.0)))
    n, nc = int(p.get("n", 16)), int(p.get("n_check", 24))
    jn = [(float(w), fx.particle_flux(g, float(w), n, nc)) for w in p.get("omegas_n", [1.0])]
    je = [(float(w), fx.energy_flux(g, float(w), n, nc, split_sign=True)) for w in p.get("omegas_e", [1.0])]
    ref = next((v.value for w, v in jn if w == 1.0), jn[0][1].value)
    files = {"flux_n.csv": _csv(["omega", "J_n", "err_n"], [(w, v.value, v.error) for w, v in jn]),
             "flux_e.csv": _csv(["omega", "J_e", "err_e", "positive", "negative"],
                                [(w, v.value, v.error, v.positive, v.negative) for w, v in je])}
    rng = np.random.default_rng(cfg.seed)
    t_ident = time.perf_counter()
    ident = []
    for i in range(int(p.get("n_random", 20))):
        mu, f = _random_three_atoms(rng)
        x1, x2, x3, r = fx.atomic_triples(mu)
        knots = fx._knots_of(f)
        scale = fx.identity_scale(mu, f, knots)
        lhs, rhs, gap = fx.flux_identity_check(mu, f, knots=knots)
        ident.append((i, lhs, rhs, gap, scale))
    t_ident = time.perf_counter() - t_ident
    files["identity.csv"] = _csv(["case", "lhs", "rhs", "gap", "scale"], ident)
    s = {"jn_at_1": ref, "jn": {repr(w): v.value for w, v in jn}, "jn_err": max(v.error for _, v in jn),
         "jn_max_rel_spread": max(abs(v.value - ref) for _, v in jn) / abs(ref),
         "je_ratio": {repr(w): abs(v.value) / (v.positive + v.negative) for w, v in je},
         "identity_max_rel_gap": max((r[3] / r[4] if r[4] > 0 else r[3]) for r in ident),
         "tolerance": cfg.tolerance or 1e-4, "identity_runtime_s": t_ident}
    return files, s


def run_cstar(cfg: ScenarioConfig):
    rep = fx.cstar(max_gap=cfg.tolerance or 1e-5)
    d = rep.to_dict()
    return {"cstar.json": _dumps(d)}, d


def run_equilibria(cfg: ScenarioConfig):
    p = cfg.params
    iso = []
    for m in p.get("masses", [1.0]):
        for w0 in p.get("omegas", [1.0]):
            iso.append((float(m), float(w0), eq.isotropic_residual(float(m), float(w0))))
    two = []
    for (x1, x2) in p.get("two_atoms", [[1.0, 2.0], [0.5, 3.0]]):
        mu = Measure.atoms([(x1, 0.5), (x2, 0.5)])
        two.append((float(x1), float(x2), max(abs(eq.weak_rhs_atomic(mu, f)) for f in eq.catalog())))
    configs = []
    rng = np.random.default_rng(cfg.seed)
    for _ in range(int(p.get("n_configs", 5))):
        c = eq.sample_nonresonant(int(p.get("count", 4)), seed=int(rng.integers(2**31)), tol=eq.DELTA_TOL)
        t = eq.resonance_defect(c)
        configs.append((c, t))
    ce = eq.resonant_counterexample()
    ct = eq.resonance_defect(ce)
    files = {
        "isotropic.csv": _csv(["mass", "omega0", "residual"], iso),
        "two_atom.csv": _csv(["x1", "x2", "residual"], two),
        "configs.json": _dumps([json.loads(c.to_json()) for c, _ in configs]),
        "counterexample.json": ce.to_json(),
    }
    s = {"isotropic_max": max(r[2] for r in iso), "two_atom_min": min(r[2] for r in two),
         "sampled_stationary": [t.stationary for _, t in configs],
         "sampled_min_delta": [float(np.min(np.abs(t.delta[~t.trivial]))) for _, t in configs],
         "counterexample_flagged": (not ct.stationary) and len(ct.resonant()) > 0,
         "counterexample_terms": len(eq.collision_terms(ce))}
    return files, s


def _dumps(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True) + "\n"


RUNNERS = {"simulate-weak": run_simulate_weak, "simulate-lattice": run_simulate_lattice, "pulsate": run_pulsate,
           "simulate-mild": run_simulate_mild, "coagfrag": run_coagfrag, "flux": run_flux, "cstar": run_cstar,
           "equilibria": run_equilibria}


def run(cfg: ScenarioConfig):
    files, summary = RUNNERS[cfg.command](cfg)
    return files, _finite(summary)
