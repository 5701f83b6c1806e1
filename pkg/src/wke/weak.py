"""Measure-valued solutions on affine energy lattices with an explicit condensate atom.

Atomic data are evolved by exact resonance bookkeeping on the lattice
generated by their positions; smooth data are first split onto a uniform
lattice (mass and first moment preserved).  Index 0 of a lattice with
x0 = 0 is the condensate.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _backend
from .kernels import KernelParams, TestFunction, coarsening_bump
from .measures import (
    Measure,
    _integer_coordinates,
    extended_support,
    test_integrals,
    total_energy,
    total_mass,
    weak_distance,
)


class MassBalanceError(RuntimeError):
    pass


class NonCauchyError(RuntimeError):
    pass


MODES = ("interacting", "noninteracting", "general")


def mode_weights(mode: str, alpha: float = 1.0, beta: float = 1.0) -> tuple[float, float]:
    """Condensate boundary weights (alpha for the output slot, beta for input slots)."""
    if mode == "interacting":
        return 1.0, 1.0
    if mode == "noninteracting":
        return 0.0, 0.0
    if mode == "general":
        return float(alpha), float(beta)
    raise ValueError(f"unknown interaction mode {mode!r}")


# ------------------------------------------------------------------ lattice


@dataclass(frozen=True)
class Lattice:
    x0: float
    h: float
    n: int

    @property
    def points(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n)


def lattice_for(mu: Measure, omega_cap: float, h: float | None = None) -> Lattice:
    """Smallest affine lattice closed under resonances that carries mu."""
    has_zero = mu.condensate_mass > 0
    if mu.density is not None or h is not None:
        if h is None:
            raise ValueError("smooth data need an explicit lattice spacing h")
        x0 = 0.0 if has_zero else h
        if mu.positions.size:
            k = mu.positions / h
            if np.any(np.abs(k - np.round(k)) > 1e-9 * np.maximum(1, k)):
                raise ValueError("atoms are not on the requested lattice")
        return Lattice(x0, h, int(math.floor((omega_cap - x0) / h + 1e-9)) + 1)
    pts = mu.positions
    if pts.size == 0:
        return Lattice(0.0, 1.0, 1)
    if has_zero:
        pts = np.concatenate([[0.0], pts])
    coords = _integer_coordinates(pts)
    if coords is None:
        raise ValueError("atom positions have irrational ratios; no finite lattice")
    base, unit, _ = coords
    if pts.size == 1 or (not has_zero and mu.positions.size == 1):
        unit = float(mu.positions[0]) if not has_zero else float(mu.positions[0])
    r = base - math.floor(base / unit + 1e-9) * unit
    if has_zero:
        x0 = 0.0
    else:
        x0 = r if r > 1e-12 * unit else unit
    n = int(math.floor((omega_cap - x0) / unit + 1e-9)) + 1
    return Lattice(x0, unit, max(n, 1))


def to_lattice(mu: Measure, lat: Lattice) -> np.ndarray:
    m = np.zeros(lat.n)
    if mu.condensate_mass > 0:
        if lat.x0 != 0.0:
            raise ValueError("lattice has no condensate node")
        m[0] += mu.condensate_mass
    for x, w in zip(mu.positions, mu.masses):
        k = int(round((x - lat.x0) / lat.h))
        if k < 0 or k >= lat.n or abs(lat.x0 + k * lat.h - x) > 1e-9 * max(1.0, x):
            raise ValueError(f"atom at {x} is not a lattice point below the cap")
        m[k] += w
    if mu.density is not None:
        c = 0.5 * (mu.density.edges[:-1] + mu.density.edges[1:])
        cm = mu.density.cell_masses
        s = (c - lat.x0) / lat.h
        k = np.floor(s).astype(int)
        frac = s - k
        lo = lat.x0 if lat.x0 > 0 else lat.h
        if np.any((c < lo) & (cm > 0)) or np.any((k + 1 >= lat.n) & (cm > 0)):
            raise ValueError("density support is not inside the lattice range")
        np.add.at(m, k, cm * (1 - frac))
        np.add.at(m, k + 1, cm * frac)
    return m


def from_lattice(m: np.ndarray, lat: Lattice) -> Measure:
    x = lat.points
    cond = 0.0
    if lat.x0 == 0.0:
        cond = float(m[0])
        x, m = x[1:], m[1:]
    keep = m > 0
    return Measure(cond, x[keep], m[keep])


def _clip(m: np.ndarray) -> np.ndarray:
    """Remove negative round-off and return its deficit to the largest atom."""
    neg = m < 0
    if not np.any(neg):
        return m
    m = m.copy()
    deficit = m[neg].sum()
    m[neg] = 0.0
    m[int(np.argmax(m))] += deficit
    return m


# ------------------------------------------------------------------ dynamics


def weak_rhs(m: np.ndarray, lat: Lattice, params: KernelParams, mode: str = "interacting", alpha=1.0, beta=1.0):
    a, b = mode_weights(mode, alpha, beta)
    dm, defect = _backend.collision_rates(m, lat.x0, lat.h, params.sigma, a, b)
    return dm, defect


def integrate_lattice(m0, lat, params, times, mode="interacting", alpha=1.0, beta=1.0, rtol=1e-10, atol=None):
    """Integrate the lattice system and return masses at the requested times."""
    times = np.asarray(times, dtype=float)
    mass0 = float(np.sum(m0))
    if atol is None:
        atol = 1e-14 * max(mass0, 1e-300)
    wa, wb = mode_weights(mode, alpha, beta)
    defects: list[float] = []

    def f(_t, y):
        dm, d = _backend.collision_rates(y, lat.x0, lat.h, params.sigma, wa, wb)
        return dm

    if times[-1] <= 0:
        return np.tile(m0, (times.size, 1)), defects
    sol = solve_ivp(f, (0.0, float(times[-1])), np.asarray(m0, dtype=float), method="RK45",
                    t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"lattice integration failed: {sol.message}")
    out = np.array([_clip(col) for col in sol.y.T])
    for row in out:
        defects.append(_backend.collision_rates(row, lat.x0, lat.h, params.sigma, wa, wb)[1])
    drift = np.max(np.abs(out.sum(axis=1) - mass0)) if out.size else 0.0
    if drift > 10 * max(rtol, 1e-12) * max(mass0, 1e-300) * max(1.0, times[-1]):
        raise MassBalanceError(f"mass drift {drift:.3e} exceeds tolerance")
    return out, defects


def weak_step(mu: Measure, params: KernelParams, dt: float, mode: str = "interacting",
              alpha: float = 1.0, beta: float = 1.0, omega_cap: float | None = None,
              h: float | None = None) -> Measure:
    """Advance mu by dt on its resonance lattice."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    hi = mu.support_hull()[1]
    cap = omega_cap if omega_cap is not None else max(4.0 * hi, 1.0)
    lat = lattice_for(mu, cap, h)
    m0 = to_lattice(mu, lat)
    out, _ = integrate_lattice(m0, lat, params, [0.0, dt], mode, alpha, beta)
    return from_lattice(out[-1], lat)


# ------------------------------------------------------------------ reports


@dataclass
class WeakRunConfig:
    horizon: float = 1.0
    n_samples: int = 41
    sample_times: list | None = None
    omega_cap: float = 32.0
    h: float | None = None
    mode: str = "interacting"
    alpha: float = 1.0
    beta: float = 1.0
    sigma_schedule: list = field(default_factory=lambda: [2.0**-k for k in range(11)])
    rtol: float = 1e-10
    diagnostics: bool = True

    def __post_init__(self) -> None:
        s = list(self.sigma_schedule)
        if any(x < 0 for x in s) or any(b >= a for a, b in zip(s, s[1:])):
            raise ValueError("sigma_schedule must be strictly decreasing and nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.horizon < 0 or self.n_samples < 2:
            raise ValueError("horizon must be >= 0 and n_samples >= 2")

    def times(self) -> np.ndarray:
        if self.sample_times is not None:
            t = np.asarray(self.sample_times, dtype=float)
            return np.unique(np.concatenate([[0.0], t]))
        return np.linspace(0.0, self.horizon, self.n_samples)


@dataclass
class RunReport:
    times: np.ndarray
    snapshots: list
    mass: np.ndarray
    energy: np.ndarray
    condensate: np.ndarray
    dist_to_dirac: np.ndarray
    omega_dirac: np.ndarray
    spread: np.ndarray
    front_radius: np.ndarray
    defect: np.ndarray
    r_star: float = 0.0
    omega_cap: float = 1.0
    meta: dict = field(default_factory=dict)

    COLUMNS = ("t", "mass", "energy", "condensate_mass", "dist_to_dirac", "omega_dirac", "spread", "front_radius", "defect")

    def rows(self):
        for i in range(self.times.size):
            yield (self.times[i], self.mass[i], self.energy[i], self.condensate[i], self.dist_to_dirac[i],
                   self.omega_dirac[i], self.spread[i], self.front_radius[i], self.defect[i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows():
            w.writerow([repr(float(v)) for v in r])
        return buf.getvalue()

    def integrals(self, f: TestFunction) -> np.ndarray:
        return np.array([s.integrate(f) for s in self.snapshots])


def energy_median(mu: Measure) -> float:
    """Radius holding half the energy, with each atom's energy centred on its position."""
    e = total_energy(mu)
    if e <= 0:
        return 0.0
    xs, ws = [mu.positions], [mu.masses * mu.positions]
    if mu.density is not None:
        x, w = mu.density.quad_nodes()
        xs.append(x)
        ws.append(w * x)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    o = np.argsort(x, kind="stable")
    x, w = x[o], w[o]
    c = np.cumsum(w) - 0.5 * w
    return float(np.interp(0.5 * e, c, x))


def concentration(mu: Measure) -> tuple[float, float]:
    """Best (Omega, eta) with mass of (Omega(1-eta), Omega(1+eta)) >= M(1-eta)."""
    M = total_mass(mu)
    xs, ws = [mu.positions], [mu.masses]
    if mu.density is not None:
        c = 0.5 * (mu.density.edges[:-1] + mu.density.edges[1:])
        xs.append(c)
        ws.append(mu.density.cell_masses)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    if x.size == 0 or M <= 0:
        return 0.0, 1.0
    o = np.argsort(x)
    x, w = x[o], w[o]
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cand = x[w >= 1e-3 * w.max()]
    lo = np.zeros(cand.size)
    hi = np.ones(cand.size)
    for _ in range(50):
        eta = 0.5 * (lo + hi)
        a = np.searchsorted(x, cand * (1 - eta), side="right")
        b = np.searchsorted(x, cand * (1 + eta), side="left")
        ok = cw[b] - cw[a] >= M * (1 - eta)
        hi = np.where(ok, eta, hi)
        lo = np.where(ok, lo, eta)
    k = int(np.argmin(hi))
    return float(cand[k]), float(hi[k])


def build_report(times, snaps, r_star: float, omega_cap: float, defects=None, meta=None) -> RunReport:
    n = len(snaps)
    mass = np.array([total_mass(s) for s in snaps])
    energy = np.array([total_energy(s) for s in snaps])
    cond = np.array([s.condensate_mass for s in snaps])
    dist = np.zeros(n)
    om = np.zeros(n)
    sp = np.zeros(n)
    fr = np.zeros(n)
    for i, s in enumerate(snaps):
        dist[i] = weak_distance(s, Measure.dirac(r_star, mass[i]) if mass[i] > 0 else Measure(), omega_cap=omega_cap)
        om[i], sp[i] = concentration(s)
        fr[i] = energy_median(s)
    d = np.zeros(n) if defects is None else np.asarray(defects, dtype=float)
    return RunReport(np.asarray(times, dtype=float), list(snaps), mass, energy, cond, dist, om, sp, fr, d,
                     r_star, omega_cap, dict(meta or {}))


def _pow2_cap(x: float) -> float:
    return float(2.0 ** max(0, math.ceil(math.log2(max(x, 1.0)))))


def r_star_of(mu: Measure, omega_cap: float) -> float:
    if mu.density is not None:
        return 0.0
    pts = list(mu.positions)
    if mu.condensate_mass > 0:
        pts.append(0.0)
    if not pts:
        return 0.0
    return extended_support(pts, omega_cap=max(omega_cap, 1.0)).r_star


def run_weak(g_in: Measure, params: KernelParams, config: WeakRunConfig) -> RunReport:
    lat = lattice_for(g_in, config.omega_cap, config.h)
    m0 = to_lattice(g_in, lat)
    times = config.times()
    out, defects = integrate_lattice(m0, lat, params, times, config.mode, config.alpha, config.beta, config.rtol)
    snaps = [from_lattice(row, lat) for row in out]
    cap = _pow2_cap(config.omega_cap)
    if not config.diagnostics:
        r = RunReport(times, snaps, out.sum(axis=1), out @ lat.points, out[:, 0] if lat.x0 == 0 else np.zeros(times.size),
                      *(np.zeros(times.size) for _ in range(4)), np.asarray(defects), 0.0, cap)
        r.meta.update(lattice=(lat.x0, lat.h, lat.n), sigma=params.sigma, mode=config.mode)
        return r
    rs = r_star_of(g_in, config.omega_cap)
    rep = build_report(times, snaps, rs, cap, defects, {"lattice": (lat.x0, lat.h, lat.n), "sigma": params.sigma,
                                                         "mode": config.mode})
    return rep


def sigma_continuation(g_in: Measure, config: WeakRunConfig, slack: float = 1e-9) -> RunReport:
    """Runs along the sigma schedule; consecutive trajectories must approach each other."""
    reports = [run_weak(g_in, KernelParams(s), config) for s in config.sigma_schedule]
    gaps = []
    for a, b in zip(reports, reports[1:]):
        gaps.append(max(weak_distance(x, y, omega_cap=a.omega_cap) for x, y in zip(a.snapshots, b.snapshots)))
    for g1, g2 in zip(gaps, gaps[1:]):
        if g2 > g1 + slack:
            raise NonCauchyError(f"sigma-runs stopped approaching each other: {gaps}")
    final = reports[-1]
    final.meta["cauchy_distances"] = gaps
    final.meta["sigma_schedule"] = list(config.sigma_schedule)
    return final


# ------------------------------------------------------------------ diagnostics


def tightness_check(report: RunReport, r: float, eta: float) -> bool:
    """Mass within R/eta stays above (1-eta) times the initial mass within R."""
    big_l = r / eta
    base = report.snapshots[0].mass_in(0.0, r)
    return all(s.mass_in(0.0, big_l) >= (1 - eta) * base - 1e-12 * max(base, 1.0) for s in report.snapshots)


def monotone_functional_check(report_or_values, f: TestFunction | None = None, floor: float = 1e-8) -> bool:
    vals = report_or_values.integrals(f) if f is not None else np.asarray(report_or_values, dtype=float)
    if vals.size < 2:
        return True
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    return bool(np.min(np.diff(vals)) >= -floor * scale)


@dataclass
class AsymptoticsResult:
    r_star: float
    dist: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    verdict: str
    detail: dict = field(default_factory=dict)


def asymptotics_diagnostics(report: RunReport, g_in: Measure | None = None, cond_frac: float = 1e-6,
                            sustain: float = 0.1, eta_small: float = 0.1) -> AsymptoticsResult:
    g0 = g_in if g_in is not None else report.snapshots[0]
    rs = r_star_of(g0, report.omega_cap)
    t = report.times
    horizon = t[-1] - t[0]
    M = report.mass[0]
    dist = np.array([weak_distance(s, Measure.dirac(rs, M), omega_cap=report.omega_cap) for s in report.snapshots])
    cond = report.condensate
    verdict = "inconclusive"
    detail: dict = {}
    pos = np.flatnonzero(cond > cond_frac * M)
    if pos.size and np.all(cond[pos[0]:] > cond_frac * M) and t[-1] - t[pos[0]] >= sustain * horizon:
        inc = np.diff(cond[pos[0]:])
        if np.all(inc >= -1e-10 * M):
            verdict = "i"
            detail["t_star"] = float(t[pos[0]])
    elif np.all(cond == 0):
        half = t >= t[0] + 0.5 * horizon
        if rs > 0 and dist[-1] < dist[0] and dist[-1] <= 0.1 * M:
            verdict = "dirac"
        elif rs == 0 and np.mean(report.spread[half] <= eta_small) >= 0.9:
            verdict = "ii"
    detail["final_dist"] = float(dist[-1])
    return AsymptoticsResult(rs, dist, report.omega_dirac, report.spread, verdict, detail)


@dataclass
class FrontResult:
    times: np.ndarray
    radius: np.ndarray
    slope: float
    intercept: float
    max_rel_dev: float
    kappa: float
    halving: dict


def halving_time(report: RunReport, r: float) -> float:
    """First time at which the integral against the coarsening bump at scale r halves."""
    f = coarsening_bump(r)
    v = report.integrals(f)
    target = 0.5 * v[0]
    idx = np.flatnonzero(v <= target)
    if idx.size == 0:
        return math.inf
    i = int(idx[0])
    if i == 0:
        return float(report.times[0])
    t0, t1, v0, v1 = report.times[i - 1], report.times[i], v[i - 1], v[i]
    return float(t0 + (target - v0) * (t1 - t0) / (v1 - v0))


def energy_front(report: RunReport, window: tuple[float, float] | None = None, radii=()) -> FrontResult:
    """Energy-median radius, affine fit of R^2 in t, and halving times of the coarsening functional."""
    t = report.times
    r = report.front_radius
    sel = np.ones(t.size, dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    if sel.sum() >= 2:
        a, b = np.polyfit(t[sel], r[sel] ** 2, 1)
        fit = a * t[sel] + b
        dev = float(np.max(np.abs(fit - r[sel] ** 2) / np.maximum(r[sel] ** 2, 1e-300)))
    else:
        a, b, dev = 0.0, float(r[0] ** 2), 0.0
    m_cond = float(report.condensate[0]) if report.condensate[0] > 0 else float(report.mass[0])
    kappa = a / (2.0 * m_cond) if m_cond > 0 else math.nan
    halv = {float(x): halving_time(report, float(x)) for x in radii}
    return FrontResult(t, r, float(a), float(b), dev, float(kappa), halv)


@dataclass
class OffDiagonalResult:
    radii: np.ndarray
    offdiag: np.ndarray
    functional: np.ndarray
    b_const: float
    bounds: np.ndarray
    ok: bool


def _weighted_triples(snap: Measure, r: float, rho: float):
    x = np.concatenate([[0.0], snap.positions]) if snap.condensate_mass > 0 else snap.positions.copy()
    m = np.concatenate([[snap.condensate_mass], snap.masses]) if snap.condensate_mass > 0 else snap.masses.copy()
    if snap.density is not None:
        xx, ww = snap.density.quad_nodes()
        x, m = np.concatenate([x, xx]), np.concatenate([m, ww])
    a = x <= r
    x, m = x[a], m[a]
    if x.size == 0:
        return 0.0, 0.0
    s = np.sort(np.stack(np.meshgrid(x, x, x, indexing="ij")), axis=0)
    wm, w0, wp = s[0], s[1], s[2]
    mm = m[:, None, None] * m[None, :, None] * m[None, None, :]
    off = np.abs(w0 - wm) > rho * w0
    offmass = float(np.sum(mm[off]))
    half = (wp <= r / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(w0 > 0, (w0 / np.where(wp > 0, wp, 1.0)) ** 1.5 * ((w0 - wm) / np.where(w0 > 0, w0, 1.0)) ** 2, 0.0)
    func = float(np.sum((mm * val)[half]))
    return offmass, func


def offdiagonal_mass_diagnostic(report: RunReport, radii, rho: float) -> OffDiagonalResult:
    """Time-integrated triple mass off the diagonal, with the dyadic bound from the weighted functional."""
    radii = np.asarray(radii, dtype=float)
    t = report.times
    offs, funcs = [], []
    for r in radii:
        o, fvals = zip(*(_weighted_triples(s, float(r), rho) for s in report.snapshots))
        offs.append(np.trapezoid(o, t))
        # the functional at scale 2r covers the cube [0, r]
        fvals2 = [_weighted_triples(s, 2 * float(r), rho)[1] for s in report.snapshots]
        funcs.append(np.trapezoid(fvals2, t))
    offs, funcs = np.array(offs), np.array(funcs)
    mass = float(report.mass[0])
    b_const = float(np.max(funcs / (2 * radii * mass))) if mass > 0 else 0.0
    b = 1.0 / (1.0 - rho)
    bounds = 2 * b_const * b**3.5 * mass * radii / (rho**2 * (math.sqrt(b) - 1) ** 2)
    ok = bool(np.all(offs <= bounds * (1 + 1e-9) + 1e-300))
    return OffDiagonalResult(radii, offs, funcs, b_const, bounds, ok)
