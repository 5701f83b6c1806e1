"""Dyadic lattice families, resonance tables and the pulsating construction.

Points of family alpha >= 1 are the odd multiples of 2^-alpha; family 0 is the
positive integers.  Everything is computed on the integer lattice obtained by
multiplying positions by 2^alpha_max, so resonance closure is exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import _backend
from .measures import Measure, weak_distance
from .weak import Lattice, RunReport, _clip, build_report


class InfeasibleSchedule(ValueError):
    pass


class WindowDetectionError(RuntimeError):
    pass


def theta(alpha: int, k: int) -> int:
    return k if alpha == 0 else 2 * k - 1


def x_alpha(alpha: int, k: int) -> float:
    return 2.0 ** (-alpha) * theta(alpha, k)


@dataclass(frozen=True)
class DyadicPoint:
    alpha: int
    k: int

    @property
    def position(self) -> float:
        return x_alpha(self.alpha, self.k)

    def index(self, alpha_max: int) -> int:
        """Integer coordinate on 2^-alpha_max Z."""
        if self.alpha > alpha_max:
            raise ValueError("family above alpha_max")
        return theta(self.alpha, self.k) * 2 ** (alpha_max - self.alpha)


def family_of_index(n, alpha_max: int):
    """Family of integer coordinate n on 2^-alpha_max Z."""
    n = np.asarray(n, dtype=np.int64)
    tz = np.zeros(n.shape, dtype=np.int64)
    k = n.copy()
    for _ in range(alpha_max):
        even = (k % 2 == 0) & (tz < alpha_max)
        k = np.where(even, k // 2, k)
        tz = tz + even
    return alpha_max - tz


def rank_of_index(n, alpha_max: int):
    n = np.asarray(n, dtype=np.int64)
    a = family_of_index(n, alpha_max)
    q = n // (2 ** (alpha_max - a))
    return np.where(a == 0, q, (q + 1) // 2)


@dataclass
class LatticeState:
    """Masses on 2^-alpha_max {1, ..., n_max}, stored by integer coordinate."""

    alpha_max: int
    masses: np.ndarray
    t: float = 0.0

    @classmethod
    def empty(cls, alpha_max: int, omega_cap: float) -> "LatticeState":
        n = int(math.floor(omega_cap * 2**alpha_max + 1e-9))
        return cls(alpha_max, np.zeros(n))

    @property
    def h(self) -> float:
        return 2.0 ** (-self.alpha_max)

    @property
    def n_max(self) -> int:
        return self.masses.size

    @property
    def positions(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_max + 1)

    @property
    def families(self) -> np.ndarray:
        return family_of_index(np.arange(1, self.n_max + 1), self.alpha_max)

    def lattice(self) -> Lattice:
        return Lattice(self.h, self.h, self.n_max)

    def set(self, alpha: int, k: int, a: float) -> "LatticeState":
        i = DyadicPoint(alpha, k).index(self.alpha_max) - 1
        if not 0 <= i < self.n_max:
            raise ValueError(f"point ({alpha}, {k}) lies beyond the lattice cap")
        self.masses[i] = a
        return self

    def get(self, alpha: int, k: int) -> float:
        i = DyadicPoint(alpha, k).index(self.alpha_max) - 1
        return float(self.masses[i]) if i < self.n_max else 0.0

    def to_measure(self) -> Measure:
        keep = self.masses > 0
        return Measure(0.0, self.positions[keep], self.masses[keep])

    def to_json(self) -> str:
        n = np.flatnonzero(self.masses) + 1
        fam = family_of_index(n, self.alpha_max)
        rk = rank_of_index(n, self.alpha_max)
        rows = [[int(a), int(k), float(self.masses[i - 1])] for a, k, i in zip(fam, rk, n)]
        return json.dumps({"alpha_max": self.alpha_max, "n_max": self.n_max, "masses": rows})

    @classmethod
    def from_json(cls, s: str) -> "LatticeState":
        d = json.loads(s)
        st = cls(int(d["alpha_max"]), np.zeros(int(d["n_max"])))
        for a, k, m in d["masses"]:
            st.set(int(a), int(k), float(m))
        return st


# ------------------------------------------------------------------ resonances


@dataclass
class ResonanceTable:
    """Triples (i <= j, k) of integer coordinates with output l = i + j - k."""

    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    l: np.ndarray
    weight: np.ndarray
    trivial: np.ndarray
    outside: np.ndarray
    n_max: int
    alpha_max: int

    def to_csv(self) -> str:
        lines = ["i,j,k,l,weight,trivial,outside"]
        for row in zip(self.i, self.j, self.k, self.l, self.weight, self.trivial, self.outside):
            lines.append(",".join([str(int(v)) for v in row[:4]] + [repr(float(row[4])), str(int(row[5])), str(int(row[6]))]))
        return "\n".join(lines) + "\n"


def enumerate_resonances(state: LatticeState, support_only: bool = True) -> ResonanceTable:
    """All resonant quadruples with inputs in the support (or the whole lattice)."""
    n_max = state.n_max
    idx = (np.flatnonzero(state.masses > 0) if support_only else np.arange(n_max)) + 1
    I, J, K = np.meshgrid(idx, idx, idx, indexing="ij")
    sel = I <= J
    i, j, k = I[sel], J[sel], K[sel]
    l = i + j - k
    pos = l >= 1
    i, j, k, l = i[pos], j[pos], k[pos], l[pos]
    mn = np.minimum(np.minimum(i, j), np.minimum(k, l))
    w = np.sqrt(mn.astype(float)) / np.sqrt(i.astype(float) * j * k) * 2.0**state.alpha_max
    trivial = (k == i) | (k == j)
    outside = (i + j + k - 2 * np.minimum(np.minimum(i, j), k)) > n_max
    return ResonanceTable(i, j, k, l, w, trivial, outside, n_max, state.alpha_max)


def lattice_rhs(state: LatticeState, table: ResonanceTable | None = None) -> np.ndarray:
    """Mass derivatives from an explicit resonance table (independent of the compiled core)."""
    if table is None:
        table = enumerate_resonances(state, support_only=True)
    a = np.concatenate([[0.0], state.masses])
    use = ~table.trivial & ~table.outside
    i, j, k, l, w = table.i[use], table.j[use], table.k[use], table.l[use], table.weight[use]
    fac = np.where(i == j, 1.0, 2.0)
    r = fac * w * a[i] * a[j] * a[k]
    n = state.n_max + 1
    d = -np.bincount(i, r, n) - np.bincount(j, r, n) + np.bincount(k, r, n) + np.bincount(l, r, n)
    return d[1:]


def lattice_rates(state: LatticeState) -> tuple[np.ndarray, float]:
    lat = state.lattice()
    return _backend.collision_rates(state.masses, lat.x0, lat.h, 0.0)


# ------------------------------------------------------------------ slow phase

SQ3 = math.sqrt(3.0)


def slow_phase_rhs(_t, y):
    a1, a2, a3 = y
    g = 0.5 * a2 * a2 * a1 + a2 * a2 * a3 / (2 * SQ3)
    return [g, -(a1 + a3 / SQ3) * a2 * a2, g]


def slow_phase_model(a1: float, a2: float, a3: float, t_bar, rtol: float = 1e-11):
    """Integrate the three-mode reduction; returns arrays at the requested times."""
    t_bar = np.atleast_1d(np.asarray(t_bar, dtype=float))
    if np.any(np.array([a1, a2, a3]) < 0):
        raise ValueError("masses must be nonnegative")
    if t_bar.max() == 0:
        return tuple(np.full(t_bar.shape, v) for v in (a1, a2, a3))
    sol = solve_ivp(slow_phase_rhs, (0.0, float(t_bar.max())), [a1, a2, a3], t_eval=np.sort(t_bar),
                    rtol=rtol, atol=1e-15, method="DOP853")
    order = np.argsort(np.argsort(t_bar))
    return sol.y[0][order], sol.y[1][order], sol.y[2][order]


def slow_phase_rate(a2: float) -> float:
    return a2 * a2 * (SQ3 + 1) / (2 * SQ3)


def slow_phase_closed_form(a1: float, a2: float, a3: float, t_bar):
    """Frozen-a2 solution of the linear part."""
    k = slow_phase_rate(a2)
    e = np.exp(k * np.asarray(t_bar, dtype=float))
    amp = (SQ3 * a1 + a3) / (SQ3 + 1)
    return amp * e - (a3 - a1) / (SQ3 + 1), amp * e - SQ3 * (a1 - a3) / (SQ3 + 1)


# ------------------------------------------------------------------ families


@dataclass
class FamilyMasses:
    m: np.ndarray
    tail_mass: np.ndarray
    tail_s: np.ndarray


def family_masses(state: LatticeState) -> FamilyMasses:
    am = state.alpha_max
    fam = state.families
    m = np.bincount(fam, weights=state.masses, minlength=am + 1)
    x1 = np.array([x_alpha(a, 1) for a in range(am + 1)])
    tail = np.array([m[g + 1:].sum() for g in range(am + 1)])
    s = np.array([(m[g + 1:] / np.sqrt(x1[g + 1:])).sum() for g in range(am + 1)])
    return FamilyMasses(m, tail, s)


def growth_bound(fm: FamilyMasses) -> np.ndarray:
    am = fm.m.size - 1
    x1 = np.array([x_alpha(a, 1) for a in range(am + 1)])
    return 6 * fm.m / x1 + 6 * fm.tail_mass * (fm.tail_s + 1 / np.sqrt(x1)) ** 2


def family_growth_bound_check(times, states, tol: float = 1e-6) -> bool:
    """Finite-difference family growth stays below the upper bound at either end of each step."""
    fms = [family_masses(s) if isinstance(s, LatticeState) else s for s in states]
    ms = np.array([f.m for f in fms])
    bd = np.array([growth_bound(f) for f in fms])
    t = np.asarray(times, dtype=float)
    dt = np.diff(t)
    keep = dt > 0
    rate = np.diff(ms, axis=0)[keep] / dt[keep, None]
    cap = np.maximum(bd[:-1], bd[1:])[keep]
    scale = max(float(np.max(np.abs(cap))) if cap.size else 0.0, 1.0)
    return bool(np.all(rate <= cap + tol * scale))


# ------------------------------------------------------------------ schedule


def t_gamma(eps: float, eta: float, c1: float, convention: str = "multiply") -> float:
    """Duration of the slow phase for a family with mass fraction eps and tolerance eta."""
    a = 1 - 2 * eta
    d = 2 + 4 * eta - eps
    arg = (1 - 3 * eta) * d / (eta * eps)
    if a <= 0 or d <= 0 or arg <= 0 or eps <= 0:
        raise InfeasibleSchedule("slow-phase time undefined for these (eps, eta)")
    bracket = a / eta - 2 * a / d + math.log(arg)
    pref = c1 if convention == "multiply" else 1.0 / c1
    if convention not in ("multiply", "divide"):
        raise ValueError("convention must be 'multiply' or 'divide'")
    return pref / (2 * a * a) * bracket


def _const(c, g):
    return float(c(g)) if callable(c) else (float(c[g]) if np.ndim(c) else float(c))


@dataclass
class Schedule:
    eps: np.ndarray
    etas: np.ndarray
    t_slow: np.ndarray
    caps: np.ndarray
    convention: str


def epsilon_schedule(alpha_max: int, etas, c1=1.0, c2=1.0, b_const=1.0, convention: str = "multiply") -> Schedule:
    """Mass fractions eps_alpha from the recursive cap, with eps_0 = 1 - sum of the rest."""
    etas = np.asarray(etas, dtype=float)
    if etas.size < alpha_max + 1:
        raise ValueError("need one eta per family")
    if np.any(etas <= 0) or np.any(etas >= 1 / 3) or np.any(np.diff(etas) > 0):
        raise InfeasibleSchedule("eta must be decreasing in (0, 1/3)")
    eps = [0.5]
    ts = []
    caps = [0.5]

    def q_fun(g, e):
        return min(e / b_const, _const(c2, g) * 2.0 ** (-g) * e / 24, 2.0 ** (g / 2))

    for g in range(alpha_max):
        ts.append(t_gamma(eps[g], etas[g], _const(c1, g), convention))
        a = g + 1
        cand = []
        for gg in range(a):
            num = 2.0 ** (-a) * min(q_fun(gg, eps[gg]), 0.5)
            den = 2.0 ** (a / 2) * math.exp(4 * _const(c2, a) * ts[gg])
            cand.append(num / den)
        cap = min(cand)
        if not cap > 0:
            raise InfeasibleSchedule(f"cap for family {a} is not positive")
        eps.append(cap)
        caps.append(cap)
    eps = np.array(eps)
    eps[0] = 1.0 - eps[1:].sum()
    if eps[0] < 0.5 or np.any(np.diff(eps) >= 0):
        raise InfeasibleSchedule("schedule violates eps_0 >= 1/2 or monotonicity")
    if alpha_max >= 0:
        ts.append(t_gamma(eps[-1], etas[alpha_max], _const(c1, alpha_max), convention))
    return Schedule(eps, etas[: alpha_max + 1], np.array(ts), np.array(caps), convention)


# ------------------------------------------------------------------ pulsation


def scale_invariant_distance(mu: Measure, omega_cap: float = 4.0, n_grid: int = 193) -> float:
    """inf over dilations a of the weak distance between the pushed measure and M delta_1."""
    from .measures import total_mass

    m = total_mass(mu)
    if mu.positions.size == 0:
        return 0.0
    target = Measure.dirac(1.0, m)
    x = mu.positions
    lo, hi = 0.25 / float(x.max()), 4.0 / float(x.min())
    cands = np.unique(np.concatenate([np.geomspace(lo, hi, n_grid), 1.0 / x]))
    return float(min(weak_distance(mu.pushforward(a), target, omega_cap=omega_cap) for a in cands))


@dataclass
class PulsationResult:
    report: RunReport
    a1: np.ndarray  # a_alpha(1)(t) per family, shape (n_times, families)
    windows: dict
    plateau_ok: bool
    window_ok: dict
    transition_stat: float
    plateau_stat: float
    stat_series: np.ndarray
    defect: float
    meta: dict = field(default_factory=dict)


def initial_pulsating_state(eps, alpha_max: int, omega_cap: float) -> LatticeState:
    st = LatticeState.empty(alpha_max, omega_cap)
    for a, e in enumerate(eps):
        if e > 0:
            st.set(a, 1, float(e))
    return st


def pulsating_run(eps, horizon: float, etas, alpha_max: int | None = None, omega_cap: float = 16.0,
                  n_samples: int = 400, threshold: float = 0.05, rtol: float = 1e-10,
                  t_plateau: float | None = None) -> PulsationResult:
    """Integrate from eps_alpha at x_alpha(1) and locate the slow windows of every active family."""
    eps = np.asarray(eps, dtype=float)
    active = np.flatnonzero(eps > 0)
    am = int(active.max()) if alpha_max is None else alpha_max
    st = initial_pulsating_state(eps, am, omega_cap)
    lat = st.lattice()
    times = np.linspace(0.0, horizon, n_samples)

    def f(_t, y):
        return _backend.collision_rates(y, lat.x0, lat.h, 0.0)[0]

    if active.size > 1:
        sol = solve_ivp(f, (0.0, horizon), st.masses, t_eval=times, rtol=rtol, atol=1e-16, method="RK45")
        if not sol.success:
            raise RuntimeError(sol.message)
        ys = np.array([_clip(c) for c in sol.y.T])
    else:
        ys = np.tile(st.masses, (times.size, 1))
    a1 = np.array([[y[DyadicPoint(a, 1).index(am) - 1] for a in range(am + 1)] for y in ys])
    snaps = []
    for y in ys:
        keep = y > 0
        snaps.append(Measure(0.0, lat.points[keep], y[keep]))
    defects = [_backend.collision_rates(y, lat.x0, lat.h, 0.0)[1] for y in ys]
    rep = build_report(times, snaps, 0.0, float(2 ** math.ceil(math.log2(omega_cap))), defects)
    stat = np.array([scale_invariant_distance(s) for s in snaps])
    etas = np.asarray(etas, dtype=float)
    windows: dict = {}
    window_ok: dict = {}
    # family 0 slow window: from 0 until a_0(1) drops below 1 - 4 eta_0
    below = np.flatnonzero(a1[:, 0] < 1 - 4 * etas[0])
    s0 = float(times[below[0]]) if below.size else float(times[-1])
    windows[0] = (0.0, s0)
    for a in active[1:]:
        above = np.flatnonzero(a1[:, a] >= 1 - 4 * etas[a])
        if above.size == 0:
            raise WindowDetectionError(f"family {a} never reaches 1 - 4 eta")
        tn = float(times[above[0]])
        end = 2 * tn
        if end > times[-1]:
            raise WindowDetectionError(f"horizon shorter than twice the window start of family {a}")
        sel = (times >= tn) & (times <= end)
        windows[int(a)] = (tn, end)
        window_ok[int(a)] = bool(np.all(a1[sel, a] >= 1 - 4 * etas[a]))
    plateau_sel = times < s0
    plateau_ok = bool(plateau_sel.sum() >= 3 and np.all(np.abs(a1[plateau_sel, 0] - eps[0]) <= 4 * etas[0]))
    if t_plateau is not None:
        plateau_ok = plateau_ok and s0 >= t_plateau
    if active.size > 1:
        t1 = windows[int(active[1])][0]
        trans = (times > s0) & (times < t1)
        tstat = float(stat[trans].max()) if trans.any() else 0.0
    else:
        tstat = 0.0
    pstat = float(max(stat[0], stat[-1]))
    return PulsationResult(rep, a1, windows, plateau_ok, window_ok, tstat, pstat, stat, float(max(defects)),
                           {"alpha_max": am, "omega_cap": omega_cap, "threshold": threshold})
