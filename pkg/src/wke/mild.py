"""Bounded mild solutions: loss rate A, gain O, exponential time stepping and blow-up detection.

The state is f = g / sqrt(w) on nodes {0} U grid.  The evolution
d g / dt = O[g] - A[g] g is advanced by an exponential Runge-Kutta method,
which keeps f >= 0 whenever A >= 0 and O >= 0.
"""
from __future__ import annotations

import math
from dataclasses import replace, dataclass, field

import numpy as np
from scipy import integrate

from . import _backend
from .kernels import KernelParams
from .measures import Measure


class QuadratureError(RuntimeError):
    pass


class StepUnderflowError(RuntimeError):
    pass


class ContaminationError(FloatingPointError):
    pass


# ------------------------------------------------------------------ grids


@dataclass(frozen=True)
class MildGrid:
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_nodes(cls, nodes) -> "MildGrid":
        x = np.unique(np.asarray(nodes, dtype=float))
        if x[0] != 0.0:
            x = np.concatenate([[0.0], x])
        d = np.diff(x)
        w = np.zeros_like(x)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return cls(x, w)

    @classmethod
    def geometric(cls, w_min: float, cap: float, n: int, h_max: float | None = None) -> "MildGrid":
        """0, then n geometric nodes from w_min to cap, merged with a uniform layer of step h_max."""
        pts = [np.geomspace(w_min, cap, n)]
        if h_max is not None:
            u = h_max * np.arange(1, int(cap / h_max) + 1)
            g = pts[0]
            # drop geometric nodes that crowd the uniform layer
            pts = [g[g < h_max], u]
        return cls.from_nodes(np.concatenate(pts))

    @classmethod
    def uniform(cls, h: float, cap: float) -> "MildGrid":
        return cls.from_nodes(h * np.arange(0, int(round(cap / h)) + 1))

    @property
    def spacing(self) -> float:
        return float(np.max(np.diff(self.nodes)))


# ------------------------------------------------------------------ state


@dataclass(frozen=True)
class MildState:
    t: float
    f: np.ndarray
    grid: MildGrid
    params: KernelParams = field(default_factory=KernelParams)
    rho: float = -3.0
    norm_history: tuple = ()
    # drop cubic terms whose generated fourth points leave the grid (the lattice solver's cutoff)
    truncate: bool = True

    def __post_init__(self) -> None:
        if np.any(self.f < 0):
            raise ValueError("f must be nonnegative")

    @classmethod
    def from_f(cls, fn, grid: MildGrid, params: KernelParams | None = None, **kw) -> "MildState":
        f = np.asarray(fn(grid.nodes), dtype=float)
        return cls(0.0, f, grid, params or KernelParams(), **kw)

    @property
    def g(self) -> np.ndarray:
        return np.sqrt(self.grid.nodes) * self.f

    def mass(self) -> float:
        return float(np.dot(self.grid.weights, self.g))

    def energy(self) -> float:
        return float(np.dot(self.grid.weights, self.grid.nodes * self.g))

    def sup_norm(self) -> float:
        return float(np.max(self.f))

    def weighted_norm(self) -> float:
        """sup g / (sqrt(w) (1 + w)^(rho - 1/2))."""
        x = self.grid.nodes
        return float(np.max(self.f / (1.0 + x) ** (self.rho - 0.5)))

    def to_measure(self) -> Measure:
        """Piecewise-constant density with trapezoid cell means of g."""
        g = self.g
        return Measure.from_density(self.grid.nodes, 0.5 * (g[:-1] + g[1:]))


# ------------------------------------------------------------------ A and O


def _atoms(mu: Measure):
    x, m = mu.positions, mu.masses
    if mu.condensate_mass > 0:
        x = np.concatenate([[0.0], x])
        m = np.concatenate([[mu.condensate_mass], m])
    return x, m


def _phi_sigma(sigma, *ws):
    m = ws[0]
    for w in ws[1:]:
        m = np.minimum(m, w)
    return np.sqrt(np.clip(m - sigma, 0.0, None))


def _density_quad(fn, w1: float, cap: float, tol: float):
    """2-D quadrature over {w3, w4 in (0, cap), w3 + w4 >= w1} split at the kinks of the kernel."""
    def inner(w3):
        lo = max(0.0, w1 - w3)
        pts = sorted({p for p in (w1, w3, 0.5 * (w1 + w3 - lo), w1 - w3 + w3, lo + w3) if lo < p < cap})
        val, err = integrate.quad(lambda w4: fn(w3, w4), lo, cap, points=pts or None, limit=200,
                                  epsabs=tol, epsrel=tol)
        return val

    pts = sorted({p for p in (w1, 0.5 * w1) if 0 < p < cap})
    val, err = integrate.quad(inner, 0.0, cap, points=pts or None, limit=200, epsabs=tol, epsrel=tol)
    if not np.isfinite(val) or err > max(1e3 * tol, 1e-6 * abs(val)):
        raise QuadratureError(f"quadrature error {err:.1e} at w1={w1}")
    return val


def a_sigma(g, params: KernelParams, w1: float, cap: float | None = None, tol: float = 1e-9) -> float:
    """Loss rate A_sigma(w1) >= 0 for an atomic measure (sigma > 0) or a density g(w)."""
    s = params.sigma
    if w1 <= s or w1 <= 0:
        return 0.0
    if isinstance(g, Measure):
        if s <= 0 and g.positions.size:
            raise ValueError("atomic measures need sigma > 0")
        x, m = _atoms(g)
        if x.size == 0:
            return 0.0
        xa, xb = np.meshgrid(x, x, indexing="ij")
        ma = np.outer(m, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            # first term: w2 = xa, w3 = xb, w4 = w1 + xa - xb
            w4 = w1 + xa - xb
            t1 = np.where(w4 >= 0, _phi_sigma(s, w1, xa, xb, w4) / np.sqrt(w1 * xa * xb), 0.0)
            # second term: w3 = xa, w4 = xb, w2 = xa + xb - w1
            w2 = xa + xb - w1
            t2 = np.where(w2 >= 0, _phi_sigma(s, w1, w2, xa, xb) / np.sqrt(w1 * xa * xb), 0.0)
        val = float(np.sum(ma * (2 * np.nan_to_num(t1) - np.nan_to_num(t2))))
        return max(val, 0.0)
    if cap is None:
        raise ValueError("densities need a finite cap")

    def fn(w3, w4):
        w2 = w3 + w4 - w1
        if w2 < 0:
            return 0.0
        ph = math.sqrt(max(min(w1, w2, w3, w4) - s, 0.0))
        if ph == 0.0:
            return 0.0
        f2 = g(w2) / math.sqrt(w2)
        f3 = g(w3) / math.sqrt(w3)
        f4 = g(w4) / math.sqrt(w4)
        return ph * f3 * (2 * f2 - f4)

    return max(_density_quad(fn, w1, cap, tol) / math.sqrt(w1), 0.0)


def o_sigma(g, params: KernelParams, w1: float | None = None, cap: float | None = None, tol: float = 1e-9):
    """Gain O_sigma[g]: a Measure for atomic input, else its density at w1."""
    s = params.sigma
    if isinstance(g, Measure):
        x, m = _atoms(g)
        if x.size == 0:
            return Measure(0.0, np.zeros(0), np.zeros(0))
        i2, i3, i4 = (a.ravel() for a in np.meshgrid(*(np.arange(x.size),) * 3, indexing="ij"))
        x2, x3, x4 = x[i2], x[i3], x[i4]
        x1 = x3 + x4 - x2
        with np.errstate(divide="ignore", invalid="ignore"):
            w = _phi_sigma(s, x1, x2, x3, x4) / np.sqrt(x2 * x3 * x4)
        w = np.where((x1 >= 0) & np.isfinite(w), w, 0.0)
        r = m[i2] * m[i3] * m[i4] * w
        keep = r > 0
        if not keep.any():
            return Measure(0.0, np.zeros(0), np.zeros(0))
        return Measure.atoms(list(zip(x1[keep], r[keep])))
    if w1 is None or cap is None:
        raise ValueError("densities need w1 and a finite cap")
    if w1 <= s or w1 <= 0:
        return 0.0

    def fn(w3, w4):
        w2 = w3 + w4 - w1
        if w2 <= 0:
            return 0.0
        ph = math.sqrt(max(min(w1, w2, w3, w4) - s, 0.0))
        if ph == 0.0:
            return 0.0
        return ph * g(w2) * g(w3) * g(w4) / math.sqrt(w2 * w3 * w4)

    return _density_quad(fn, w1, cap, tol)


def rates(state: MildState):
    """(A, O / sqrt(w)) on the nodes; A clamped at 0 and its raw minimum."""
    A, O = _backend.mild_rates(state.grid.nodes, state.grid.weights, state.f, state.params.sigma, state.truncate)
    x = state.grid.nodes
    with np.errstate(divide="ignore", invalid="ignore"):
        Of = np.where(x > 0, O / np.sqrt(np.where(x > 0, x, 1.0)), 0.0)
    return np.clip(A, 0.0, None), np.clip(Of, 0.0, None), float(A.min())


def _phi1(z):
    out = np.ones_like(z)
    big = z > 1e-8
    out[big] = -np.expm1(-z[big]) / z[big]
    out[~big] = 1.0 - 0.5 * z[~big]
    return out


def _exp_step(f, A, Of, dt):
    return f * np.exp(-A * dt) + Of * dt * _phi1(A * dt)


def mild_step(state: MildState, dt: float, with_rates: tuple | None = None) -> MildState:
    """One exponential Runge-Kutta (Heun) step of length dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A0, O0, _ = rates(state) if with_rates is None else with_rates
    f1 = _exp_step(state.f, A0, O0, dt)
    s1 = replace(state, t=state.t + dt, f=f1)
    A1, O1, _ = rates(s1)
    f2 = _exp_step(state.f, 0.5 * (A0 + A1), 0.5 * (O0 + O1), dt)
    if not np.all(np.isfinite(f2)):
        raise ContaminationError(f"non-finite values at t={state.t + dt}")
    hist = state.norm_history + ((state.t + dt, float(f2.max())),)
    return replace(state, t=state.t + dt, f=f2, norm_history=hist)


# ------------------------------------------------------------------ runs


@dataclass
class MildRun:
    rows: list
    verdict: str
    t_end: float
    t_blowup: float | None
    snapshots: dict
    final: MildState
    a_min: float

    def to_csv(self) -> str:
        lines = ["t,mass,energy,sup_norm,min_f"]
        for r in self.rows:
            lines.append(",".join(repr(float(v)) for v in r))
        return "\n".join(lines) + "\n"

    @property
    def blew_up(self) -> bool:
        return self.verdict == "blew_up"

    @property
    def growth(self) -> float:
        return self.rows[-1][3] / self.rows[0][3] if self.rows[0][3] > 0 else 0.0


def _accelerating(hist, window: int = 10) -> bool:
    if len(hist) < window + 1:
        return False
    t = np.array([h[0] for h in hist[-window - 1:]])
    s = np.log(np.array([h[1] for h in hist[-window - 1:]]))
    rate = np.diff(s) / np.diff(t)
    half = window // 2
    return bool(np.all(rate > 0) and rate[half:].mean() >= rate[:half].mean())


def _blowup_time(hist, window: int = 10) -> float:
    t = np.array([h[0] for h in hist[-window:]])
    inv = 1.0 / np.array([h[1] for h in hist[-window:]])
    slope, icpt = np.polyfit(t, inv, 1)
    return float(-icpt / slope) if slope < 0 else float(t[-1])


def run_mild(state: MildState, horizon: float, sample_times=(), safety: float = 0.5,
             max_growth: float = 1.25, blowup_factor: float = 1e3, max_dt: float | None = None,
             max_steps: int = 200_000) -> MildRun:
    """Integrate to the horizon or until the blow-up verdict."""
    s0 = state.sup_norm()
    rows = [(state.t, state.mass(), state.energy(), s0, float(state.f.min()))]
    if s0 == 0.0:
        return MildRun(rows, "completed", state.t + horizon, None, {float(t): state for t in sample_times},
                       replace(state, t=state.t + horizon), 0.0)
    t_end = state.t + horizon
    targets = sorted(float(t) for t in sample_times if state.t <= t <= t_end)
    snaps = {}
    while targets and targets[0] <= state.t:
        snaps[targets.pop(0)] = state
    max_dt = horizon / 20 if max_dt is None else max_dt
    hist = [(state.t, s0)]
    a_min = 0.0
    cur = state
    steps = 0
    eps_t = 1e-12 * max(horizon, 1e-300)
    while t_end - cur.t > eps_t:
        steps += 1
        if steps > max_steps:
            raise StepUnderflowError("step budget exhausted")
        r = rates(cur)
        a_min = min(a_min, r[2])
        goal = min(t_end, targets[0]) if targets else t_end
        dt = min(max_dt, safety / max(float(r[0].max()), 1e-300), goal - cur.t)
        while True:
            if dt < eps_t:
                raise StepUnderflowError(f"dt={dt:.3e} at t={cur.t:.6g}")
            nxt = mild_step(cur, dt, r)
            if nxt.sup_norm() <= max_growth * cur.sup_norm():
                break
            dt *= 0.5
        if goal - nxt.t <= eps_t:
            nxt = replace(nxt, t=goal)
        cur = nxt
        hist.append((cur.t, cur.sup_norm()))
        rows.append((cur.t, cur.mass(), cur.energy(), cur.sup_norm(), float(cur.f.min())))
        if np.any(cur.f < 0):
            raise AssertionError("positivity violated")
        while targets and targets[0] - cur.t <= eps_t:
            snaps[targets.pop(0)] = cur
        if cur.sup_norm() >= blowup_factor * s0 and _accelerating(hist):
            return MildRun(rows, "blew_up", cur.t, _blowup_time(hist), snaps, cur, a_min)
    return MildRun(rows, "completed", cur.t, None, snaps, cur, a_min)


def concentrated_profile(nu: float, r: float):
    """f = nu on [0, r], smoothly decreasing to 0 at 2 r."""
    def fn(w):
        s = np.clip((np.asarray(w, dtype=float) - r) / r, 0.0, 1.0)
        return nu * (1.0 - s * s * (3.0 - 2.0 * s))

    return fn


@dataclass
class BlowupSearch:
    nu: float
    run: MildRun
    tried: list


def blowup_search(grid: MildGrid, horizon: float, r: float = 1.0, nu0: float = 1.0, max_doublings: int = 8,
                  **kw) -> BlowupSearch:
    """Double the amplitude until the sigma = 0 run reports blow-up within the horizon."""
    nu = nu0
    tried = []
    for _ in range(max_doublings + 1):
        st = MildState.from_f(concentrated_profile(nu, r), grid, KernelParams(0.0))
        run = run_mild(st, horizon, **kw)
        tried.append((nu, run.verdict, run.t_end))
        if run.blew_up:
            return BlowupSearch(nu, run, tried)
        nu *= 2.0
    return BlowupSearch(nu / 2.0, run, tried)
