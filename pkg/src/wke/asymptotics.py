"""Reduced model for the energy-carrying tail next to a dominant condensate.

The tail G lives on the uniform grid w_k = k h (k = 1..N).  With
v = G / sqrt(w), the weak form pairs fragmentation (w2 > w3 -> w2 - w3, w3)
with coagulation (w1, w2 -> w1 + w2).  On the grid both processes map nodes
to nodes, so the first moment is conserved exactly when coagulation products
beyond the last node are suppressed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve


class DivergencePairingError(ValueError):
    pass


@dataclass
class CoagFragState:
    """Tail profile in model time tbar = 2 M t / R^2 (t in original units)."""

    h: float
    G: np.ndarray
    t: float = 0.0
    condensate: float = 1.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        self.G = np.asarray(self.G, dtype=float)
        if self.h <= 0:
            raise ValueError("grid step must be positive")
        if np.any(self.G < -1e-12 * max(1.0, float(np.max(np.abs(self.G), initial=0.0)))):
            raise ValueError("profile must be nonnegative")

    @property
    def n(self) -> int:
        return self.G.size

    @property
    def omega(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    def moment(self, p: float) -> float:
        return float(self.h * np.sum(self.omega**p * self.G))

    def original_time(self) -> float:
        return self.t * self.scale**2 / (2.0 * self.condensate)

    @classmethod
    def from_function(cls, fn, h: float, length: float, **kw) -> "CoagFragState":
        n = int(round(length / h))
        w = h * np.arange(1, n + 1)
        return cls(h, np.asarray(fn(w), dtype=float), **kw)


def _terms(G: np.ndarray, h: float):
    n = G.size
    w = h * np.arange(1, n + 1)
    v = G / np.sqrt(w)
    # fragmentation (j > l): gains at j - l (translation) and at l, loss at j
    above = np.concatenate([np.cumsum(v[::-1])[::-1][1:], [0.0]])  # sum_{j > k} v_j
    below = np.concatenate([[0.0], np.cumsum(v)[:-1]])  # sum_{l < k} v_l
    corr = fftconvolve(v, v[::-1])[n - 1:]  # corr[d] = sum_l v_{l + d} v_l
    trans = np.zeros(n)
    trans[:-1] = corr[1:]
    frag_first = v * above
    frag_loss = -v * below
    # coagulation on ordered pairs with weight 1/2; products beyond N suppressed
    conv = fftconvolve(v, v)  # conv[m] = sum_{a + b = m} v_a v_b, node index a + b + 2
    coag_gain = np.zeros(n)
    coag_gain[1:] = 0.5 * conv[: n - 1]
    csum = np.cumsum(v)
    partner = np.zeros(n)
    partner[: n - 1] = csum[n - 2:: -1]  # sum_{l <= N - k} v_l
    coag_loss = -v * partner
    return {k: h * val for k, val in (("frag_first", frag_first), ("frag_loss", frag_loss),
                                      ("translation", trans), ("coag_gain", coag_gain), ("coag_loss", coag_loss))}


def coagfrag_rhs(state: CoagFragState | np.ndarray, h: float | None = None) -> np.ndarray:
    """dG/dtbar on the grid; the first and last terms are paired inside _terms."""
    if isinstance(state, CoagFragState):
        G, h = state.G, state.h
    else:
        G = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(G)):
        raise DivergencePairingError("profile is not finite on the grid")
    return sum(_terms(G, h).values())


def rhs_terms(state: CoagFragState) -> dict:
    return _terms(state.G, state.h)


def weak_rate(state: CoagFragState, psi) -> float:
    """d/dtbar of h sum G psi."""
    return float(state.h * np.sum(coagfrag_rhs(state) * psi(state.omega)))


# ------------------------------------------------------------------ thermal equilibrium


def thermal_residual(a: float, h: float, length: float, probes=(0.5, 1.0, 2.0)) -> float:
    """Max residual of a / sqrt(w) at probe frequencies after removing domain truncation.

    The suppressed coagulation losses are added back exactly; the
    fragmentation gain from beyond the grid is added as the closed-form
    integral of the leading power over the midpoint-shifted tail.
    """
    st = CoagFragState.from_function(lambda w: a / np.sqrt(w), h, length)
    n = st.n
    w = st.omega
    v = st.G / np.sqrt(w)
    r = coagfrag_rhs(st)
    csum = np.concatenate([[0.0], np.cumsum(v)])
    out = 0.0
    for p in probes:
        k = int(round(p / h))
        if abs(k * h - p) > 1e-9 * p or not 1 <= k < n:
            raise ValueError("probe frequencies must be grid nodes inside the domain")
        vk = v[k - 1]
        lost_coag = vk * h * (csum[n] - csum[n - k])
        tail_gain = a * a / (k * h) * math.log((n + 0.5) / (n - k + 0.5))
        # translation gain from l with k + l > N, beyond the grid
        res = r[k - 1] - lost_coag + tail_gain
        out = max(out, abs(res))
    return out


def thermal_convergence(a: float = 1.0, length: float = 4.0, steps=(1 / 32, 1 / 64, 1 / 128, 1 / 256)):
    """(steps, residuals, fitted order)."""
    res = np.array([thermal_residual(a, h, length) for h in steps])
    order = float(np.polyfit(np.log(steps), np.log(res), 1)[0])
    return np.asarray(steps, dtype=float), res, order


# ------------------------------------------------------------------ time evolution


@dataclass
class CoagFragRun:
    times: np.ndarray
    profiles: np.ndarray
    h: float
    moments: dict = field(default_factory=dict)
    front_radius: np.ndarray | None = None
    moment_drift: float = 0.0

    @property
    def omega(self) -> np.ndarray:
        return self.h * np.arange(1, self.profiles.shape[1] + 1)

    def to_csv(self) -> str:
        lines = ["t,mass,first_moment,front_radius"]
        for i, t in enumerate(self.times):
            lines.append(",".join(repr(float(x)) for x in (t, self.moments["mass"][i], self.moments["first"][i],
                                                              self.front_radius[i])))
        return "\n".join(lines) + "\n"


def _median_energy(w, G, h):
    e = np.cumsum(w * G) * h
    if e[-1] <= 0:
        return 0.0
    return float(np.interp(0.5 * e[-1], e, w))


def run_coagfrag(state: CoagFragState, horizon: float, n_samples: int = 50, rtol: float = 1e-8,
                 atol: float = 1e-12, log_times: bool = True) -> CoagFragRun:
    """Integrate dG/dtbar with an explicit adaptive Runge-Kutta scheme."""
    h = state.h
    if log_times:
        times = np.concatenate([[state.t], state.t + np.geomspace(1e-2, horizon, n_samples - 1)])
    else:
        times = np.linspace(state.t, state.t + horizon, n_samples)
    sol = integrate.solve_ivp(lambda t, y: coagfrag_rhs(y, h), (times[0], times[-1]), state.G,
                              method="RK45", t_eval=times, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    prof = np.clip(sol.y.T, 0.0, None)
    w = h * np.arange(1, state.n + 1)
    mass = h * prof.sum(axis=1)
    first = h * (prof * w).sum(axis=1)
    raw_first = h * (sol.y.T * w).sum(axis=1)
    front = np.array([_median_energy(w, g, h) for g in prof])
    drift = float(np.max(np.abs(raw_first - raw_first[0])) / raw_first[0])
    return CoagFragRun(sol.t, prof, h, {"mass": mass, "first": first}, front, drift)


def first_moment_step_drift(state: CoagFragState, dt: float) -> float:
    """Relative first-moment change over one classical RK4 step."""
    h = state.h
    y = state.G
    f = lambda y: coagfrag_rhs(y, h)
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    y1 = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    w = state.omega
    m0 = float(np.sum(w * y))
    return abs(float(np.sum(w * y1)) - m0) / m0


# ------------------------------------------------------------------ self-similar collapse


@dataclass
class CollapseReport:
    distance: float
    scale: float
    exponent: float
    exponent_window: tuple[float, float]
    times: list[float]

    @property
    def relative_distance(self) -> float:
        return self.distance / self.scale if self.scale > 0 else 0.0

    def to_json(self) -> str:
        return json.dumps({"distance": self.distance, "scale": self.scale, "relative": self.relative_distance,
                           "exponent": self.exponent, "exponent_window": list(self.exponent_window),
                           "times": self.times})


def rescale(run: CoagFragRun, i: int, y: np.ndarray, t0: float = 0.0) -> np.ndarray:
    """Phi_tau(y) = (1 + tau) G(tau, y sqrt(1 + tau)), tau = tbar - t0."""
    s = 1.0 + run.times[i] - t0
    return s * np.interp(y * math.sqrt(s), run.omega, run.profiles[i], right=0.0)


def selfsim_collapse(run: CoagFragRun, window: tuple[float, float] = (0.05, 1.5),
                     fit_window: tuple[float, float] = (0.01, 0.04), t0: float = 0.0,
                     decade: float = 10.0) -> CollapseReport:
    """Sup-distance of sqrt(y) Phi_tau(y) over the trailing decade and the small-y exponent."""
    tmax = run.times[-1] - t0
    sel = [i for i, t in enumerate(run.times) if t - t0 >= tmax / decade and t - t0 > 0]
    if len(sel) < 2:
        raise ValueError("trajectory too short for a trailing decade")
    y = np.linspace(*window, 400)
    profs = np.array([np.sqrt(y) * rescale(run, i, y, t0) for i in sel])
    dist = float(np.max(np.max(profs, axis=0) - np.min(profs, axis=0)))
    scale = float(np.max(np.abs(profs[-1])))
    yf = np.geomspace(*fit_window, 40)
    pf = rescale(run, sel[-1], yf, t0)
    good = pf > 0
    expo = float(np.polyfit(np.log(yf[good]), np.log(pf[good]), 1)[0]) if good.sum() > 3 else float("nan")
    return CollapseReport(dist, scale, expo, fit_window, [float(run.times[i]) for i in sel])


# ------------------------------------------------------------------ scaling laws


@dataclass(frozen=True)
class ScalingLaw:
    r_exponent: float
    m_exponent: float
    regime: str
    critical: bool = False


def infinite_mass_scalings(rho: float) -> ScalingLaw:
    """Growth exponents of the front R(t) and small-frequency mass M(t) for tails w^-rho."""
    if not (0.5 < rho < 2.0):
        raise ValueError("tail exponent must lie in (1/2, 2)")
    if rho < 1.0:
        return ScalingLaw(1.0 / (2 * rho - 1), (1 - rho) / (2 * rho - 1), "infinite-mass")
    if rho == 1.0:
        return ScalingLaw(1.0, 0.0, "critical", critical=True)
    return ScalingLaw(1.0 / rho, 0.0, "finite-mass")


@dataclass
class SelfSimilarExponents:
    alpha: float
    beta: float
    identity_gap: float
    predicted_collision_exponent: float
    measured_collision_exponent: float | None = None


def _collision_test_integral(rho: float, center: float, width: float, n: int) -> float:
    from .fluxes import triple_integral, _symmetrized
    from .kernels import spline_bump

    phi = spline_bump(center, width)

    def raw(a, b, c, d=None):
        d = a + b - c if d is None else d
        m = np.minimum(np.minimum(a, b), np.minimum(c, d))
        kern = np.sqrt(np.clip(m, 0.0, None))
        with np.errstate(all="ignore"):
            q = kern * (a * b * c) ** (-rho - 0.5)
        br = phi(d) + phi(c) - phi(a) - phi(b)
        return np.where(kern > 0, q * br, 0.0)

    knots = center + width * np.arange(-2, 3)
    return triple_integral(_symmetrized(raw), center, n, extra=tuple(knots))


def ni_selfsim_exponents(rho: float, measure: bool = False, n: int = 12) -> SelfSimilarExponents:
    """alpha, beta of g = t^-alpha G(w / t^beta) and the homogeneity of the collision term of w^-rho."""
    if rho <= 0.5:
        raise ValueError("need rho > 1/2")
    a = rho / (2 * rho - 1)
    b = 1.0 / (2 * rho - 1)
    out = SelfSimilarExponents(a, b, abs(2 * a - b - 1.0), 1.0 - 3.0 * rho)
    if measure:
        # pairing with phi(w / lam) scales as lam^(2 - 3 rho) for a density ~ w^(1 - 3 rho)
        i1 = _collision_test_integral(rho, 1.0, 0.25, n)
        i2 = _collision_test_integral(rho, 2.0, 0.5, n)
        out.measured_collision_exponent = math.log2(i2 / i1) - 1.0
    return out
