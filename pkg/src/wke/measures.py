"""Measure-valued states, norms, the weak metric and extended supports."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Density:
    edges: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        e, v = _frozen(self.edges), _frozen(self.values)
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0) or e[0] < 0:
            raise ValueError("density edges must be strictly increasing and nonnegative")
        if v.shape != (e.size - 1,) or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite, nonnegative, one per cell")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def cell_masses(self) -> np.ndarray:
        return self.values * self.widths

    def quad_nodes(self):
        """Gauss nodes/weights of every cell, flattened."""
        a, b = self.edges[:-1, None], self.edges[1:, None]
        x = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X[None, :]
        w = 0.5 * (b - a) * _GL_W[None, :] * self.values[:, None]
        return x.ravel(), w.ravel()

    def mass_in(self, lo: float, hi: float) -> float:
        """Mass in the closed interval [lo, hi]."""
        a = np.clip(self.edges[:-1], lo, hi)
        b = np.clip(self.edges[1:], lo, hi)
        return float(np.sum(self.values * (b - a)))


@dataclass(frozen=True)
class Measure:
    """Condensate at 0, sorted Dirac atoms at positive energies, optional binned density."""

    condensate_mass: float = 0.0
    positions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: Density | None = None

    def __post_init__(self) -> None:
        p, m = np.array(self.positions, dtype=float).ravel(), np.array(self.masses, dtype=float).ravel()
        if p.shape != m.shape:
            raise ValueError("positions and masses differ in length")
        if np.any(m < 0) or not np.all(np.isfinite(m)) or not np.all(np.isfinite(p)):
            raise ValueError("atom masses must be finite and nonnegative")
        if np.any(p <= 0):
            raise ValueError("atom positions must be positive; use condensate_mass for 0")
        order = np.argsort(p, kind="stable")
        p, m = p[order], m[order]
        if p.size and np.any(np.diff(p) <= 0):
            # merge coincident atoms
            up, inv = np.unique(p, return_inverse=True)
            m = np.bincount(inv, weights=m)
            p = up
        keep = m > 0
        object.__setattr__(self, "positions", _frozen(p[keep]))
        object.__setattr__(self, "masses", _frozen(m[keep]))
        c = float(self.condensate_mass)
        if c < 0 or not math.isfinite(c):
            raise ValueError("condensate mass must be finite and nonnegative")
        object.__setattr__(self, "condensate_mass", c)

    # -- constructors
    @classmethod
    def atoms(cls, pairs, condensate: float = 0.0) -> "Measure":
        pairs = list(pairs)
        if not pairs:
            return cls(condensate, np.zeros(0), np.zeros(0))
        p, m = zip(*pairs)
        return cls(condensate, np.array(p), np.array(m))

    @classmethod
    def dirac(cls, position: float, mass: float = 1.0) -> "Measure":
        if position == 0:
            return cls(mass)
        return cls.atoms([(position, mass)])

    @classmethod
    def from_density(cls, edges, values, condensate: float = 0.0) -> "Measure":
        return cls(condensate, density=Density(edges, values))

    # -- functionals
    def integrate(self, f) -> float:
        total = 0.0
        if self.condensate_mass:
            total += self.condensate_mass * float(np.asarray(f(np.zeros(1)))[0])
        if self.positions.size:
            total += float(np.dot(self.masses, f(self.positions)))
        if self.density is not None:
            x, w = self.density.quad_nodes()
            total += float(np.dot(w, f(x)))
        return total

    def mass_in(self, lo: float, hi: float) -> float:
        """Mass of the closed interval [lo, hi]."""
        total = self.condensate_mass if lo <= 0.0 <= hi else 0.0
        sel = (self.positions >= lo) & (self.positions <= hi)
        total += float(self.masses[sel].sum())
        if self.density is not None:
            total += self.density.mass_in(lo, hi)
        return total

    def support_hull(self) -> tuple[float, float]:
        lo, hi = math.inf, 0.0
        if self.condensate_mass > 0:
            lo = 0.0
        if self.positions.size:
            lo, hi = min(lo, float(self.positions[0])), max(hi, float(self.positions[-1]))
        if self.density is not None:
            nzc = np.flatnonzero(self.density.values > 0)
            if nzc.size:
                lo = min(lo, float(self.density.edges[nzc[0]]))
                hi = max(hi, float(self.density.edges[nzc[-1] + 1]))
        if lo == math.inf:
            return 0.0, 0.0
        return lo, hi

    def scaled(self, k: float) -> "Measure":
        d = None if self.density is None else Density(self.density.edges, k * self.density.values)
        return Measure(k * self.condensate_mass, self.positions, k * self.masses, d)

    def pushforward(self, a: float) -> "Measure":
        """Image under w -> a w (mass preserving)."""
        d = None
        if self.density is not None:
            d = Density(a * self.density.edges, self.density.values / a)
        return Measure(self.condensate_mass, a * self.positions, self.masses, d)

    # -- serialization
    def to_dict(self) -> dict:
        out = {
            "condensate": self.condensate_mass,
            "atoms": [[float(p), float(m)] for p, m in zip(self.positions, self.masses)],
        }
        if self.density is not None:
            out["density"] = {"edges": self.density.edges.tolist(), "values": self.density.values.tolist()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Measure":
        dens = d.get("density")
        atoms = d.get("atoms", [])
        p = np.array([a[0] for a in atoms], dtype=float)
        m = np.array([a[1] for a in atoms], dtype=float)
        density = None if dens is None else Density(dens["edges"], dens["values"])
        return cls(float(d.get("condensate", 0.0)), p, m, density)

    @classmethod
    def from_json(cls, s: str) -> "Measure":
        return cls.from_dict(json.loads(s))


def total_mass(mu: Measure) -> float:
    return mu.integrate(lambda w: np.ones_like(w))


def total_energy(mu: Measure) -> float:
    return mu.integrate(lambda w: w)


# ------------------------------------------------------------------ norms


def _r_grid(mu: Measure) -> np.ndarray:
    lo, hi = mu.support_hull()
    pts = [mu.positions, 2.0 * mu.positions]
    if mu.density is not None:
        pts += [mu.density.edges, 2.0 * mu.density.edges]
    lo = max(lo, 1e-300)
    if hi > 0:
        k0 = math.floor(8 * math.log2(lo if lo > 0 else hi)) - 1
        k1 = math.ceil(8 * math.log2(2 * hi)) + 1
        pts.append(2.0 ** (np.arange(k0, k1 + 1) / 8.0))
    r = np.concatenate(pts) if pts else np.zeros(0)
    return np.unique(r[r > 0])


def weighted_norm_rho(mu: Measure, rho: float) -> float:
    """sup over R > 0 of (1+R)^(-rho) R^(-1) mu([R/2, R])."""
    r = _r_grid(mu)
    if r.size == 0:
        return 0.0
    vals = np.array([mu.mass_in(x / 2, x) for x in r]) * (1.0 + r) ** (-rho) / r
    return float(vals.max(initial=0.0))


@dataclass(frozen=True)
class LatticeMeasure:
    """Atoms at integer multiples ks of 2^-alpha_max."""

    alpha_max: int
    ks: np.ndarray
    masses: np.ndarray

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.ks, dtype=float) * 2.0 ** (-self.alpha_max)

    def to_measure(self) -> Measure:
        return Measure(0.0, self.positions, self.masses)

    def families(self) -> np.ndarray:
        """Dyadic family index of every atom."""
        ks = np.asarray(self.ks, dtype=np.int64)
        tz = np.zeros(ks.size, dtype=np.int64)
        k = ks.copy()
        while np.any((k % 2 == 0) & (tz < self.alpha_max)):
            even = (k % 2 == 0) & (tz < self.alpha_max)
            k[even] //= 2
            tz[even] += 1
        return self.alpha_max - tz


def dyadic_family(x: float, tol: float = 1e-12, alpha_limit: int = 60) -> int:
    """Smallest alpha with x 2^alpha an integer."""
    for a in range(alpha_limit + 1):
        y = x * 2.0**a
        if abs(y - round(y)) <= tol * max(1.0, y):
            return a
    raise ValueError(f"{x} is not on the dyadic lattice")


def theta_rho_norm(mu, theta: float, rho_star: float) -> float:
    """sup_alpha (2^alpha)^theta mu(Omega_alpha) + sup_{R>=1} mu([R/2,R]) / R^(1 - rho_star)."""
    if isinstance(mu, LatticeMeasure):
        mu = mu.to_measure()
    if mu.density is not None or mu.condensate_mass > 0:
        raise ValueError("theta_rho_norm needs an atomic measure on the dyadic lattice")
    fam: dict[int, float] = {}
    for x, m in zip(mu.positions, mu.masses):
        a = dyadic_family(float(x))
        fam[a] = fam.get(a, 0.0) + float(m)
    first = max((2.0**a) ** theta * m for a, m in fam.items()) if fam else 0.0
    r = _r_grid(mu)
    r = r[r >= 1.0]
    r = np.unique(np.concatenate([r, [1.0]]))
    second = max((mu.mass_in(x / 2, x) / x ** (1.0 - rho_star) for x in r), default=0.0)
    return float(first + second)


def project_to_lattice(mu: Measure, alpha_max: int, tol: float = 1e-9) -> LatticeMeasure:
    """Snap atoms to Z_alpha_max; densities are split between neighbouring points."""
    if mu.condensate_mass > 0:
        raise ValueError("the dyadic lattice has no point at 0")
    h = 2.0 ** (-alpha_max)
    acc: dict[int, float] = {}
    for x, m in zip(mu.positions, mu.masses):
        k = int(round(x / h))
        if k < 1 or abs(x - k * h) > tol * max(1.0, x):
            raise ValueError(f"atom at {x} is off the lattice 2^-{alpha_max} Z")
        acc[k] = acc.get(k, 0.0) + float(m)
    if mu.density is not None:
        c = 0.5 * (mu.density.edges[:-1] + mu.density.edges[1:])
        cm = mu.density.cell_masses
        for ci, mi in zip(c, cm):
            if mi == 0:
                continue
            s = ci / h
            k = max(int(math.floor(s)), 1)
            frac = min(max(s - k, 0.0), 1.0)
            acc[k] = acc.get(k, 0.0) + mi * (1 - frac)
            if frac > 0:
                acc[k + 1] = acc.get(k + 1, 0.0) + mi * frac
    ks = np.array(sorted(acc), dtype=np.int64)
    return LatticeMeasure(alpha_max, ks, np.array([acc[k] for k in ks]))


# --------------------------------------------------------------- weak metric


def _cap_for(*mus: Measure) -> float:
    hi = max((m.support_hull()[1] for m in mus), default=0.0)
    return float(2.0 ** max(0, math.ceil(math.log2(hi)))) if hi > 0 else 1.0


def dictionary(omega_cap: float, n_terms: int = 64):
    """Constant 1 followed by trapezoid tents on successively finer dyadic meshes."""
    out = [(None, None)]
    s = 0
    while len(out) < n_terms:
        d = omega_cap / 2.0 ** (s + 2)
        for j in range(2 ** (s + 2) + 1):
            out.append((j * d, d))
            if len(out) == n_terms:
                break
        s += 1
    return out


def _tent_values(c, d, w):
    return np.minimum(1.0, np.maximum(d - np.abs(w - c), 0.0))


def test_integrals(mu: Measure, omega_cap: float, n_terms: int = 64) -> np.ndarray:
    """Integrals of mu against the truncated dictionary."""
    dic = dictionary(omega_cap, n_terms)
    c = np.array([e[0] if e[0] is not None else 0.0 for e in dic])
    d = np.array([e[1] if e[1] is not None else np.inf for e in dic])
    const = np.array([e[0] is None for e in dic])

    def vals(w):
        w = np.asarray(w, dtype=float)
        t = np.minimum(1.0, np.maximum(d[:, None] - np.abs(w[None, :] - c[:, None]), 0.0))
        t[const] = 1.0
        return t

    out = np.zeros(len(dic))
    if mu.condensate_mass:
        out += mu.condensate_mass * vals(np.zeros(1))[:, 0]
    if mu.positions.size:
        out += vals(mu.positions) @ mu.masses
    if mu.density is not None:
        x, w = mu.density.quad_nodes()
        out += vals(x) @ w
    return out


def weak_distance(mu1: Measure, mu2: Measure, n_terms: int = 64, omega_cap: float | None = None) -> float:
    """Bounded-Lipschitz distance over the first n_terms dictionary functions."""
    cap = omega_cap if omega_cap is not None else _cap_for(mu1, mu2)
    a = test_integrals(mu1, cap, n_terms)
    b = test_integrals(mu2, cap, n_terms)
    return float(np.max(np.abs(a - b)))


# ------------------------------------------------------------ extended support


@dataclass(frozen=True)
class SupportSet:
    base_points: tuple
    r_star: float
    gaps: tuple
    points: np.ndarray
    dense: bool = False
    unit: float = 0.0


def _as_fraction(x: float, cap: int = 10**4, rtol: float = 1e-10) -> Fraction | None:
    fr = Fraction(x).limit_denominator(cap)
    if abs(float(fr) - x) <= rtol * max(1.0, abs(x)):
        return fr
    return None


def _integer_coordinates(points: np.ndarray):
    """Write points as base + unit * n with integer n, or None when ratios are irrational."""
    base = float(points.min())
    diffs = points - base
    nzd = diffs[diffs > 0]
    if nzd.size == 0:
        return base, 1.0, np.zeros(points.size, dtype=np.int64)
    ref = float(nzd.min())
    fracs = []
    for d in diffs:
        fr = _as_fraction(float(d) / ref)
        if fr is None:
            return None
        fracs.append(fr)
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs), 1)
    ints = [int(f * den) for f in fracs]
    g = reduce(math.gcd, ints, 0) or 1
    ints = np.array([i // g for i in ints], dtype=np.int64)
    return base, ref * g / den, ints


def _sumdiff(ind: np.ndarray) -> np.ndarray:
    """Indicator of A + A - A for an indicator on 0..n-1 (offset 0)."""
    a = ind.astype(np.int64)
    ss = np.convolve(a, a)  # A + A, offset 0
    out = np.convolve(ss, a[::-1])  # minus A, offset -(n-1)
    return out > 0


def extended_support(points, omega_cap: float = 64.0, depth_cap: int = 64) -> SupportSet:
    """Closure of A under a + b - c intersected with (0, omega_cap]."""
    a = np.unique(np.asarray(points, dtype=float))
    if a.size == 0:
        raise ValueError("empty point set")
    if np.any(a < 0):
        raise ValueError("points must be nonnegative")
    base_pts = tuple(float(x) for x in a)
    pos = a[a > 0]
    if pos.size == 0:
        return SupportSet(base_pts, 0.0, (), np.zeros(0))
    coords = _integer_coordinates(a)
    if coords is None:
        return SupportSet(base_pts, 0.0, (), np.zeros(0), dense=True)
    base, unit, n = coords
    if unit <= 0 or (omega_cap - base) / unit > 5e6:
        raise ValueError("lattice too fine for the requested cap")
    work_cap = max(omega_cap, 3.0 * float(a.max()))
    # index i <-> position base + (i + lo) * unit
    lo = -int(math.floor(base / unit + 1e-9))
    hi = int(math.floor((work_cap - base) / unit + 1e-9))
    size = hi - lo + 1
    pos_of = base + (np.arange(size) + lo) * unit
    positive = pos_of > unit * 1e-9
    ind = np.zeros(size, dtype=bool)
    ind[n - lo] = True
    cur = ind
    stable = False
    for _ in range(depth_cap):
        full = _sumdiff(cur)
        # entry t of the double convolution is the index sum i + j - k shifted by size - 1
        t = np.flatnonzero(full) - (size - 1)
        t = t[(t >= 0) & (t < size)]
        nxt = np.zeros(size, dtype=bool)
        nxt[t] = True
        nxt &= positive
        if np.array_equal(nxt, cur):
            stable = True
            break
        cur = nxt
    if not stable:
        raise RuntimeError("extended support did not stabilise within depth_cap")
    idx = np.flatnonzero(cur)
    pts = pos_of[idx]
    r_star = float(pts.min())
    ints = idx + lo
    gaps = _gap_generators(ints, hi, base, unit)
    keep = pts <= omega_cap * (1 + 1e-12)
    if gaps and min(gaps) < r_star * (1 - 1e-9):
        raise AssertionError("gap generator below R*")
    return SupportSet(base_pts, r_star, tuple(gaps), pts[keep], False, unit)


def _gap_generators(ints: np.ndarray, hi: int, base: float, unit: float) -> list[float]:
    """Greedy gap construction: off-lattice point, new gap = distance to the current lattice."""
    s = np.sort(ints)
    if s.size < 2:
        return []
    lo_valid = s[0]
    members = set(int(v) for v in s)

    def lattice_from(start: int, step: int) -> set[int]:
        k0 = start - ((start - lo_valid) // step) * step
        return set(range(k0, hi + 1, step))

    d = int(s[1] - s[0])
    q = lattice_from(int(s[0]), d)
    gaps = [d]
    qarr = np.array(sorted(q))
    while True:
        missing = sorted(members - q)
        if not missing:
            break
        z = missing[0]
        dist = int(np.min(np.abs(qarr - z)))
        if dist <= 0 or 2 * dist > gaps[-1]:
            raise AssertionError("gap halving failed")
        q = q | lattice_from(int(qarr.min()), dist) | lattice_from(z, dist)
        q = {v for v in q if v >= lo_valid}
        qarr = np.array(sorted(q))
        gaps.append(dist)
    return [g * unit for g in gaps]
