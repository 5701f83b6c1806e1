"""Stationary states: isotropic Dirac masses and non-resonant anisotropic Dirac families."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._core_py import _weights
from .kernels import TestFunction, catalog
from .measures import Measure

DELTA_TOL = 1e-6


class SamplingBudgetError(RuntimeError):
    pass


def weak_rhs_atomic(mu: Measure, f: TestFunction, alpha: float = 1.0, beta: float = 1.0, sigma: float = 0.0) -> float:
    """Collision term of the weak form paired with f, by direct triple sums over atoms."""
    x = mu.positions
    m = mu.masses
    if mu.condensate_mass > 0:
        x = np.concatenate([[0.0], x])
        m = np.concatenate([[mu.condensate_mass], m])
    if x.size == 0:
        return 0.0
    i, j, k = (a.ravel() for a in np.meshgrid(*(np.arange(x.size),) * 3, indexing="ij"))
    x1, x2, x3 = x[i], x[j], x[k]
    x4 = x1 + x2 - x3
    ok = x4 >= 0
    w = np.where(ok, _weights(x1, x2, x3, np.where(ok, x4, 0.0), sigma, alpha, beta), 0.0)
    br = f(np.where(ok, x4, 0.0)) + f(x3) - f(x1) - f(x2)
    return float(np.sum(m[i] * m[j] * m[k] * w * np.where(ok, br, 0.0)))


def isotropic_residual(m: float, omega0: float, tests: list[TestFunction] | None = None, **kw) -> float:
    """Max |weak-form right-hand side| of m delta_{omega0} over a test-function catalog."""
    if m < 0 or omega0 < 0:
        raise ValueError("m and omega0 must be nonnegative")
    tests = catalog() if tests is None else tests
    if m == 0:
        return 0.0
    mu = Measure.dirac(omega0, m)
    return max(abs(weak_rhs_atomic(mu, f, **kw)) for f in tests)


@dataclass
class VectorConfig:
    vectors: np.ndarray
    masses: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if v.size == 0:
            v = v.reshape(0, 3)
        if v.shape[1] != 3:
            raise ValueError("vectors must be 3-dimensional")
        if self.masses is None:
            self.masses = np.ones(v.shape[0])
        m = np.asarray(self.masses, dtype=float)
        if m.shape != (v.shape[0],) or np.any(m <= 0):
            raise ValueError("need one positive mass per vector")
        if v.shape[0] > 1:
            d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            if d.min() == 0:
                raise ValueError("vectors must be pairwise distinct")
        self.vectors = v
        self.masses = m

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def to_json(self) -> str:
        return json.dumps({"vectors": self.vectors.tolist(), "masses": self.masses.tolist()})

    @classmethod
    def from_json(cls, s: str) -> "VectorConfig":
        d = json.loads(s)
        return cls(np.array(d["vectors"], dtype=float), np.array(d["masses"], dtype=float))


@dataclass
class DefectTable:
    """Delta for every ordered choice (k2, k3, k4); trivial exchanges flagged."""

    index: np.ndarray
    delta: np.ndarray
    trivial: np.ndarray
    tol: float

    @property
    def stationary(self) -> bool:
        d = self.delta[~self.trivial]
        return bool(np.all(np.abs(d) > self.tol))

    def resonant(self) -> np.ndarray:
        return self.index[(~self.trivial) & (np.abs(self.delta) <= self.tol)]


def _defects(v: np.ndarray):
    n = v.shape[0]
    i2, i3, i4 = (a.ravel() for a in np.meshgrid(*(np.arange(n),) * 3, indexing="ij"))
    k2, k3, k4 = v[i2], v[i3], v[i4]
    k1 = k3 + k4 - k2
    delta = np.sum(k1 * k1, 1) + np.sum(k2 * k2, 1) - np.sum(k3 * k3, 1) - np.sum(k4 * k4, 1)
    # k2 in {k3, k4} gives k1 = the other one: an exchange with Delta = 0 identically
    trivial = (i2 == i3) | (i2 == i4)
    return np.stack([i2, i3, i4], axis=1), delta, trivial


def resonance_defect(config: VectorConfig, tol: float = DELTA_TOL) -> DefectTable:
    if len(config) < 1:
        raise ValueError("empty configuration")
    idx, delta, trivial = _defects(config.vectors)
    scale = float(np.max(np.sum(config.vectors**2, 1))) or 1.0
    return DefectTable(idx, delta, trivial, tol * scale)


def collision_terms(config: VectorConfig, tol: float = DELTA_TOL) -> list[tuple[int, int, int, int]]:
    """Nontrivial quadruples of the configuration on the resonant manifold."""
    v = config.vectors
    scale = float(np.max(np.sum(v**2, 1))) or 1.0
    out = []
    for row, d, tr in zip(*_defects(v)):
        if tr or abs(d) > tol * scale:
            continue
        k1 = v[row[1]] + v[row[2]] - v[row[0]]
        hit = np.flatnonzero(np.linalg.norm(v - k1, axis=1) <= 1e-12 * max(1.0, np.sqrt(scale)))
        for h in hit:
            out.append((int(h), int(row[0]), int(row[1]), int(row[2])))
    return out


def resonant_counterexample() -> VectorConfig:
    """Rectangle of equal-length vectors: k1 + k2 = k3 + k4 with Delta = 0, so not stationary."""
    return VectorConfig(np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]]))


def _unit_ball(rng: np.random.Generator) -> np.ndarray:
    while True:
        p = rng.uniform(-1.0, 1.0, 3)
        if p @ p <= 1.0:
            return p


def sample_nonresonant(count: int, seed: int | None = None, tol: float = DELTA_TOL, budget: int = 10_000,
                       masses=None) -> VectorConfig:
    """Greedy rejection sampling of non-resonant vectors in the unit ball."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    pts: list[np.ndarray] = []
    attempts = 0
    while len(pts) < count:
        if attempts >= budget:
            raise SamplingBudgetError(f"placed {len(pts)} of {count} vectors in {budget} attempts")
        attempts += 1
        cand = _unit_ball(rng)
        trial = np.array(pts + [cand])
        if len(pts) and np.min(np.linalg.norm(trial[:-1] - cand, axis=1)) == 0:
            continue
        idx, delta, trivial = _defects(trial)
        scale = float(np.max(np.sum(trial**2, 1))) or 1.0
        if np.all(np.abs(delta[~trivial]) > tol * scale):
            pts.append(cand)
    return VectorConfig(np.array(pts), masses)
