from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wke.measures import (LatticeMeasure, Measure, extended_support, project_to_lattice, theta_rho_norm,
                          total_energy, total_mass, weak_distance, weighted_norm_rho)

atoms = st.lists(st.tuples(st.floats(0.05, 8.0), st.floats(0.01, 2.0)), min_size=1, max_size=5)


def test_mass_energy_examples():
    assert (total_mass(Measure.dirac(1.0, 3.0)), total_energy(Measure.dirac(1.0, 3.0))) == (3.0, 3.0)
    c = Measure(2.0)
    assert (total_mass(c), total_energy(c)) == (2.0, 0.0)
    d = Measure.from_density(np.linspace(0, 1, 11), np.ones(10))
    assert total_mass(d) == pytest.approx(1.0, rel=1e-14)
    assert total_energy(d) == pytest.approx(0.5, rel=1e-14)


def test_measure_validation():
    with pytest.raises(ValueError):
        Measure.atoms([(1.0, -1.0)])
    with pytest.raises(ValueError):
        Measure.atoms([(0.0, 1.0)])
    with pytest.raises(ValueError):
        Measure(-1.0)
    m = Measure.atoms([(2.0, 1.0), (1.0, 0.5), (2.0, 0.25)])
    assert list(m.positions) == [1.0, 2.0] and list(m.masses) == [0.5, 1.25]


@given(atoms, st.floats(0.0, 2.0))
def test_json_roundtrip(pairs, cond):
    m = Measure.atoms(pairs, condensate=cond)
    back = Measure.from_json(m.to_json())
    assert back.condensate_mass == m.condensate_mass
    assert np.array_equal(back.positions, m.positions) and np.array_equal(back.masses, m.masses)


def test_weighted_norm_examples():
    assert weighted_norm_rho(Measure(), 1.0) == 0.0
    # sup over R in [1, 2) of (1 + R)/R, attained at R = 1
    grid = np.linspace(1.0, 2.0, 100001)[:-1]
    oracle = float(np.max((1 + grid) / grid))
    assert weighted_norm_rho(Measure.dirac(1.0), -1.0) == pytest.approx(oracle, rel=1e-12)


@given(atoms, st.floats(-2.0, 2.0))
def test_weighted_norm_homogeneous(pairs, rho):
    m = Measure.atoms(pairs)
    assert weighted_norm_rho(m.scaled(2.0), rho) == pytest.approx(2.0 * weighted_norm_rho(m, rho), rel=1e-12)


def test_theta_rho_norm_examples():
    assert theta_rho_norm(Measure(), 2.0, 0.5) == 0.0
    # family 0 contributes 1; the dyadic tail sup over R >= 1 of mu([R/2, R]) R^(rho - 1) is 1 at R = 1
    assert theta_rho_norm(Measure.dirac(1.0), 2.0, 0.5) == pytest.approx(2.0)
    # family 2 at 1/4: (2^2)^2 = 16 and no mass at R >= 1
    assert theta_rho_norm(Measure.dirac(0.25), 2.0, 0.5) == pytest.approx(16.0)
    assert theta_rho_norm(LatticeMeasure(2, np.array([1]), np.array([1.0])), 2.0, 0.5) == pytest.approx(16.0)


def test_weak_distance_examples():
    a = Measure.atoms([(1.0, 0.5), (3.0, 1.0)])
    assert weak_distance(a, a) == 0.0
    assert weak_distance(Measure(1.0), Measure.dirac(1.0)) > 0.0


@given(atoms, atoms, atoms)
def test_weak_distance_metric(p, q, r):
    a, b, c = Measure.atoms(p), Measure.atoms(q), Measure.atoms(r)
    assert weak_distance(a, b, omega_cap=16) == weak_distance(b, a, omega_cap=16)
    assert weak_distance(a, c, omega_cap=16) <= weak_distance(a, b, omega_cap=16) + weak_distance(b, c, omega_cap=16) + 1e-12


@given(atoms, st.floats(0.0, 0.01))
def test_weak_distance_lipschitz_in_shift(p, eps):
    # dictionary functions are 1-Lipschitz, so shifting every atom by eps moves the distance by <= eps * mass
    a = Measure.atoms(p)
    b = Measure.atoms([(x + eps, m) for x, m in p])
    assert weak_distance(a, b, omega_cap=16) <= eps * total_mass(a) + 1e-12


def test_extended_support_examples():
    s = extended_support([1.0])
    assert list(s.points) == [1.0] and s.r_star == 1.0
    s = extended_support([1.0, 2.0], omega_cap=10)
    assert list(s.points) == list(np.arange(1.0, 11.0)) and s.r_star == 1.0 and s.gaps == (1.0,)
    s = extended_support([2.0, 3.0], omega_cap=10)
    assert list(s.points) == list(np.arange(1.0, 11.0)) and s.r_star == 1.0
    # two points always generate the discrete progression base + k (difference)
    s = extended_support([1.0, math.sqrt(2)], omega_cap=4)
    assert not s.dense and s.r_star == pytest.approx(3 - 2 * math.sqrt(2))
    # irrationally related differences make the closure dense
    assert extended_support([1.0, 2.0, 1.0 + math.sqrt(2)]).dense


def _naive_closure(pts: set[int], bound: int) -> set[int]:
    cur = set(pts)
    while True:
        new = {a + b - c for a, b, c in itertools.product(cur, repeat=3)}
        new = {x for x in new if 0 < x <= bound}
        if new == cur:
            return cur
        cur = new


@given(st.sets(st.integers(1, 12), min_size=1, max_size=3), st.integers(4, 20))
def test_extended_support_matches_naive_closure(pts, cap):
    bound = max(cap, 3 * max(pts))
    oracle = sorted(x for x in _naive_closure(pts, bound) if x <= cap)
    s = extended_support(sorted(float(p) for p in pts), omega_cap=float(cap))
    assert list(s.points) == [float(x) for x in oracle]
    assert s.r_star == float(min(_naive_closure(pts, bound)))


def test_project_to_lattice_examples():
    lm = project_to_lattice(Measure.dirac(1.0), 3)
    assert list(lm.positions) == [1.0]
    lm = project_to_lattice(Measure.dirac(0.25), 2)
    assert list(lm.positions) == [0.25] and list(lm.families()) == [2]
    with pytest.raises(ValueError):
        project_to_lattice(Measure.dirac(0.3), 1)


@given(atoms)
def test_pushforward_preserves_mass(p):
    m = Measure.atoms(p)
    assert total_mass(m.pushforward(3.0)) == pytest.approx(total_mass(m))
    assert total_energy(m.pushforward(3.0)) == pytest.approx(3.0 * total_energy(m))
