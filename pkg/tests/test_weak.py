from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wke import weak
from wke.kernels import KernelParams, convex_catalog, hat, square
from wke.measures import Measure, total_energy, total_mass, weak_distance

small_atoms = st.lists(st.tuples(st.integers(1, 6), st.floats(0.05, 1.0)), min_size=2, max_size=4)


def _cfg(**kw):
    base = dict(horizon=2.0, n_samples=5, omega_cap=16.0, sigma_schedule=[1.0])
    base.update(kw)
    return weak.WeakRunConfig(**base)


@pytest.mark.parametrize("mode", weak.MODES)
def test_single_dirac_unchanged(mode):
    mu = Measure.dirac(1.5, 2.0)
    out = weak.weak_step(mu, KernelParams(0.0), 0.7, mode=mode, alpha=0.3, beta=0.6)
    assert np.array_equal(out.positions, mu.positions) and np.array_equal(out.masses, mu.masses)


def test_general_mode_reduces_to_limits():
    mu = Measure.atoms([(1.0, 0.4), (2.0, 0.3)], condensate=0.5)
    p = KernelParams(0.0)
    for (a, b), mode in (((1.0, 1.0), "interacting"), ((0.0, 0.0), "noninteracting")):
        g = weak.weak_step(mu, p, 0.5, mode="general", alpha=a, beta=b, omega_cap=8)
        ref = weak.weak_step(mu, p, 0.5, mode=mode, omega_cap=8)
        assert g.condensate_mass == ref.condensate_mass
        assert np.array_equal(g.masses, ref.masses)


def test_interaction_mode_matters_with_condensate():
    mu = Measure.atoms([(1.0, 0.4), (2.0, 0.3)], condensate=0.5)
    a = weak.weak_step(mu, KernelParams(0.0), 0.5, mode="interacting", omega_cap=8)
    b = weak.weak_step(mu, KernelParams(0.0), 0.5, mode="noninteracting", omega_cap=8)
    assert weak_distance(a, b) > 1e-6


def test_sigma_continuation_delta_constant():
    rep = weak.sigma_continuation(Measure.dirac(1.0), _cfg(sigma_schedule=[1.0, 0.5, 0.25, 0.0]))
    assert np.all(rep.mass == 1.0) and np.all(rep.energy == 1.0)
    assert all(s.positions.tolist() == [1.0] for s in rep.snapshots)
    assert rep.meta["cauchy_distances"] == [0.0, 0.0, 0.0]


def test_sigma_continuation_two_atoms_cauchy():
    mu = Measure.atoms([(1.0, 0.5), (2.0, 0.5)])
    rep = weak.sigma_continuation(mu, _cfg(horizon=20.0, n_samples=11, omega_cap=20,
                                          sigma_schedule=[0.5, 0.25, 0.125, 0.0625, 0.0]))
    gaps = rep.meta["cauchy_distances"]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert np.allclose(rep.mass, 1.0, rtol=1e-12)


def test_sigma_cuts_low_energies():
    # atoms below sigma do not interact at all
    mu = Measure.atoms([(0.25, 0.5), (0.5, 0.5)])
    rep = weak.run_weak(mu, KernelParams(0.5), _cfg(omega_cap=4))
    assert np.array_equal(rep.snapshots[-1].masses, mu.masses)


@given(small_atoms, st.sampled_from([0.0, 0.5]))
def test_conservation_and_convex_monotonicity(pairs, sigma):
    mu = Measure.atoms([(float(k), m) for k, m in pairs])
    rep = weak.run_weak(mu, KernelParams(sigma), _cfg(horizon=3.0, n_samples=7, omega_cap=24, diagnostics=False))
    m0, e0 = total_mass(mu), total_energy(mu)
    assert np.allclose(rep.mass, m0, rtol=1e-10) and np.allclose(rep.energy, e0, rtol=1e-10)
    for f in convex_catalog():
        assert weak.monotone_functional_check(rep, f, floor=1e-8)


def test_smooth_data_conserve():
    edges = np.linspace(0.0, 3.0, 31)
    c = 0.5 * (edges[1:] + edges[:-1])
    mu = Measure.from_density(edges, np.where((c > 0.5) & (c < 2.5), (c - 0.5) ** 2 * (2.5 - c) ** 2, 0.0))
    rep = weak.run_weak(mu, KernelParams(0.0), _cfg(horizon=2.0, omega_cap=8.0, h=0.1))
    T = rep.times[-1]
    assert np.max(np.abs(rep.mass / rep.mass[0] - 1)) / T <= 1e-6
    assert np.max(np.abs(rep.energy / rep.energy[0] - 1)) / T <= 1e-4
    assert weak.monotone_functional_check(rep, square())


def test_affine_functional_constant():
    mu = Measure.atoms([(1.0, 0.3), (3.0, 0.7)])
    rep = weak.run_weak(mu, KernelParams(0.0), _cfg(horizon=5.0, omega_cap=16))
    v = rep.integrals(lambda w: 2.0 + 3.0 * w)
    assert np.max(np.abs(v - v[0])) <= 1e-12 * abs(v[0])


def test_tightness():
    rep = weak.run_weak(Measure.dirac(1.0), KernelParams(0.0), _cfg())
    assert weak.tightness_check(rep, 2.0, 0.5)
    mu = Measure.atoms([(1.0, 0.5), (2.0, 0.5)])
    rep = weak.run_weak(mu, KernelParams(0.0), _cfg(horizon=10.0, omega_cap=32))
    for r in (1.0, 2.0, 4.0):
        for eta in (0.1, 0.5):
            assert weak.tightness_check(rep, r, eta)
    # synthetic trajectory: mass teleported far outward
    bad = weak.build_report([0.0, 1.0], [Measure.dirac(1.0), Measure.dirac(100.0)], 1.0, 128.0)
    assert not weak.tightness_check(bad, 2.0, 0.5)


def test_hat_functional_nondecreasing():
    mu = Measure.atoms([(1.0, 0.5), (2.0, 0.5)])
    rep = weak.run_weak(mu, KernelParams(0.0), _cfg(horizon=10.0, omega_cap=32))
    assert weak.monotone_functional_check(rep, hat(0.5))
    assert not weak.monotone_functional_check([1.0, 0.5])


def test_dirac_diagnostics():
    rep = weak.run_weak(Measure.dirac(3.0, 2.0), KernelParams(0.0), _cfg())
    d = weak.asymptotics_diagnostics(rep)
    assert d.r_star == 3.0 and np.all(d.dist == 0.0)
    fr = weak.energy_front(rep)
    assert np.all(fr.radius == fr.radius[0])


def test_condensing_run_alternative_i():
    mu = Measure.atoms([(1.0, 0.2), (2.0, 0.2), (3.0, 0.1)], condensate=1.0)
    rep = weak.run_weak(mu, KernelParams(0.0), _cfg(horizon=20.0, n_samples=21, omega_cap=32))
    d = weak.asymptotics_diagnostics(rep)
    assert d.verdict == "i"
    assert np.all(np.diff(rep.condensate) >= -1e-12)


def test_offdiagonal_diagnostic():
    single = weak.run_weak(Measure.dirac(2.0), KernelParams(0.0), _cfg())
    assert np.all(weak.offdiagonal_mass_diagnostic(single, [1.0, 2.0, 4.0], 0.25).offdiag == 0.0)
    pair = weak.run_weak(Measure.atoms([(1.0, 0.5), (2.0, 0.5)]), KernelParams(0.0), _cfg(omega_cap=16))
    res = weak.offdiagonal_mass_diagnostic(pair, [2.0, 4.0, 8.0], 0.25)
    assert np.all(res.offdiag > 0) and res.ok


def test_config_validation():
    with pytest.raises(ValueError):
        weak.WeakRunConfig(sigma_schedule=[0.5, 1.0])
    with pytest.raises(ValueError):
        weak.WeakRunConfig(mode="bogus")
    with pytest.raises(ValueError):
        weak.lattice_for(Measure.atoms([(1.0, 1.0), (np.sqrt(2), 1.0), (1.5, 1.0)]), 8.0)


def test_csv_columns():
    rep = weak.run_weak(Measure.dirac(1.0), KernelParams(0.0), _cfg())
    head = rep.to_csv().splitlines()[0].split(",")
    assert head == list(weak.RunReport.COLUMNS)
