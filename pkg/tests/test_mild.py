from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wke import mild as ml
from wke.kernels import KernelParams
from wke.measures import Measure, total_mass

P0 = KernelParams(0.0)


def bump_g(c=1.0, w=0.3):
    def g(x):
        return math.sqrt(x) * math.exp(-((x - c) / w) ** 2) if abs(x - c) < 2.5 * w else 0.0

    return g


def bump_f(c=1.0, w=0.3):
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x - c) < 2.5 * w, np.exp(-((x - c) / w) ** 2), 0.0)

    return f


def test_a_sigma_trivial_cases():
    assert ml.a_sigma(lambda w: 0.0, P0, 1.0, cap=4.0) == 0.0
    assert ml.a_sigma(Measure(0.0, np.zeros(0), np.zeros(0)), KernelParams(0.5), 1.0) == 0.0
    # support inside (0, sigma]
    mu = Measure.atoms([(0.2, 1.0), (0.4, 2.0)])
    assert ml.a_sigma(mu, KernelParams(0.5), 1.0) == 0.0
    assert ml.a_sigma(lambda w: math.sqrt(w) if w <= 0.5 else 0.0, KernelParams(0.5), 1.0, cap=2.0) == 0.0


def test_a_sigma_rejects_atoms_without_sigma():
    with pytest.raises(ValueError):
        ml.a_sigma(Measure.dirac(1.0), P0, 1.0)


@given(st.lists(st.tuples(st.floats(0.6, 4.0), st.floats(0.01, 2.0)), min_size=1, max_size=4,
                unique_by=lambda p: round(p[0], 6)), st.floats(0.55, 5.0))
def test_a_sigma_nonnegative_on_atoms(pairs, w1):
    assert ml.a_sigma(Measure.atoms(pairs), KernelParams(0.5), w1) >= -1e-12


def test_o_sigma_two_atoms():
    o = ml.o_sigma(Measure.atoms([(1.0, 1.0), (2.0, 1.0)]), P0)
    np.testing.assert_allclose(o.positions, [1.0, 2.0, 3.0])
    # only (w2, w3, w4) = (1, 2, 2) reaches 3: Phi(3, 1, 2, 2) / sqrt(1 2 2)
    assert o.masses[2] == pytest.approx(0.5, rel=1e-14)
    assert np.all(o.masses > 0)
    assert total_mass(ml.o_sigma(Measure(0.0, np.zeros(0), np.zeros(0)), P0)) == 0.0


@given(st.lists(st.tuples(st.floats(0.1, 3.0), st.floats(0.01, 2.0)), min_size=1, max_size=4,
                unique_by=lambda p: round(p[0], 6)))
def test_o_sigma_total_mass_bound(pairs):
    mu = Measure.atoms(pairs)
    o = ml.o_sigma(mu, P0)
    a = float(np.sum(mu.masses / np.sqrt(mu.positions)))
    assert total_mass(o) <= a * a * total_mass(mu) * (1 + 1e-12)


def test_pointwise_operators_match_grid_rates():
    g = bump_g()
    grid = ml.MildGrid.uniform(0.01, 6.0)
    A, Of, _ = ml.rates(ml.MildState.from_f(bump_f(), grid, P0))
    for w in (0.5, 1.0, 1.5):
        i = int(round(w / 0.01))
        assert A[i] == pytest.approx(ml.a_sigma(g, P0, w, cap=6.0, tol=1e-8), rel=1e-3)
        assert Of[i] == pytest.approx(ml.o_sigma(g, P0, w, cap=6.0, tol=1e-8) / math.sqrt(w), rel=1e-3)


def test_rayleigh_jeans_pointwise_balance():
    g = lambda w: math.sqrt(w) / (1.0 + w)
    for w in (0.5, 1.0, 2.0):
        loss = ml.a_sigma(g, P0, w, cap=6.0, tol=1e-10) / (1.0 + w)
        gain = ml.o_sigma(g, P0, w, cap=6.0, tol=1e-10) / math.sqrt(w)
        assert gain - loss == pytest.approx(0.0, abs=1e-7 * gain)


def test_rayleigh_jeans_step_unchanged():
    grid = ml.MildGrid.uniform(0.05, 8.0)
    s0 = ml.MildState.from_f(lambda w: 1.0 / (w + 1.0), grid, P0, truncate=False)
    s1 = ml.mild_step(s0, 0.1)
    assert np.max(np.abs(s1.f - s0.f)) <= 1e-12
    assert s1.truncate is False


def test_zero_state_stays_zero():
    grid = ml.MildGrid.uniform(0.1, 4.0)
    s0 = ml.MildState.from_f(lambda w: np.zeros_like(w), grid, P0)
    assert np.all(ml.mild_step(s0, 0.7).f == 0.0)
    run = ml.run_mild(s0, 5.0)
    assert run.verdict == "completed" and run.t_end == 5.0
    assert all(r[1] == 0.0 and r[3] == 0.0 for r in run.rows)


def test_step_rejects_nonpositive_dt():
    s0 = ml.MildState.from_f(bump_f(), ml.MildGrid.uniform(0.1, 4.0), P0)
    with pytest.raises(ValueError):
        ml.mild_step(s0, 0.0)


def test_state_rejects_negative_density():
    with pytest.raises(ValueError):
        ml.MildState.from_f(lambda w: w - 1.0, ml.MildGrid.uniform(0.1, 2.0), P0)


def test_mass_balance_one_step():
    grid = ml.MildGrid.uniform(0.02, 6.0)
    s0 = ml.MildState.from_f(bump_f(), grid, KernelParams(0.3))
    A, Of, _ = ml.rates(s0)
    sq = np.sqrt(grid.nodes)
    predicted = float(np.dot(grid.weights, sq * (Of - A * s0.f)))
    dt = 1e-4
    s1 = ml.mild_step(s0, dt)
    assert (s1.mass() - s0.mass()) / dt == pytest.approx(predicted, rel=1e-3, abs=1e-12)


def test_positivity_and_completion_with_sigma():
    grid = ml.MildGrid.uniform(0.05, 6.0)
    s0 = ml.MildState.from_f(bump_f(1.0, 0.4), grid, KernelParams(0.5))
    run = ml.run_mild(s0, 10.0, sample_times=[1.0, 5.0])
    assert run.verdict == "completed"
    assert run.t_end == pytest.approx(10.0)
    assert min(r[4] for r in run.rows) >= 0.0
    assert set(run.snapshots) == {1.0, 5.0}
    assert run.a_min >= -1e-12
    assert run.to_csv().splitlines()[0] == "t,mass,energy,sup_norm,min_f"


def test_energy_conserved_without_truncation_loss():
    grid = ml.MildGrid.uniform(0.02, 8.0)
    s0 = ml.MildState.from_f(bump_f(1.0, 0.25), grid, KernelParams(0.5))
    run = ml.run_mild(s0, 1.0)
    e = np.array([r[2] for r in run.rows])
    assert np.max(np.abs(e - e[0])) / e[0] <= 1e-4


def test_rates_backends_agree_with_and_without_truncation():
    _core = pytest.importorskip("wke._core")
    from wke import _core_py

    grid = ml.MildGrid.geometric(1e-3, 5.0, 30, h_max=0.1)
    f = np.exp(-grid.nodes) * (1 + np.sin(3 * grid.nodes) ** 2)
    for trunc in (True, False):
        a = _core.mild_rates(grid.nodes, grid.weights, f, 0.2, trunc, 2)
        b = _core_py.mild_rates(grid.nodes, grid.weights, f, 0.2, trunc)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(a[1], b[1], rtol=1e-11, atol=1e-13)


def test_blowup_search_dichotomy_small():
    grid = ml.MildGrid.geometric(1e-5, 4.0, 40, h_max=0.1)
    res = ml.blowup_search(grid, 20.0, r=1.0, nu0=0.5, max_doublings=6, max_dt=0.1)
    assert res.run.blew_up
    assert res.run.growth >= 1e3
    st2 = ml.MildState.from_f(ml.concentrated_profile(res.nu, 1.0), grid, KernelParams(0.5))
    assert ml.run_mild(st2, 20.0, max_dt=0.1).verdict == "completed"


def test_grids():
    g = ml.MildGrid.uniform(0.5, 2.0)
    np.testing.assert_allclose(g.nodes, [0, 0.5, 1.0, 1.5, 2.0])
    assert g.weights.sum() == pytest.approx(2.0)
    geo = ml.MildGrid.geometric(1e-3, 4.0, 20, h_max=0.5)
    assert geo.nodes[0] == 0.0 and geo.nodes[-1] == pytest.approx(4.0)
    assert geo.spacing == pytest.approx(0.5)
