from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wke import lattice as lt

states = st.lists(st.tuples(st.integers(0, 2), st.integers(1, 6), st.floats(0.01, 1.0)), min_size=1, max_size=5)


def _state(rows, alpha_max=2, cap=8.0):
    s = lt.LatticeState.empty(alpha_max, cap)
    for a, k, m in rows:
        s.set(a, k, m)
    return s


def test_dyadic_points():
    assert lt.x_alpha(0, 3) == 3.0 and lt.x_alpha(1, 1) == 0.5 and lt.x_alpha(2, 1) == 0.25
    s = lt.LatticeState.empty(2, 4.0)
    s.set(1, 1, 0.5)
    assert s.get(1, 1) == 0.5 and s.positions[s.masses > 0].tolist() == [0.5]
    assert lt.LatticeState.from_json(s.to_json()).masses.tolist() == s.masses.tolist()


def test_single_point_only_trivial():
    s = lt.LatticeState.empty(0, 4.0).set(0, 1, 1.0)
    t = lt.enumerate_resonances(s)
    assert t.i.tolist() == [1] and t.l.tolist() == [1] and t.trivial.all()


def test_two_points_gain_at_three():
    s = lt.LatticeState.empty(0, 8.0).set(0, 1, 0.5).set(0, 2, 0.5)
    t = lt.enumerate_resonances(s)
    quads = {(int(i), int(j), int(k), int(l)) for i, j, k, l, tr in zip(t.i, t.j, t.k, t.l, t.trivial) if not tr}
    assert (2, 2, 1, 3) in quads
    # brute-force integer enumeration of i <= j, k with output l = i + j - k >= 1
    pts = [1, 2]
    oracle = {(i, j, k, i + j - k) for i, j, k in itertools.product(pts, repeat=3)
              if i <= j and i + j - k >= 1 and k not in (i, j)}
    assert quads == oracle


@given(states)
def test_parity_no_family_two_output(rows):
    # inputs on families 0 and 1 only (integer and half-integer points) never output an odd quarter
    s = lt.LatticeState.empty(2, 8.0)
    for a, k, m in rows:
        s.set(min(a, 1), k, m)
    t = lt.enumerate_resonances(s)
    assert np.all(lt.family_of_index(t.l, 2) <= 1)
    d = lt.lattice_rhs(s)
    assert np.all(d[s.families == 2] == 0.0)


def test_single_dirac_stationary():
    s = lt.LatticeState.empty(1, 4.0).set(0, 1, 2.0)
    assert np.all(lt.lattice_rhs(s) == 0.0)
    assert np.all(lt.lattice_rates(s)[0] == 0.0)


@given(states)
def test_rhs_sums_to_zero_and_matches_core(rows):
    s = _state(rows)
    d = lt.lattice_rhs(s, lt.enumerate_resonances(s, support_only=False))
    assert abs(d.sum()) <= 1e-13 * max(1.0, s.masses.sum() ** 3)
    core, _ = lt.lattice_rates(s)
    assert np.allclose(d, core, rtol=1e-11, atol=1e-13)


def test_slow_phase_invariants():
    t = np.linspace(0, 5, 11)
    a1, a2, a3 = lt.slow_phase_model(0.0, 0.8, 0.0, t)
    assert np.all(a1 == 0) and np.all(a3 == 0) and np.allclose(a2, 0.8)
    a1, a2, a3 = lt.slow_phase_model(0.01, 0.8, 0.02, t)
    assert np.allclose(a1 + a2 + a3, 0.83, rtol=1e-10)
    y = lt.slow_phase_rhs(0.0, [0.3, 0.4, 0.2])
    assert sum(y) == pytest.approx(0.0, abs=1e-16)


def _frozen_linear(a1, a2, a3, t):
    # a2 held fixed: two-mode linear system integrated numerically
    from scipy.integrate import solve_ivp

    c = a2 * a2 / 2.0
    rhs = lambda _t, y: [c * (y[0] + y[1] / np.sqrt(3))] * 2
    sol = solve_ivp(rhs, (0, t[-1]), [a1, a3], t_eval=t, rtol=1e-12, atol=1e-18, method="DOP853")
    return sol.y


def test_slow_phase_closed_form_solves_linear_system():
    a1, a2, a3 = 1e-4, 0.9, 2e-4
    t = np.linspace(0, 20, 201)
    c1, c3 = lt.slow_phase_closed_form(a1, a2, a3, t)
    y1, y3 = _frozen_linear(a1, a2, a3, t)
    assert np.allclose(c1, y1, rtol=1e-9) and np.allclose(c3, y3, rtol=1e-9)
    assert lt.slow_phase_rate(a2) == pytest.approx(a2 * a2 / 2 * (1 + 1 / np.sqrt(3)))


def _closed_form_error(frac):
    a1, a2, a3 = 1e-4, 1.0, 2e-4
    t = np.linspace(0, 40, 4001)
    n1, _, n3 = lt.slow_phase_model(a1, a2, a3, t)
    c1, c3 = lt.slow_phase_closed_form(a1, a2, a3, t)
    early = n1 + n3 <= frac * a2
    assert early.sum() > 10
    return max(np.max(np.abs(n1[early] - c1[early]) / n1[early]), np.max(np.abs(n3[early] - c3[early]) / n3[early]))


def test_slow_phase_closed_form_tracks_full_model():
    assert _closed_form_error(0.005) <= 0.01


@pytest.mark.xfail(strict=True, reason="frozen-a2 formula ignores a2 depletion, which is first order: "
                                        "error 0.24 once a1 + a3 reaches 0.1 a2")
def test_slow_phase_closed_form_one_percent_to_tenth():
    assert _closed_form_error(0.1) <= 0.01


def test_family_masses_examples():
    s = lt.LatticeState.empty(2, 4.0).set(1, 1, 0.5).set(2, 1, 0.25)
    fm = lt.family_masses(s)
    assert fm.tail_s[1] == pytest.approx(0.5)
    assert fm.m.sum() == pytest.approx(0.75)
    one = lt.family_masses(lt.LatticeState.empty(2, 4.0).set(0, 1, 1.0))
    assert one.tail_mass[0] == 0.0 and one.tail_s[0] == 0.0


def test_growth_bound_check():
    s = lt.LatticeState.empty(1, 4.0).set(0, 1, 1.0)
    assert lt.family_growth_bound_check([0.0, 1.0], [s, s])
    fast = lt.LatticeState.empty(1, 4.0).set(0, 1, 1.0).set(1, 1, 100.0)
    assert not lt.family_growth_bound_check([0.0, 1e-3], [s, fast])


@pytest.mark.parametrize("etas", [(0.05, 0.04), (0.1, 0.05, 0.02), (0.2, 0.1, 0.05, 0.01)])
def test_schedule_properties(etas):
    sc = lt.epsilon_schedule(len(etas) - 1, etas, c1=0.1, c2=0.2, b_const=1.0)
    assert sc.eps[0] >= 0.5
    assert sc.eps[1:].sum() <= 0.25
    assert np.all(np.diff(sc.eps) < 0)


def test_schedule_rejects_bad_eta():
    with pytest.raises(lt.InfeasibleSchedule):
        lt.epsilon_schedule(1, (0.5, 0.1))


def test_pulsation_trivial_single_family():
    res = lt.pulsating_run([1.0, 0.0], 10.0, [0.05, 0.04], n_samples=11)
    assert res.windows == {0: (0.0, 10.0)} and res.plateau_ok
    assert np.all(res.a1[:, 0] == 1.0)
