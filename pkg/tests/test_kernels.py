from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wke.kernels import (KernelParams, OrderedTriple, affine, catalog, convex_catalog, delta_phi_sigma,
                         g_sigma_phi, h1_h2, order_triple, phi, phi_sigma, spline_bump, square, w_kernel)

pos = st.floats(0.01, 50.0, allow_nan=False)
sig = st.floats(0.0, 2.0)


def test_phi_values():
    assert phi(1, 1, 1, 1) == 1.0
    assert phi(1, 4, 2, 3) == 1.0
    assert phi(5, -1, 1, 3) == 0.0


def test_phi_sigma_values():
    assert phi_sigma(KernelParams(1.0), 2, 2, 2, 2) == 1.0
    assert phi_sigma(KernelParams(1.0), 1, 9, 9, 9) == 0.0


@given(pos, pos, pos, pos)
def test_phi_sigma_zero_is_phi(a, b, c, d):
    assert phi_sigma(KernelParams(0.0), a, b, c, d) == phi(a, b, c, d)


def test_kernel_params_rejects_negative():
    with pytest.raises(ValueError):
        KernelParams(-0.1)
    with pytest.raises(ValueError):
        KernelParams(float("nan"))


def test_w_kernel_values():
    assert w_kernel(1, 1, 1) == 1.0
    assert w_kernel(4, 1, 1) == 0.0
    # second frequency is 7, so the min of the roots is sqrt(1)
    assert w_kernel(1, 4, 4) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        w_kernel(0.0, 1, 1)


def test_order_triple():
    assert order_triple(3, 1, 2) == OrderedTriple(3, 2, 1)
    assert order_triple(2, 2, 1) == OrderedTriple(2, 2, 1)
    assert order_triple(5, 5, 5) == OrderedTriple(5, 5, 5)


def test_h1_h2_square():
    h1, h2 = h1_h2(square(), (1, 2, 3))
    assert (h1, h2) == (2.0, 4.0)


@given(pos, pos, pos, st.floats(-3, 3), st.floats(-3, 3))
def test_h1_h2_affine_vanish(a, b, c, p, q):
    h1, h2 = h1_h2(affine(p, q), (a, b, c))
    assert abs(h1) <= 1e-12 * (1 + abs(q) * (a + b + c))
    assert abs(h2) <= 1e-12 * (1 + abs(q) * (a + b + c))


@given(pos, pos, pos)
def test_h1_h2_concave_nonpositive(a, b, c):
    sq = lambda w: np.sqrt(np.maximum(w, 0.0))
    t = order_triple(a, b, c)
    h1, h2 = h1_h2(sq, t)
    assert h1 <= 1e-12
    # the second combination only carries weight where w0 + w- >= w+
    if t.omega_zero + t.omega_minus >= t.omega_plus:
        assert h2 <= 1e-12


@given(pos, pos, pos)
def test_g_zero_decomposes_into_h(a, b, c):
    for f in catalog():
        t = order_triple(a, b, c)
        h1, h2 = h1_h2(f, t)
        rhs = (math.sqrt(t.omega_minus) * h1
               + math.sqrt(max(t.omega_zero + t.omega_minus - t.omega_plus, 0.0)) * h2) / 3.0
        lhs = g_sigma_phi(KernelParams(0.0), f, a, b, c)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * (1 + a + b + c) ** 2)


@given(pos, sig)
def test_g_sigma_diagonal(a, s):
    for f in catalog():
        assert g_sigma_phi(KernelParams(s), f, a, a, a) == pytest.approx(0.0, abs=1e-12)


@given(pos, pos, pos, sig)
def test_g_sigma_convex_nonnegative(a, b, c, s):
    for f in convex_catalog():
        v = g_sigma_phi(KernelParams(s), f, a, b, c)
        assert v >= -1e-10 * (1 + a + b + c) ** 2


@given(pos, pos, pos, sig, st.floats(-2, 2), st.floats(-2, 2))
def test_g_sigma_affine_zero(a, b, c, s, p, q):
    v = g_sigma_phi(KernelParams(s), affine(p, q), a, b, c)
    assert abs(v) <= 1e-11 * (1 + a + b + c) ** 2


@given(pos, pos, st.floats(0, 10), sig)
def test_delta_vanishes_above_sum(a, b, extra, s):
    assert delta_phi_sigma(KernelParams(s), square(), a, b, a + b + extra) == 0.0


@given(pos, pos, pos, sig)
def test_delta_swap_symmetric(a, b, c, s):
    p = KernelParams(s)
    f = spline_bump(2.0, 0.7)
    assert delta_phi_sigma(p, f, a, b, c) == pytest.approx(delta_phi_sigma(p, f, b, a, c), rel=1e-12, abs=1e-15)


@given(pos, pos, pos, sig)
def test_delta_affine_zero(a, b, c, s):
    assert abs(delta_phi_sigma(KernelParams(s), affine(1.0, 2.0), a, b, c)) <= 1e-10


@given(pos, pos, pos, st.floats(0.1, 10.0))
def test_kernel_homogeneity(a, b, c, lam):
    # Phi is homogeneous of degree 1/2 in the frequencies
    d = a + b - c
    assert phi(lam * a, lam * b, lam * c, lam * d) == pytest.approx(math.sqrt(lam) * phi(a, b, c, d), rel=1e-12)


@given(pos, pos, sig)
def test_zero_slot_limit_is_continuous(b, c, s):
    # the sigma = 0 ratio extends continuously to one vanishing argument
    f = square()
    eps = 1e-9
    if b <= c + 1e-3:
        return
    lim = delta_phi_sigma(KernelParams(0.0), f, 0.0, b, c)
    near = delta_phi_sigma(KernelParams(0.0), f, eps, b, c)
    assert near == pytest.approx(lim, rel=1e-3, abs=1e-6)


def test_spline_bump_support_and_derivative():
    f = spline_bump(2.0, 0.5)
    assert f(0.9) == 0.0 and f(3.1) == 0.0
    assert f(2.0) == pytest.approx(1.0)
    x = np.linspace(1.2, 2.8, 9)
    num = (f(x + 1e-6) - f(x - 1e-6)) / 2e-6
    assert np.allclose(f.deriv(x), num, atol=1e-5)
