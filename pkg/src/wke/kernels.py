"""Collision kernels, ordered triples and the symmetrized test-function combinations.

All functions broadcast over numpy arrays.  Scalars in, scalars out.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ZERO_FLOOR = 1e-30


@dataclass(frozen=True)
class KernelParams:
    """Energy offset of the regularized kernel; sigma = 0 is the bare kernel."""

    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")


@dataclass(frozen=True)
class OrderedTriple:
    omega_plus: float
    omega_zero: float
    omega_minus: float


@dataclass(frozen=True)
class TestFunction:
    """A test function on [0, inf) with optional derivative and shape tag.

    kind is one of "affine", "convex", "concave" or "none".  lipschitz and
    sup_bound are optional bounds used by diagnostics.
    """

    __test__ = False  # not a pytest class

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray] | None = None
    kind: str = "none"
    lipschitz: float | None = None
    sup_bound: float | None = None
    support: tuple[float, float] | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, w):
        return self.fn(np.asarray(w, dtype=float))


def _sqrt_pos(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.where(x > 0, x, 0.0))


def phi(w1, w2, w3, w4):
    """min of the square roots, 0 when any argument is negative."""
    w1, w2, w3, w4 = (np.asarray(w, dtype=float) for w in (w1, w2, w3, w4))
    m = np.minimum(np.minimum(w1, w2), np.minimum(w3, w4))
    out = _sqrt_pos(m)
    return out if out.ndim else float(out)


def phi_sigma(params: KernelParams, w1, w2, w3, w4):
    """min over k of sqrt((w_k - sigma)_+); 0 when any argument is negative."""
    s = params.sigma
    w = [np.asarray(x, dtype=float) for x in (w1, w2, w3, w4)]
    m = np.minimum(np.minimum(w[0], w[1]), np.minimum(w[2], w[3]))
    if s == 0.0:
        out = _sqrt_pos(m)
    else:
        out = np.where(m < 0, 0.0, _sqrt_pos(m - s))
    out = np.asarray(out)
    return out if out.ndim else float(out)


def w_kernel(w1, w3, w4):
    """Phi(w1, w3 + w4 - w1, w3, w4) / sqrt(w1)."""
    w1 = np.asarray(w1, dtype=float)
    if np.any(w1 <= 0):
        raise ValueError("w_kernel requires w1 > 0")
    out = phi(w1, w3 + np.asarray(w4) - w1, w3, w4) / np.sqrt(w1)
    out = np.asarray(out)
    return out if out.ndim else float(out)


def order_triple(w1: float, w2: float, w3: float) -> OrderedTriple:
    a, b, c = sorted((float(w1), float(w2), float(w3)), reverse=True)
    return OrderedTriple(a, b, c)


def _sorted3(w1, w2, w3):
    s = np.sort(np.stack(np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (w1, w2, w3)))), axis=0)
    return s[2], s[1], s[0]


def h1_h2(f, triple):
    """The two second-difference combinations on an ordered triple."""
    if isinstance(triple, OrderedTriple):
        wp, w0, wm = triple.omega_plus, triple.omega_zero, triple.omega_minus
    else:
        wp, w0, wm = _sorted3(*triple)
    h1 = f(wp + wm - w0) + f(wp + w0 - wm) - 2.0 * f(wp)
    h2 = f(wp) + f(w0 + wm - wp) - f(w0) - f(wm)
    return h1, h2


def _bracket(f, w1, w2, w3):
    return f(w1 + w2 - w3) + f(w3) - f(w1) - f(w2)


def g_sigma_phi(params: KernelParams, f, w1, w2, w3):
    """(1/6) sum over the six orderings of Phi_sigma times the bracket.

    This is the symmetric density whose sign controls monotonicity of
    integrals of convex test functions.
    """
    w = [np.asarray(x, dtype=float) for x in (w1, w2, w3)]
    perms = ((0, 1, 2), (1, 0, 2), (0, 2, 1), (2, 0, 1), (1, 2, 0), (2, 1, 0))
    total = 0.0
    for i, j, k in perms:
        a, b, c = w[i], w[j], w[k]
        kern = phi_sigma(params, a, b, c, a + b - c)
        total = total + kern * _bracket(f, a, b, c)
    out = np.asarray(total / 6.0)
    return out if out.ndim else float(out)


def delta_phi_sigma(params: KernelParams, f, w1, w2, w3):
    """Phi_sigma / sqrt(w1 w2 w3) times the bracket, continuously extended at zeros."""
    w1, w2, w3 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (w1, w2, w3)))
    kern = phi_sigma(params, w1, w2, w3, w1 + w2 - w3)
    prod = w1 * w2 * w3
    small = np.minimum(np.minimum(w1, w2), w3) < ZERO_FLOOR
    safe = np.where(small, 1.0, prod)
    val = np.where(small, 0.0, kern / np.sqrt(safe) * _bracket(f, w1, w2, w3))
    # single zero coordinate with sigma = 0: finite limit of the kernel ratio
    if params.sigma == 0.0:
        val = val + _zero_slot_limit(f, w1, w2, w3)
    out = np.asarray(val)
    return out if out.ndim else float(out)


def _zero_slot_limit(f, w1, w2, w3):
    z1, z2, z3 = (w < ZERO_FLOOR for w in (w1, w2, w3))
    one = (z1.astype(int) + z2 + z3) == 1
    out = np.zeros(np.shape(w1))
    with np.errstate(divide="ignore", invalid="ignore"):
        br = _bracket(f, w1, w2, w3)
        m1 = one & z1 & (w2 > w3)
        out = np.where(m1, br / np.sqrt(np.where(m1, w2 * w3, 1.0)), out)
        m2 = one & z2 & (w1 > w3)
        out = np.where(m2, br / np.sqrt(np.where(m2, w1 * w3, 1.0)), out)
        m3 = one & z3
        out = np.where(m3, br / np.sqrt(np.where(m3, w1 * w2, 1.0)), out)
    return out


# ---------------------------------------------------------------- catalog


def affine(a: float = 1.0, b: float = 0.0) -> TestFunction:
    return TestFunction(
        f"affine({a},{b})",
        lambda w: a + b * w,
        lambda w: np.full_like(w, b, dtype=float),
        kind="affine",
        lipschitz=abs(b),
    )


def hat(k: float = 1.0) -> TestFunction:
    """(1 - k w)_+, convex on [0, inf)."""
    return TestFunction(
        f"hat({k})",
        lambda w: np.maximum(1.0 - k * w, 0.0),
        lambda w: np.where(w < 1.0 / k, -k, 0.0),
        kind="convex",
        lipschitz=k,
        sup_bound=1.0,
        support=(0.0, 1.0 / k),
    )


def ramp(c: float = 1.0) -> TestFunction:
    """(w - c)_+."""
    return TestFunction(
        f"ramp({c})",
        lambda w: np.maximum(w - c, 0.0),
        lambda w: np.where(w > c, 1.0, 0.0),
        kind="convex",
        lipschitz=1.0,
    )


def square() -> TestFunction:
    return TestFunction("square", lambda w: w * w, lambda w: 2.0 * w, kind="convex")


def saturating() -> TestFunction:
    """w / (1 + w), concave."""
    return TestFunction(
        "saturating",
        lambda w: w / (1.0 + w),
        lambda w: 1.0 / (1.0 + w) ** 2,
        kind="concave",
        lipschitz=1.0,
        sup_bound=1.0,
    )


def _q_profile(s):
    # Q(s) = s below 1/2, constant above 3/2, C^2 blend in between
    s = np.asarray(s, dtype=float)
    x = np.clip(s - 0.5, 0.0, 1.0)
    mid = 0.5 + x - (x**3 - 0.5 * x**4)
    return np.where(s < 0.5, s, mid)


def _q_deriv(s):
    s = np.asarray(s, dtype=float)
    x = np.clip(s - 0.5, 0.0, 1.0)
    return np.where(s < 0.5, 1.0, 1.0 - (3 * x**2 - 2 * x**3))


def coarsening_bump(r: float) -> TestFunction:
    """R Q(w / R): linear below R/2, flat above 3R/2, concave."""
    return TestFunction(
        f"coarsening({r})",
        lambda w: r * _q_profile(w / r),
        lambda w: _q_deriv(w / r),
        kind="concave",
        lipschitz=1.0,
        sup_bound=r * float(_q_profile(1.5)),
        meta={"R": r},
    )


def _bspline3(t):
    t = np.abs(np.asarray(t, dtype=float))
    return np.where(t < 1, 2 / 3 - t**2 + t**3 / 2, np.where(t < 2, (2 - t) ** 3 / 6, 0.0))


def _bspline3_d(t):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    d = np.where(a < 1, -2 * a + 1.5 * a**2, np.where(a < 2, -0.5 * (2 - a) ** 2, 0.0))
    return np.sign(t) * d


def spline_bump(center: float, width: float, height: float = 1.0) -> TestFunction:
    """Cubic B-spline bump supported on [center - 2 width, center + 2 width]."""
    c, h = float(center), float(width)
    scale = height / (2.0 / 3.0)
    return TestFunction(
        f"spline({c},{h})",
        lambda w: scale * _bspline3((w - c) / h),
        lambda w: scale * _bspline3_d((w - c) / h) / h,
        kind="none",
        lipschitz=scale * 0.5 / h,
        sup_bound=height,
        support=(c - 2 * h, c + 2 * h),
    )


def convex_catalog() -> list[TestFunction]:
    return [affine(1.0, 0.0), affine(0.0, 1.0), hat(1.0), hat(0.25), hat(4.0), ramp(1.0), ramp(3.0), square()]


def catalog() -> list[TestFunction]:
    return convex_catalog() + [saturating(), coarsening_bump(2.0), spline_bump(1.5, 0.4)]
