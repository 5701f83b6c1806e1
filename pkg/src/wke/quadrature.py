"""Graded Gauss-Legendre rules for integrands with algebraic endpoint singularities."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


LONG_RATIO = 4.0


@lru_cache(maxsize=None)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


@lru_cache(maxsize=None)
def graded_rule(n: int):
    """Nodes/weights on (0, 1) for the map u -> u^3 (10 - 15u + 6u^2).

    The map has triple zeros of its derivative at both ends, which turns
    endpoint singularities up to about x^-0.9 into smooth integrands.
    """
    x, w = _gl(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    s = u**3 * (10 - 15 * u + 6 * u * u)
    ds = 30 * u * u * (1 - u) ** 2
    return s, wu * ds


@lru_cache(maxsize=None)
def tail_rule(n: int, power: int = 6):
    """Nodes/weights on (1, inf) via x = v^-power on a graded rule in v."""
    v, wv = graded_rule(n)
    return v ** (-power), wv * power * v ** (-power - 1)


def segments_rule(breaks: np.ndarray, n: int, tail: bool = False, tail_scale: np.ndarray | None = None):
    """Nodes/weights for each row of sorted finite breakpoints.

    breaks has shape (m, k): k - 1 finite segments per row.  When tail is
    set a final segment from the last breakpoint (or tail_scale) to infinity
    is appended.  Returns arrays of shape (m, nodes).
    """
    s, ws = graded_rule(n)
    a = breaks[:, :-1, None]
    b = breaks[:, 1:, None]
    x = a + (b - a) * s[None, None, :]
    w = (b - a) * ws[None, None, :]
    # long segments away from 0: geometric map x = a (b/a)^s
    with np.errstate(divide="ignore", invalid="ignore"):
        long_ = (a > 0) & (b > LONG_RATIO * a)
        lr = np.log(np.where(long_, b / np.where(a > 0, a, 1.0), 1.0))
        xg = a * np.exp(lr * s[None, None, :])
        x = np.where(long_, xg, x)
        w = np.where(long_, xg * lr * ws[None, None, :], w)
    x = x.reshape(breaks.shape[0], -1)
    w = w.reshape(breaks.shape[0], -1)
    if tail:
        lt = breaks[:, -1] if tail_scale is None else tail_scale
        tx, tw = tail_rule(n)
        x = np.concatenate([x, lt[:, None] * tx[None, :]], axis=1)
        w = np.concatenate([w, lt[:, None] * tw[None, :]], axis=1)
    return x, w
