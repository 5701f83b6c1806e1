"""Pure-numpy implementations of the hot kernels (fallback for the compiled core)."""
from __future__ import annotations

import numpy as np


def _weights(xi, xj, xk, xl, sigma, alpha, beta):
    """Kernel ratio Phi_sigma / sqrt(xi xj xk) with the zero-slot limits."""
    zi, zj, zk = xi <= 0.0, xj <= 0.0, xk <= 0.0
    nzero = zi.astype(np.int64) + zj + zk
    m = np.minimum(np.minimum(xi, xj), np.minimum(xk, xl))
    if sigma > 0.0:
        kern = np.sqrt(np.clip(m - sigma, 0.0, None))
    else:
        kern = np.sqrt(np.clip(m, 0.0, None))
    prod = np.where(nzero == 0, xi * xj * xk, 1.0)
    w = np.where(nzero == 0, kern / np.sqrt(prod), 0.0)
    if sigma == 0.0:
        one = nzero == 1
        s1 = one & zi & (xj > xk)
        s2 = one & zj & (xi > xk)
        s3 = one & zk
        w = np.where(s1, beta / np.sqrt(np.where(s1, xj * xk, 1.0)), w)
        w = np.where(s2, beta / np.sqrt(np.where(s2, xi * xk, 1.0)), w)
        w = np.where(s3, alpha / np.sqrt(np.where(s3, xi * xj, 1.0)), w)
    return w


def collision_rates(m, x0, h, sigma, alpha=1.0, beta=1.0):
    """Mass derivatives on the affine lattice x_n = x0 + n h.

    Returns (dm, defect) where defect is the total rate of the resonant
    triples dropped because one of their outputs falls beyond the lattice.
    """
    m = np.ascontiguousarray(m, dtype=float)
    n = m.shape[0]
    nz = np.flatnonzero(m > 0)
    dm = np.zeros(n)
    defect = 0.0
    if nz.size == 0:
        return dm, defect
    mv = m[nz]
    x = x0 + nz * h
    J, K = np.meshgrid(np.arange(nz.size), np.arange(nz.size), indexing="ij")
    J = J.ravel()
    K = K.ravel()
    for a in range(nz.size):
        sel = J >= a
        jj, kk = J[sel], K[sel]
        i = nz[a]
        j = nz[jj]
        k = nz[kk]
        l = i + j - k
        keep = (k != i) & (k != j) & (l >= 0)
        jj, kk, j, k, l = jj[keep], kk[keep], j[keep], k[keep], l[keep]
        xl = x0 + l * h
        keep = xl > 0
        jj, kk, j, k, l, xl = jj[keep], kk[keep], j[keep], k[keep], l[keep], xl[keep]
        if jj.size == 0:
            continue
        xi = np.full(jj.size, x[a])
        w = _weights(xi, x[jj], x[kk], xl, sigma, alpha, beta)
        fac = np.where(j == i, 1.0, 2.0)
        r = fac * mv[a] * mv[jj] * mv[kk] * w
        mn = np.minimum(np.minimum(i, j), k)
        out = (i + j + k - 2 * mn) > n - 1
        defect += float(r[out].sum())
        ok = ~out & (r != 0)
        r, j, k, l = r[ok], j[ok], k[ok], l[ok]
        dm[i] -= r.sum()
        dm -= np.bincount(j, weights=r, minlength=n)
        dm += np.bincount(k, weights=r, minlength=n)
        dm += np.bincount(l, weights=r, minlength=n)
    return dm, defect


def _span(a, b, c):
    return a + b + c - 2.0 * np.minimum(np.minimum(a, b), c)


def mild_rates(x, wq, f, sigma, truncate=True):
    """Loss rate A(x_i) and gain O(x_i) by tensor quadrature over (w3, w4) on the nodes.

    A = (1/sqrt w1) sum wq3 wq4 Phi_sigma f3 (2 f2 - f4),  O = sum wq3 wq4 Phi_sigma f2 f3 f4,
    with w2 = w3 + w4 - w1 and f2 linearly interpolated.  Each cubic term is
    kept only when every fourth point its three frequencies generate,
    a + b + c - 2 min(a, b, c), stays on the grid: the cutoff of the lattice
    solver, so both discretize the same truncated equation.  With
    truncate=False only x2 <= top is imposed, so all terms share one domain.
    """
    x = np.asarray(x, dtype=float)
    wq = np.asarray(wq, dtype=float)
    f = np.asarray(f, dtype=float)
    n = x.size
    A = np.zeros(n)
    O = np.zeros(n)
    top = x[-1]
    act = np.flatnonzero((f != 0) & (x > sigma))
    if act.size == 0:
        return A, O
    x3 = x[act][:, None]
    f3 = f[act][:, None]
    w3 = wq[act][:, None]
    x4 = x[None, :]
    f4 = f[None, :]
    w34 = w3 * wq[None, :]
    for i in range(n):
        x1 = x[i]
        if x1 <= sigma or x1 <= 0.0:
            continue
        x2 = x3 + x4 - x1
        ok = (x2 >= 0) & (x2 <= top)
        f2 = np.interp(np.clip(x2, 0, top), x, f)
        mn = np.minimum(np.minimum(x1, x2), np.minimum(x3, x4)) - sigma
        phi = np.sqrt(np.clip(mn, 0.0, None))
        wt = np.where(ok, w34 * phi * f3, 0.0)
        k123 = (_span(x1, x2, x3) <= top) | (not truncate)
        k134 = (_span(x1, x3, x4) <= top) | (not truncate)
        k234 = (_span(x2, x3, x4) <= top) | (not truncate)
        A[i] = float(np.sum(wt * (2.0 * f2 * k123 - f4 * k134))) / np.sqrt(x1)
        O[i] = float(np.sum(wt * f2 * f4 * k234))
    return A, O
