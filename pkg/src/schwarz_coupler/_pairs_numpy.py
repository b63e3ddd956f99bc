"""Vectorized numpy kernels for element-pair double integrals.

The integrand ``J(x - y) g(x, y)`` on ``[xa, xb] x [ya, yb]`` is only
piecewise smooth: ``J`` has kinks (or jumps) along the lines ``x - y = k``.
The outer interval is cut where one of those lines crosses a corner of the
``y`` element, the inner one where ``y = x - k``; Gauss-Legendre on every
piece is then exact for piecewise-polynomial integrands of moderate degree.
"""
from __future__ import annotations

import numpy as np

CHUNK = 2048


def _pieces(cuts, lo, hi):
    cuts = np.sort(np.clip(cuts, lo[..., None], hi[..., None]), axis=-1)
    return cuts[..., :-1], np.diff(cuts, axis=-1)


def pair_points(xa, xb, ya, yb, kinks, gx, gw):
    """Quadrature points ``(X, Y, W)`` of shape ``(npairs, npoints)``."""
    xa, xb, ya, yb = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (xa, xb, ya, yb))
    q = len(gx)
    outer_cuts = np.concatenate(
        [xa[:, None], xb[:, None], ya[:, None] + kinks[None, :], yb[:, None] + kinks[None, :]], axis=1
    )
    olo, olen = _pieces(outer_cuts, xa, xb)  # (P, no)
    X = olo[..., None] + olen[..., None] * gx  # (P, no, q)
    WX = olen[..., None] * gw
    yab = np.broadcast_to(ya[:, None, None], X.shape)
    ybb = np.broadcast_to(yb[:, None, None], X.shape)
    inner_cuts = np.concatenate([yab[..., None], ybb[..., None], X[..., None] - kinks], axis=-1)
    ilo, ilen = _pieces(inner_cuts, yab, ybb)  # (P, no, q, ni)
    Y = ilo[..., None] + ilen[..., None] * gx  # (P, no, q, ni, q)
    W = WX[..., None, None] * ilen[..., None] * gw
    Xf = np.broadcast_to(X[..., None, None], Y.shape)
    P = len(xa)
    return Xf.reshape(P, -1), Y.reshape(P, -1), W.reshape(P, -1)


def kernel_values(z, knots, seg_start, seg_end):
    a = np.abs(z)
    s = np.clip(np.searchsorted(knots, a, side="right") - 1, 0, len(knots) - 2)
    val = seg_start[s] + (seg_end[s] - seg_start[s]) * (a - knots[s]) / (knots[s + 1] - knots[s])
    return np.where(a > knots[-1], 0.0, val)


def shape_values(t, lo, hi, n):
    """Local shape functions on ``[lo, hi]``: ``1`` (n=1) or P1 (n=2)."""
    if n == 1:
        return np.ones(t.shape + (1,))
    lam = (t - lo[:, None]) / (hi - lo)[:, None]
    return np.stack([1.0 - lam, lam], axis=-1)


def cross_pair_integrals(xa, xb, ya, yb, nx, ny, knots, seg_start, seg_end, gx, gw):
    """``out[p, i, j] = int int J(x - y) Nx_i(x) Ny_j(y) dy dx`` per pair."""
    xa, xb, ya, yb = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (xa, xb, ya, yb))
    kinks = np.concatenate([-knots[:0:-1], [0.0], knots[1:]])
    P = len(xa)
    out = np.empty((P, nx, ny))
    for s in range(0, P, CHUNK):
        sl = slice(s, min(P, s + CHUNK))
        X, Y, W = pair_points(xa[sl], xb[sl], ya[sl], yb[sl], kinks, gx, gw)
        JW = kernel_values(X - Y, knots, seg_start, seg_end) * W
        NX = shape_values(X, xa[sl], xb[sl], nx)
        NY = shape_values(Y, ya[sl], yb[sl], ny)
        out[sl] = np.einsum("pk,pki,pkj->pij", JW, NX, NY)
    return out
