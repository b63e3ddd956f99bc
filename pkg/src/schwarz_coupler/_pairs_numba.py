"""``numba`` versions of the element-pair kernels in :mod:`._pairs_numpy`.

Same cut strategy and summation structure; loops replace broadcasting.
"""
import numba as nb
import numpy as np

_opts = {"nogil": True, "cache": True}


@nb.njit(**_opts)
def _kernel_value(z, knots, seg_start, seg_end):
    a = abs(z)
    nk = knots.shape[0]
    if a > knots[nk - 1]:
        return 0.0
    s = 0
    while s < nk - 2 and knots[s + 1] <= a:
        s += 1
    return seg_start[s] + (seg_end[s] - seg_start[s]) * (a - knots[s]) / (knots[s + 1] - knots[s])


@nb.njit(**_opts)
def _sorted_cuts(buf, n, lo, hi):
    for i in range(n):
        v = buf[i]
        if v < lo:
            v = lo
        elif v > hi:
            v = hi
        buf[i] = v
    # insertion sort; n is small
    for i in range(1, n):
        v = buf[i]
        j = i - 1
        while j >= 0 and buf[j] > v:
            buf[j + 1] = buf[j]
            j -= 1
        buf[j + 1] = v


@nb.njit(**_opts)
def cross_pair_integrals(xa, xb, ya, yb, nx, ny, knots, seg_start, seg_end, gx, gw):
    P = xa.shape[0]
    nk = 2 * knots.shape[0] - 1
    kinks = np.empty(nk)
    nr = knots.shape[0] - 1
    for i in range(nr):
        kinks[i] = -knots[nr - i]
        kinks[nk - 1 - i] = knots[nr - i]
    kinks[nr] = 0.0
    q = gx.shape[0]
    out = np.zeros((P, nx, ny))
    ocuts = np.empty(2 + 2 * nk)
    icuts = np.empty(2 + nk)
    inner = np.empty(ny)
    for p in range(P):
        x0, x1, y0, y1 = xa[p], xb[p], ya[p], yb[p]
        hx, hy = x1 - x0, y1 - y0
        ocuts[0] = x0
        ocuts[1] = x1
        for k in range(nk):
            ocuts[2 + k] = y0 + kinks[k]
            ocuts[2 + nk + k] = y1 + kinks[k]
        _sorted_cuts(ocuts, 2 + 2 * nk, x0, x1)
        for a in range(1 + 2 * nk):
            olen = ocuts[a + 1] - ocuts[a]
            if olen <= 0.0:
                continue
            for g in range(q):
                x = ocuts[a] + olen * gx[g]
                wx = olen * gw[g]
                icuts[0] = y0
                icuts[1] = y1
                for k in range(nk):
                    icuts[2 + k] = x - kinks[k]
                _sorted_cuts(icuts, 2 + nk, y0, y1)
                for j in range(ny):
                    inner[j] = 0.0
                for b in range(1 + nk):
                    ilen = icuts[b + 1] - icuts[b]
                    if ilen <= 0.0:
                        continue
                    for gg in range(q):
                        y = icuts[b] + ilen * gx[gg]
                        jw = _kernel_value(x - y, knots, seg_start, seg_end) * ilen * gw[gg]
                        if ny == 1:
                            inner[0] += jw
                        else:
                            lam = (y - y0) / hy
                            inner[0] += jw * (1.0 - lam)
                            inner[1] += jw * lam
                if nx == 1:
                    for j in range(ny):
                        out[p, 0, j] += wx * inner[j]
                else:
                    lam = (x - x0) / hx
                    for j in range(ny):
                        out[p, 0, j] += wx * (1.0 - lam) * inner[j]
                        out[p, 1, j] += wx * lam * inner[j]
    return out
