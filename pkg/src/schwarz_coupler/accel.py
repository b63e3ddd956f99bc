"""Backend selection for the element-pair quadrature kernels.

``SCHWARZ_COUPLER_NUMBA=0`` forces the pure numpy path; any other value (or
unset) uses the ``numba`` kernels when ``numba`` imports.  The flag is read
on every call so it can be flipped at runtime.
"""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

from . import _pairs_numpy

ENV_FLAG = "SCHWARZ_COUPLER_NUMBA"


@lru_cache(maxsize=1)
def _numba_module():
    try:
        from . import _pairs_numba
    except ImportError:
        return None
    return _pairs_numba


def backend() -> str:
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    if os.environ.get(ENV_FLAG, "1").strip().lower() in ("0", "false", "no", "off"):
        return "numpy"
    return "numba" if _numba_module() is not None else "numpy"


@lru_cache(maxsize=8)
def gauss_legendre01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def cross_pair_integrals(xa, xb, ya, yb, nx, ny, kernel, q=4, which=None):
    """``int_{[xa,xb]} int_{[ya,yb]} J(x - y) Nx_i(x) Ny_j(y)`` for each pair.

    ``nx``/``ny`` select the local shape set: 1 for the element indicator,
    2 for the two P1 hats.  Returns an array of shape ``(npairs, nx, ny)``.
    """
    gx, gw = gauss_legendre01(q)
    args = [np.ascontiguousarray(a, dtype=float) for a in (xa, xb, ya, yb)]
    name = which or backend()
    if name == "numba":
        mod = _numba_module()
        if mod is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return mod.cross_pair_integrals(
            *args, int(nx), int(ny), kernel.knots, kernel.seg_start, kernel.seg_end, gx, gw
        )
    return _pairs_numpy.cross_pair_integrals(
        *args, nx, ny, kernel.knots, kernel.seg_start, kernel.seg_end, gx, gw
    )


def pair_points(xa, xb, ya, yb, kernel, q=4):
    """Kink-split quadrature points for one or more element pairs."""
    gx, gw = gauss_legendre01(q)
    return _pairs_numpy.pair_points(xa, xb, ya, yb, kernel.kinks, gx, gw)
