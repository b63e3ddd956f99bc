"""Interaction kernels and their region moments.

Every kernel is stored as a radial profile that is linear on each segment
``[r_s, r_{s+1}]`` of a knot sequence ``0 = r_0 < ... < r_K = support``.
Segment end values are kept separately, so jumps at knots (box kernel) are
representable.  With this representation the antiderivative is piecewise
quadratic and all moments are evaluated in closed form.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "KernelSpec",
    "KernelReport",
    "eval_kernel",
    "kernel_mass",
    "region_moment",
    "complement_moment",
    "validate_kernel",
    "load_table_csv",
]


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Radially symmetric, compactly supported, bounded kernel ``J``.

    Use the :meth:`hat`, :meth:`box` and :meth:`table` constructors.

    Attributes
    ----------
    family : str
        ``"hat"``, ``"box"`` or ``"table"``.
    support_radius : float
        ``J(z) = 0`` for ``|z| > support_radius``.
    normalization : float
        Multiplier applied to the unit-mass profile (hat and box).
    knots : ndarray
        Radial knots ``r_0 = 0 < ... < r_K = support_radius``.
    seg_start, seg_end : ndarray
        Profile value at the left and right end of each segment, already
        multiplied by ``normalization``.
    raw_table : tuple or None
        Original ``(z, J)`` samples for table kernels, before symmetrization.
    """

    family: str
    support_radius: float
    normalization: float
    knots: np.ndarray
    seg_start: np.ndarray
    seg_end: np.ndarray
    raw_table: tuple | None = field(default=None, repr=False)

    @classmethod
    def hat(cls, support_radius: float, normalization: float = 1.0) -> "KernelSpec":
        """``J(z) = (1 - |z|/d)/d`` on ``[-d, d]``."""
        d = _positive("support_radius", support_radius)
        c = _positive("normalization", normalization)
        return cls("hat", d, c, np.array([0.0, d]), np.array([c / d]), np.array([0.0]))

    @classmethod
    def box(cls, support_radius: float, normalization: float = 1.0) -> "KernelSpec":
        """``J(z) = 1/(2d)`` on ``[-d, d]``."""
        d = _positive("support_radius", support_radius)
        c = _positive("normalization", normalization)
        val = c / (2.0 * d)
        return cls("box", d, c, np.array([0.0, d]), np.array([val]), np.array([val]))

    @classmethod
    def table(cls, z: Sequence[float], values: Sequence[float]) -> "KernelSpec":
        """Piecewise-linear kernel through the samples ``(z, values)``.

        The interpolant is taken as zero outside ``[min z, max z]`` and is
        symmetrized as ``(J(z) + J(-z)) / 2``.  Negative samples are rejected.
        """
        z = np.asarray(z, dtype=float)
        vals = np.asarray(values, dtype=float)
        if z.ndim != 1 or z.shape != vals.shape or z.size < 2:
            raise ConfigurationError("kernel table needs matching 1D arrays with >= 2 samples")
        order = np.argsort(z, kind="stable")
        z, vals = z[order], vals[order]
        if np.any(np.diff(z) <= 0):
            raise ConfigurationError("kernel table abscissae must be distinct")
        if np.any(vals < 0):
            bad = float(z[np.argmin(vals)])
            raise ConfigurationError(f"kernel table is negative at z={bad!r}")

        def raw(t):
            t = np.asarray(t, dtype=float)
            out = np.interp(t, z, vals)
            return np.where((t < z[0]) | (t > z[-1]), 0.0, out)

        knots = np.unique(np.concatenate([[0.0], np.abs(z)]))
        # on each open segment the symmetrized interpolant is linear; recover
        # its one-sided end values from two interior samples
        lo, hi = knots[:-1], knots[1:]
        t1 = lo + (hi - lo) / 3.0
        t2 = lo + 2.0 * (hi - lo) / 3.0
        g1 = 0.5 * (raw(t1) + raw(-t1))
        g2 = 0.5 * (raw(t2) + raw(-t2))
        slope = (g2 - g1) / (t2 - t1)
        start = g1 - slope * (t1 - lo)
        end = g1 + slope * (hi - t1)
        start = np.where(np.abs(start) < 1e-15 * max(vals.max(), 1.0), 0.0, start)
        end = np.where(np.abs(end) < 1e-15 * max(vals.max(), 1.0), 0.0, end)
        # drop trailing all-zero segments so support_radius is tight
        nz = np.nonzero((start > 0) | (end > 0))[0]
        if nz.size == 0:
            raise ConfigurationError("kernel table is identically zero")
        last = nz[-1]
        knots = knots[: last + 2]
        start, end = start[: last + 1], end[: last + 1]
        return cls(
            "table",
            float(knots[-1]),
            1.0,
            knots,
            np.maximum(start, 0.0),
            np.maximum(end, 0.0),
            raw_table=(z, vals),
        )

    @property
    def kinks(self) -> np.ndarray:
        """Sorted offsets ``z`` where ``J`` may fail to be smooth."""
        r = self.knots[1:]
        return np.concatenate([-r[::-1], [0.0], r])

    def antiderivative(self, t) -> np.ndarray:
        """Odd antiderivative ``G(t) = int_0^t J(z) dz``."""
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        r = self.knots
        lengths = np.diff(r)
        seg_int = 0.5 * (self.seg_start + self.seg_end) * lengths
        cum = np.concatenate([[0.0], np.cumsum(seg_int)])
        s = np.clip(np.searchsorted(r, a, side="right") - 1, 0, len(lengths) - 1)
        tau = np.minimum(a, r[-1]) - r[s]
        slope = (self.seg_end[s] - self.seg_start[s]) / lengths[s]
        part = cum[s] + self.seg_start[s] * tau + 0.5 * slope * tau * tau
        return np.sign(t) * part

    def __call__(self, z):
        return eval_kernel(self, z)


@dataclass
class KernelReport:
    ok: bool
    nonnegative: bool
    symmetric: bool
    visibility_radius: float
    delta: float
    lower_bound: float
    hilbert_schmidt: bool
    messages: list[str]


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ConfigurationError(f"kernel {name} must be positive, got {value!r}")
    return value


def eval_kernel(kernel: KernelSpec, z):
    """Evaluate ``J(z)``; symmetric by construction (only ``|z|`` is used)."""
    a = np.abs(np.asarray(z, dtype=float))
    r = kernel.knots
    s = np.clip(np.searchsorted(r, a, side="right") - 1, 0, len(r) - 2)
    frac = (a - r[s]) / (r[s + 1] - r[s])
    val = kernel.seg_start[s] + (kernel.seg_end[s] - kernel.seg_start[s]) * frac
    out = np.where(a > r[-1], 0.0, val)
    return float(out) if out.ndim == 0 else out


def kernel_mass(kernel: KernelSpec) -> float:
    """Total integral of ``J`` over the real line."""
    return float(2.0 * kernel.antiderivative(kernel.support_radius))


def _as_bounds(region) -> np.ndarray:
    arr = np.array([(iv.lo, iv.hi) if hasattr(iv, "lo") else tuple(iv) for iv in region], dtype=float)
    return arr.reshape(-1, 2)


def region_moment(kernel: KernelSpec, x, region) -> np.ndarray:
    """``m_S(x) = int_S J(x - y) dy`` for a union ``S`` of disjoint intervals.

    Interval endpoints may be infinite.  Vectorized over ``x``.
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for lo, hi in _as_bounds(region):
        # int_lo^hi J(x - y) dy = G(x - lo) - G(x - hi)
        total = total + (kernel.antiderivative(x - lo) - kernel.antiderivative(x - hi))
    total = np.maximum(total, 0.0)
    return float(total) if total.ndim == 0 else total


def complement_moment(kernel: KernelSpec, x, nonlocal_region) -> np.ndarray:
    """Absorption weight ``h(x) = int_{R minus S} J(x - y) dy``."""
    out = np.maximum(kernel_mass(kernel) - region_moment(kernel, x, nonlocal_region), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def moment_breakpoints(kernel: KernelSpec, region) -> np.ndarray:
    """Points where ``region_moment(kernel, ., region)`` may lose smoothness."""
    ends = _as_bounds(region).ravel()
    ends = ends[np.isfinite(ends)]
    return np.unique((ends[:, None] + kernel.kinks[None, :]).ravel())


def validate_kernel(kernel: KernelSpec, samples: int = 1001, strict: bool = True) -> KernelReport:
    """Check the structural kernel hypotheses on a sample grid.

    Computes the visibility radius ``rho`` (largest radius on which ``J``
    stays positive), ``delta = rho / 2`` and the lower bound
    ``min_{|z| <= 2 delta (1 - 1e-9)} J``.
    """
    if samples < 100:
        raise ValueError("validate_kernel needs at least 100 samples")
    msgs: list[str] = []
    zs = np.linspace(-kernel.support_radius * 1.1, kernel.support_radius * 1.1, samples)
    vals = eval_kernel(kernel, zs)
    nonneg = bool(np.all(vals >= 0))
    symmetric = bool(np.array_equal(vals, eval_kernel(kernel, -zs)))
    if kernel.raw_table is not None:
        tz, tv = kernel.raw_table
        if np.any(tv < 0):
            nonneg = False
        reach = max(abs(tz[0]), abs(tz[-1]))
        grid = np.unique(np.concatenate([np.linspace(-reach, reach, samples), tz, -tz]))

        def raw(t):
            return np.where((t < tz[0]) | (t > tz[-1]), 0.0, np.interp(t, tz, tv))

        scale = max(float(np.max(tv)), 1e-300)
        if np.max(np.abs(raw(grid) - raw(-grid))) > 1e-12 * scale:
            symmetric = False
    if not nonneg:
        msgs.append("kernel takes negative values")
    if not symmetric:
        msgs.append("kernel is not symmetric")

    rho = 0.0
    for s in range(len(kernel.seg_start)):
        if kernel.seg_start[s] <= 0:
            break
        rho = float(kernel.knots[s + 1])
        if kernel.seg_end[s] <= 0:
            break
    delta = rho / 2.0
    if rho > 0:
        probe = rho * (1.0 - 1e-9)
        pts = np.concatenate([kernel.knots[kernel.knots < probe], [probe]])
        lower = float(np.min(eval_kernel(kernel, pts)))
    else:
        lower = 0.0
        msgs.append("kernel has zero visibility radius")
    ok = nonneg and symmetric and rho > 0
    if strict and not ok:
        raise ConfigurationError("; ".join(msgs))
    # bounded and compactly supported => square integrable => Hilbert-Schmidt
    return KernelReport(ok, nonneg, symmetric, rho, delta, lower, True, msgs)


def load_table_csv(path: str | Path) -> KernelSpec:
    """Read a two-column ``z,J`` CSV with a header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ConfigurationError(f"{path}: missing header row")
        rows = [r for r in reader if r and not r[0].lstrip().startswith("#")]
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"{path}: malformed kernel table ({exc})") from None
    if data.size == 0:
        raise ConfigurationError(f"{path}: kernel table has no rows")
    return KernelSpec.table(data[:, 0], data[:, 1])
