"""Partitioned 1D domains and admissible meshes of the enlarged domain."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "Interval",
    "Partition1D",
    "Mesh1D",
    "PartitionReport",
    "EXTERIOR",
    "LOCAL",
    "NONLOCAL",
    "build_uniform_mesh",
    "validate_partition",
]

EXTERIOR, LOCAL, NONLOCAL = 0, 1, 2
_KIND_NAMES = {EXTERIOR: "exterior", LOCAL: "local", NONLOCAL: "nonlocal"}


@dataclass(frozen=True, order=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ConfigurationError(f"empty or invalid interval ({self.lo!r}, {self.hi!r})")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def as_tuple(self) -> tuple[float, float]:
        return (self.lo, self.hi)


def _intervals(items: Iterable) -> tuple[Interval, ...]:
    out = []
    for it in items:
        out.append(it if isinstance(it, Interval) else Interval(float(it[0]), float(it[1])))
    return tuple(sorted(out))


@dataclass(frozen=True)
class Partition1D:
    """Local and nonlocal open intervals plus the exterior pad width ``R``.

    Intervals are kept sorted left to right; nonlocal subdomain ``k`` is the
    ``k``-th nonlocal interval in that order.
    """

    local_intervals: tuple[Interval, ...] = ()
    nonlocal_intervals: tuple[Interval, ...] = ()
    horizon_pad: float = 0.0

    def __init__(self, local_intervals: Sequence = (), nonlocal_intervals: Sequence = (), horizon_pad: float = 0.0):
        object.__setattr__(self, "local_intervals", _intervals(local_intervals))
        object.__setattr__(self, "nonlocal_intervals", _intervals(nonlocal_intervals))
        pad = float(horizon_pad)
        if not math.isfinite(pad) or pad < 0:
            raise ConfigurationError(f"horizon_pad must be >= 0, got {horizon_pad!r}")
        object.__setattr__(self, "horizon_pad", pad)
        allv = sorted(self.local_intervals + self.nonlocal_intervals)
        for a, b in zip(allv, allv[1:]):
            if b.lo < a.hi:
                raise ConfigurationError(f"intervals {a.as_tuple()} and {b.as_tuple()} overlap")

    @property
    def intervals(self) -> list[tuple[Interval, int, int]]:
        """All intervals as ``(interval, kind, index)`` sorted by position."""
        items = [(iv, LOCAL, k) for k, iv in enumerate(self.local_intervals)]
        items += [(iv, NONLOCAL, k) for k, iv in enumerate(self.nonlocal_intervals)]
        return sorted(items, key=lambda t: t[0].lo)

    @property
    def is_empty(self) -> bool:
        return not self.local_intervals and not self.nonlocal_intervals

    def omega(self) -> list[Interval]:
        """Components of ``Omega``: interior of the closure of the union."""
        merged: list[list[float]] = []
        for iv, _, _ in self.intervals:
            if merged and iv.lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], iv.hi)
            else:
                merged.append([iv.lo, iv.hi])
        return [Interval(a, b) for a, b in merged]

    def enlarged(self, pad: float | None = None) -> list[Interval]:
        """Components of ``Omega_R = {x : dist(x, Omega) < R}``."""
        pad = self.horizon_pad if pad is None else pad
        merged: list[list[float]] = []
        for iv in self.omega():
            lo, hi = iv.lo - pad, iv.hi + pad
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return [Interval(a, b) for a, b in merged]

    def interface_points(self) -> list[float]:
        """Points shared by the closures of a local and a nonlocal interval."""
        pts = set()
        for a in self.local_intervals:
            for b in self.nonlocal_intervals:
                if a.hi == b.lo:
                    pts.add(a.hi)
                if b.hi == a.lo:
                    pts.add(a.lo)
        return sorted(pts)

    def is_boundary_point(self, x: float) -> bool:
        """True when ``x`` lies on ``partial Omega`` (Dirichlet side)."""
        touching = sum(1 for iv, _, _ in self.intervals if x in (iv.lo, iv.hi))
        return touching == 1

    def split_nonlocal(self, parts: int) -> "Partition1D":
        """Split every nonlocal interval into ``parts`` equal, touching pieces."""
        if parts < 1:
            raise ConfigurationError("split count must be >= 1")
        pieces = []
        for iv in self.nonlocal_intervals:
            cuts = np.linspace(iv.lo, iv.hi, parts + 1)
            pieces += [(float(a), float(b)) for a, b in zip(cuts[:-1], cuts[1:])]
        return Partition1D(self.local_intervals, pieces, self.horizon_pad)


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Admissible mesh of ``Omega_R``.

    ``element_kind`` holds ``EXTERIOR``, ``LOCAL`` or ``NONLOCAL`` and
    ``element_region`` the index of the partition interval of that kind
    (``-1`` for exterior elements).
    """

    nodes: np.ndarray
    elements: np.ndarray
    element_kind: np.ndarray
    element_region: np.ndarray
    partition: Partition1D = field(repr=False)

    @property
    def h(self) -> float:
        return float(np.max(self.element_lengths))

    @property
    def element_lengths(self) -> np.ndarray:
        return self.nodes[self.elements[:, 1]] - self.nodes[self.elements[:, 0]]

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_bounds(self, which=None) -> np.ndarray:
        idx = slice(None) if which is None else which
        el = self.elements[idx]
        return np.stack([self.nodes[el[:, 0]], self.nodes[el[:, 1]]], axis=1)

    def select(self, kind: int, regions: Sequence[int] | None = None) -> np.ndarray:
        """Indices of elements of ``kind`` (optionally restricted to regions)."""
        mask = self.element_kind == kind
        if regions is not None:
            mask &= np.isin(self.element_region, np.asarray(list(regions), dtype=int))
        return np.nonzero(mask)[0]

    def tag(self, e: int) -> str:
        kind = int(self.element_kind[e])
        if kind == NONLOCAL:
            return f"nonlocal({int(self.element_region[e])})"
        return _KIND_NAMES[kind]


def _n_cells(length: float, target_h: float) -> int:
    # guard against ratios such as 1/0.02 landing just above an integer
    return max(1, math.ceil(length / target_h * (1.0 - 1e-12)))


def build_uniform_mesh(partition: Partition1D, target_h: float) -> Mesh1D:
    """Mesh every interval and exterior piece of ``Omega_R`` uniformly.

    Interval endpoints are inserted verbatim as nodes, so the mesh is
    admissible for the local, nonlocal and exterior regions at once.
    Element lengths do not exceed ``target_h`` (up to a 1e-12 relative slack).
    """
    if not (target_h > 0 and math.isfinite(target_h)):
        raise ConfigurationError(f"target_h must be positive, got {target_h!r}")
    if partition.is_empty:
        raise ConfigurationError("partition has no intervals")

    pieces: list[tuple[float, float, int, int]] = []
    intervals = partition.intervals
    for iv, kind, k in intervals:
        pieces.append((iv.lo, iv.hi, kind, k))
    # exterior = Omega_R minus the partition intervals (includes inner gaps)
    for comp in partition.enlarged():
        cursor = comp.lo
        for iv, _, _ in intervals:
            if iv.hi <= comp.lo or iv.lo >= comp.hi:
                continue
            if iv.lo > cursor:
                pieces.append((cursor, iv.lo, EXTERIOR, -1))
            cursor = iv.hi
        if cursor < comp.hi:
            pieces.append((cursor, comp.hi, EXTERIOR, -1))
    pieces.sort(key=lambda p: p[0])

    nodes: list[float] = []
    elements: list[tuple[int, int]] = []
    kinds: list[int] = []
    regions: list[int] = []
    for lo, hi, kind, k in pieces:
        pts = np.linspace(lo, hi, _n_cells(hi - lo, target_h) + 1)
        if nodes and nodes[-1] == lo:
            start = len(nodes) - 1
            nodes.extend(pts[1:].tolist())
        else:
            start = len(nodes)
            nodes.extend(pts.tolist())
        n = len(pts) - 1
        elements.extend((start + i, start + i + 1) for i in range(n))
        kinds.extend([kind] * n)
        regions.extend([k] * n)

    node_arr = np.array(nodes)
    if np.any(np.diff(node_arr) <= 0):
        raise ConfigurationError("mesh construction produced non-increasing nodes")
    return Mesh1D(
        node_arr,
        np.array(elements, dtype=np.int64).reshape(-1, 2),
        np.array(kinds, dtype=np.int8),
        np.array(regions, dtype=np.int64),
        partition,
    )


@dataclass
class PartitionReport:
    ok: bool
    delta: float
    nonlocal_delta_connected: bool
    max_nonlocal_gap: float
    proximity_ok: bool
    distance: float
    local_connected: bool
    pad_covers_support: bool
    messages: list[str]


def _set_distance(a: Sequence[Interval], b: Sequence[Interval]) -> float:
    best = math.inf
    for p in a:
        for q in b:
            best = min(best, max(0.0, q.lo - p.hi, p.lo - q.hi))
    return best


def validate_partition(partition: Partition1D, kernel, strict: bool = False) -> PartitionReport:
    """Check delta-connectedness, proximity and local connectedness.

    ``delta`` is the kernel's visibility parameter (half its visibility
    radius).  Failures are reported as warnings unless ``strict`` is set, in
    which case a :class:`ConfigurationError` is raised.
    """
    from .kernel import validate_kernel

    delta = validate_kernel(kernel, strict=False).delta
    if not delta > 0:
        raise ConfigurationError("kernel visibility radius must be positive")
    msgs: list[str] = []

    nl = sorted(partition.nonlocal_intervals)
    gaps = [b.lo - a.hi for a, b in zip(nl, nl[1:])]
    max_gap = max(gaps, default=0.0)
    connected = all(g < delta for g in gaps)
    if not connected:
        msgs.append(f"nonlocal region is not delta-connected: gap {max_gap:g} >= delta {delta:g}")

    if partition.local_intervals and partition.nonlocal_intervals:
        dist = _set_distance(partition.local_intervals, partition.nonlocal_intervals)
    else:
        dist = math.inf
    proximity = dist < delta or not (partition.local_intervals and partition.nonlocal_intervals)
    if not proximity:
        msgs.append(f"local/nonlocal distance {dist:g} >= delta {delta:g}")

    local_connected = len(partition.local_intervals) <= 1
    if not local_connected:
        msgs.append("local region is not connected")

    pad_ok = partition.horizon_pad >= kernel.support_radius
    if not pad_ok:
        msgs.append(
            f"horizon_pad {partition.horizon_pad:g} < kernel support radius {kernel.support_radius:g}"
        )

    ok = connected and proximity and local_connected and pad_ok
    if not ok:
        if strict:
            raise ConfigurationError("; ".join(msgs))
        for m in msgs:
            warnings.warn(m, stacklevel=2)
    return PartitionReport(ok, delta, connected, max_gap, proximity, dist, local_connected, pad_ok, msgs)
