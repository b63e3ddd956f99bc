"""Finite element spaces and assembly of the coupled local/nonlocal system.

Conventions
-----------
With ``m_S(x) = int_S J(x - y) dy`` and ``h = m_{R minus Omega_nl}`` the
quadratic part of the energy is ``1/2 [u; v]^T A [u; v]`` with::

    A = [[ K_l + M_l[m_nl],   -C             ],
         [ -C^T,              K_nn + M_n[h]  ]]

where ``K_nn = 2 (M_n[m_nl] - B)`` is the double-integral form, ``B`` the
kernel cross matrix of the nonlocal space with itself, and
``C_ij = int_nl int_l J(x - y) phi_i(y) psi_j(x)``.  The monolithic problem
is ``A [u; v] = [b_l; b_n]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import accel
from .errors import AssemblyError, ConfigurationError
from .geometry import LOCAL, NONLOCAL, Mesh1D, Partition1D, build_uniform_mesh
from .kernel import KernelSpec, complement_moment, kernel_mass, moment_breakpoints, region_moment

__all__ = [
    "FeSpace",
    "AssembledSystem",
    "assemble_local_stiffness",
    "assemble_weighted_mass",
    "assemble_load",
    "assemble_pair_integral",
    "assemble_cross",
    "assemble_nonlocal_form",
    "assemble_coupling",
    "assemble_system",
    "export_coo",
    "lump",
]

DEFAULT_Q = 4


@dataclass(frozen=True, eq=False)
class FeSpace:
    """P1-continuous or P0 space on some intervals of one kind.

    Each partition interval carries its own dofs, so two touching intervals
    (or the two sides of the interface) never share a degree of freedom.
    Dofs are numbered left to right; constrained P1 nodes get index ``-1``
    in ``element_dofs``.
    """

    mesh: Mesh1D
    kind: int
    regions: tuple[int, ...]
    degree: str
    elements: np.ndarray
    element_dofs: np.ndarray
    dof_coords: np.ndarray
    dof_region: np.ndarray
    essential_bc: tuple[float, ...] = field(default=())

    @classmethod
    def build(cls, mesh: Mesh1D, kind: int, degree: str = "P1", regions: Sequence[int] | None = None):
        part = mesh.partition
        ivs = part.local_intervals if kind == LOCAL else part.nonlocal_intervals
        if regions is None:
            regions = range(len(ivs))
        regions = tuple(sorted(int(r) for r in regions))
        if degree not in ("P1", "P0"):
            raise ConfigurationError(f"unknown degree {degree!r}")
        elements, edofs, coords, dreg, bcs = [], [], [], [], []
        ndof = 0
        for r in regions:
            els = mesh.select(kind, [r])
            els = els[np.argsort(mesh.nodes[mesh.elements[els, 0]], kind="stable")]
            if degree == "P0":
                mids = mesh.nodes[mesh.elements[els]].mean(axis=1)
                elements.append(els)
                edofs.append((ndof + np.arange(len(els)))[:, None])
                coords.append(mids)
                dreg.append(np.full(len(els), r))
                ndof += len(els)
                continue
            node_ids = np.unique(mesh.elements[els].ravel())
            local_index = -np.ones(len(mesh.nodes), dtype=np.int64)
            free = []
            for nid in node_ids:
                x = float(mesh.nodes[nid])
                if kind == LOCAL and part.is_boundary_point(x):
                    bcs.append(x)
                    continue
                local_index[nid] = ndof + len(free)
                free.append(x)
            elements.append(els)
            edofs.append(local_index[mesh.elements[els]])
            coords.append(np.array(free))
            dreg.append(np.full(len(free), r))
            ndof += len(free)
        nloc = 1 if degree == "P0" else 2
        return cls(
            mesh,
            kind,
            regions,
            degree,
            np.concatenate(elements).astype(np.int64) if elements else np.zeros(0, np.int64),
            np.concatenate(edofs).astype(np.int64) if edofs else np.zeros((0, nloc), np.int64),
            np.concatenate(coords) if coords else np.zeros(0),
            np.concatenate(dreg).astype(np.int64) if dreg else np.zeros(0, np.int64),
            tuple(bcs),
        )

    @property
    def ndof(self) -> int:
        return len(self.dof_coords)

    @property
    def nloc(self) -> int:
        return self.element_dofs.shape[1]

    @property
    def bounds(self) -> np.ndarray:
        return self.mesh.element_bounds(self.elements)

    @property
    def intervals(self) -> list[tuple[float, float]]:
        part = self.mesh.partition
        ivs = part.local_intervals if self.kind == LOCAL else part.nonlocal_intervals
        return [ivs[r].as_tuple() for r in self.regions]

    def shape_values(self, t: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        if self.nloc == 1:
            return np.ones(t.shape + (1,))
        lam = (t - lo) / (hi - lo)
        return np.stack([1.0 - lam, lam], axis=-1)

    def evaluate(self, coeffs, x, region: int | None = None) -> np.ndarray:
        """Point values of the field; ``nan`` outside the space's intervals."""
        coeffs = np.asarray(coeffs, dtype=float)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.full(x.shape, np.nan)
        b = self.bounds
        regs = self.mesh.element_region[self.elements]
        for e in range(len(self.elements)):
            if region is not None and regs[e] != region:
                continue
            lo, hi = b[e]
            mask = np.isnan(out) & (x >= lo) & (x <= hi)
            if not mask.any():
                continue
            dofs = self.element_dofs[e]
            vals = np.where(dofs >= 0, coeffs[np.maximum(dofs, 0)], 0.0)
            if self.nloc == 1:
                out[mask] = vals[0]
            else:
                lam = (x[mask] - lo) / (hi - lo)
                out[mask] = vals[0] * (1.0 - lam) + vals[1] * lam
        return out

    def interpolate(self, func: Callable) -> np.ndarray:
        """Nodal (P1) or midpoint (P0) interpolant of ``func``."""
        return np.asarray(func(self.dof_coords), dtype=float).copy()

    def transfer(self, other: "FeSpace", coeffs) -> np.ndarray:
        """Re-express a field of ``other`` in this space by nodal evaluation.

        Exact for nested meshes of the same intervals.
        """
        out = np.empty(self.ndof)
        for r in self.regions:
            sel = self.dof_region == r
            out[sel] = other.evaluate(coeffs, self.dof_coords[sel], region=r)
        return out

    def basis(self, i: int) -> Callable:
        """Global basis function ``i`` as a vectorized callable."""
        e = np.array([0.0] * self.ndof)
        e[i] = 1.0
        return lambda x: np.nan_to_num(self.evaluate(e, x), nan=0.0)


def lump(matrix) -> sp.csr_matrix:
    """Row-sum lumping to a diagonal matrix."""
    return sp.diags(np.asarray(matrix.sum(axis=1)).ravel()).tocsr()


def _symmetric(matrix) -> sp.csr_matrix:
    m = matrix.tocsr()
    out = ((m + m.T) * 0.5).tocsr()
    out.sort_indices()
    return out


def _coo(rows, cols, vals, shape) -> sp.csr_matrix:
    rows, cols, vals = (np.asarray(a).ravel() for a in (rows, cols, vals))
    keep = (rows >= 0) & (cols >= 0)
    m = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def assemble_local_stiffness(space: FeSpace) -> sp.csr_matrix:
    """``int u' w'`` on a P1 space; constrained rows/cols eliminated."""
    if space.degree != "P1":
        raise ConfigurationError("local stiffness requires a P1-continuous space")
    h = space.bounds[:, 1] - space.bounds[:, 0]
    local = np.array([[1.0, -1.0], [-1.0, 1.0]])
    vals = local[None] / h[:, None, None]
    d = space.element_dofs
    rows = np.repeat(d[:, :, None], 2, axis=2)
    cols = np.repeat(d[:, None, :], 2, axis=1)
    return _symmetric(_coo(rows, cols, vals, (space.ndof, space.ndof)))


def _split_points(space: FeSpace, breakpoints, q: int):
    """Gauss points on every element, cutting elements at ``breakpoints``."""
    gx, gw = accel.gauss_legendre01(q)
    b = space.bounds
    bp = np.unique(np.asarray(breakpoints if breakpoints is not None else [], dtype=float))
    pts, wts, owner = [], [], []
    for e, (lo, hi) in enumerate(b):
        inner = bp[(bp > lo) & (bp < hi)]
        cuts = np.concatenate([[lo], inner, [hi]])
        lens = np.diff(cuts)
        pts.append((cuts[:-1, None] + lens[:, None] * gx).ravel())
        wts.append((lens[:, None] * gw).ravel())
        owner.append(np.full(lens.size * len(gx), e))
    if not pts:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(owner)


def assemble_weighted_mass(space: FeSpace, weight, lumped: bool = False, breakpoints=None, q: int = DEFAULT_Q):
    """``int weight phi_i phi_j`` by element Gauss quadrature.

    ``weight`` is a vectorized callable or a scalar.  Elements are cut at
    ``breakpoints`` (kinks of the weight) so piecewise polynomial weights
    are integrated exactly.
    """
    x, w, owner = _split_points(space, breakpoints, q)
    wt = np.broadcast_to(np.asarray(weight(x) if callable(weight) else weight, dtype=float), x.shape)
    if np.any(wt < 0):
        raise AssemblyError(f"negative weight sample {float(wt.min())!r} in weighted mass")
    b = space.bounds
    N = space.shape_values(x, b[owner, 0], b[owner, 1])
    nl = space.nloc
    elem = np.zeros((len(b), nl, nl))
    contrib = (w * wt)[:, None, None] * N[:, :, None] * N[:, None, :]
    np.add.at(elem, owner, contrib)
    d = space.element_dofs
    rows = np.repeat(d[:, :, None], nl, axis=2)
    cols = np.repeat(d[:, None, :], nl, axis=1)
    m = _symmetric(_coo(rows, cols, elem, (space.ndof, space.ndof)))
    return lump(m) if lumped else m


def assemble_load(space: FeSpace, source, q: int = DEFAULT_Q, breakpoints=None) -> np.ndarray:
    """``int f phi_i``; ``source`` is a vectorized callable or scalar."""
    x, w, owner = _split_points(space, breakpoints, q)
    fx = np.broadcast_to(np.asarray(source(x) if callable(source) else source, dtype=float), x.shape)
    b = space.bounds
    N = space.shape_values(x, b[owner, 0], b[owner, 1])
    out = np.zeros(space.ndof)
    d = space.element_dofs[owner]
    vals = (w * fx)[:, None] * N
    keep = d >= 0
    np.add.at(out, d[keep], vals[keep])
    return out


def assemble_pair_integral(kernel: KernelSpec, T_m, T_n, phi_i: Callable, phi_j: Callable, q: int = DEFAULT_Q) -> float:
    """``int_{T_m} int_{T_n} J(x-y) (phi_i(x)-phi_i(y)) (phi_j(x)-phi_j(y)) dy dx``.

    ``phi_i``/``phi_j`` must be polynomial of degree <= 1 on each element.
    Returns 0 when the elements are farther apart than the kernel support.
    """
    (xa, xb), (ya, yb) = T_m, T_n
    gap = max(0.0, ya - xb, xa - yb)
    if gap > kernel.support_radius:
        return 0.0
    X, Y, W = accel.pair_points([xa], [xb], [ya], [yb], kernel, q)

    def restricted(phi, t, lo, hi):
        # linear restriction from two interior samples; sidesteps the
        # ambiguity of nodal values shared by neighbouring elements
        t1, t2 = lo + (hi - lo) / 3.0, lo + 2.0 * (hi - lo) / 3.0
        v1, v2 = (float(np.asarray(phi(np.array([t])))[0]) for t in (t1, t2))
        return v1 + (v2 - v1) * (t - t1) / (t2 - t1)

    di = restricted(phi_i, X, xa, xb) - restricted(phi_i, Y, ya, yb)
    dj = restricted(phi_j, X, xa, xb) - restricted(phi_j, Y, ya, yb)
    return float(np.sum(W * kernel(X - Y) * di * dj))


def _element_pairs(bx: np.ndarray, by: np.ndarray, radius: float):
    """All ``(p, r)`` with ``dist(bx[p], by[r]) <= radius`` by sorted sweep."""
    if len(bx) == 0 or len(by) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    order = np.argsort(by[:, 0], kind="stable")
    ya, yb = by[order, 0], by[order, 1]
    first = np.searchsorted(yb, bx[:, 0] - radius, side="left")
    last = np.searchsorted(ya, bx[:, 1] + radius, side="right")
    counts = np.maximum(last - first, 0)
    px = np.repeat(np.arange(len(bx)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    py = order[np.repeat(first, counts) + offs]
    return px, py


def assemble_cross(space_x: FeSpace, space_y: FeSpace, kernel: KernelSpec, q: int = DEFAULT_Q) -> sp.csr_matrix:
    """``B_ij = int_{Omega_x} int_{Omega_y} J(x - y) psi_i(x) phi_j(y)``."""
    bx, by = space_x.bounds, space_y.bounds
    px, py = _element_pairs(bx, by, kernel.support_radius)
    vals = accel.cross_pair_integrals(
        bx[px, 0], bx[px, 1], by[py, 0], by[py, 1], space_x.nloc, space_y.nloc, kernel, q
    )
    dx = space_x.element_dofs[px]
    dy = space_y.element_dofs[py]
    rows = np.repeat(dx[:, :, None], space_y.nloc, axis=2)
    cols = np.repeat(dy[:, None, :], space_x.nloc, axis=1)
    return _coo(rows, cols, vals, (space_x.ndof, space_y.ndof))


def assemble_nonlocal_form(space_n: FeSpace, kernel: KernelSpec, lumped: bool = False, q: int = DEFAULT_Q):
    """Matrix of ``int int_{nl x nl} J (v(y)-v(x)) (w(y)-w(x))``.

    Assembled as ``2 (M[m_nl] - B)``.  With ``lumped`` the moment mass is
    row-sum lumped, which keeps constants in the kernel and makes the
    off-diagonal part nonpositive.
    """
    region = space_n.intervals
    mass = assemble_weighted_mass(
        space_n,
        lambda x: region_moment(kernel, x, region),
        lumped=lumped,
        breakpoints=moment_breakpoints(kernel, region),
        q=q,
    )
    cross = _symmetric(assemble_cross(space_n, space_n, kernel, q))
    return _symmetric(2.0 * (mass - cross))


def assemble_coupling(space_l: FeSpace, space_n: FeSpace, kernel: KernelSpec, q: int = DEFAULT_Q) -> sp.csr_matrix:
    """``C_ij = int_nl int_l J(x - y) phi_i(y) psi_j(x)`` (local x nonlocal)."""
    return assemble_cross(space_l, space_n, kernel, q)


@dataclass(eq=False)
class AssembledSystem:
    """All matrices and loads of one discretized coupled problem.

    ``A_ll``/``A_nn`` are the step matrices (lumped when ``lumped``); the
    ``stiffness``, ``K_nn_sym``, ``M_l_w``, ``M_n_w`` and ``C_ln`` blocks are
    always consistent and define the energy norm.
    """

    partition: Partition1D
    kernel: KernelSpec
    mesh: Mesh1D
    space_l: FeSpace
    space_n: FeSpace
    stiffness: sp.csr_matrix
    M_l_w: sp.csr_matrix
    K_nn_sym: sp.csr_matrix
    M_n_w: sp.csr_matrix
    C_ln: sp.csr_matrix
    b_l: np.ndarray
    b_n: np.ndarray
    A_ll: sp.csr_matrix
    A_nn: sp.csr_matrix
    mass_l: sp.csr_matrix
    mass_n: sp.csr_matrix
    lumped: bool = False
    source: Callable | None = field(default=None, repr=False)

    @property
    def n_local(self) -> int:
        return self.space_l.ndof

    @property
    def n_nonlocal(self) -> int:
        return self.space_n.ndof

    @cached_property
    def C_nl(self) -> sp.csr_matrix:
        out = self.C_ln.T.tocsr()
        out.sort_indices()
        return out

    @cached_property
    def norm_matrix(self) -> sp.csr_matrix:
        """Consistent block matrix ``A`` with ``||(u,v)||_H^2 = x^T A x / 2``."""
        return sp.bmat(
            [[self.stiffness + self.M_l_w, -self.C_ln], [-self.C_nl, self.K_nn_sym + self.M_n_w]],
            format="csr",
        )

    @cached_property
    def monolithic_matrix(self) -> sp.csr_matrix:
        """Block matrix of the step operators (lumped when ``lumped``)."""
        return sp.bmat([[self.A_ll, -self.C_ln], [-self.C_nl, self.A_nn]], format="csr")

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.b_l, self.b_n])

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x)
        return x[: self.n_local], x[self.n_local:]

    def join(self, u, v) -> np.ndarray:
        return np.concatenate([np.asarray(u, dtype=float), np.asarray(v, dtype=float)])

    @cached_property
    def local_solver(self):
        from .linsolve import factorize

        return factorize(self.A_ll)

    @cached_property
    def nonlocal_solver(self):
        from .linsolve import factorize

        return factorize(self.A_nn)


def assemble_system(
    partition: Partition1D,
    kernel: KernelSpec,
    source,
    target_h: float | None = None,
    mesh: Mesh1D | None = None,
    lumped: bool = False,
    nonlocal_degree: str = "P1",
    q: int = DEFAULT_Q,
) -> AssembledSystem:
    """Mesh (unless ``mesh`` is given) and assemble every block."""
    if mesh is None:
        if target_h is None:
            raise ConfigurationError("assemble_system needs target_h or mesh")
        mesh = build_uniform_mesh(partition, target_h)
    space_l = FeSpace.build(mesh, LOCAL, "P1")
    space_n = FeSpace.build(mesh, NONLOCAL, nonlocal_degree)
    nl_region = space_n.intervals
    bps = moment_breakpoints(kernel, nl_region) if nl_region else None

    def m_nl(x):
        return region_moment(kernel, x, nl_region) if nl_region else np.zeros_like(x)

    def absorption(x):
        return complement_moment(kernel, x, nl_region) if nl_region else np.full_like(x, kernel_mass(kernel))

    stiffness = assemble_local_stiffness(space_l)
    M_l_w = assemble_weighted_mass(space_l, m_nl, breakpoints=bps, q=q)
    M_n_w = assemble_weighted_mass(space_n, absorption, breakpoints=bps, q=q)
    K_nn = assemble_nonlocal_form(space_n, kernel, q=q)
    C_ln = assemble_coupling(space_l, space_n, kernel, q=q)
    if lumped:
        A_ll = _symmetric(stiffness + lump(M_l_w))
        K_lumped = assemble_nonlocal_form(space_n, kernel, lumped=True, q=q)
        A_nn = _symmetric(K_lumped + lump(M_n_w))
    else:
        A_ll = _symmetric(stiffness + M_l_w)
        A_nn = _symmetric(K_nn + M_n_w)
    return AssembledSystem(
        partition=partition,
        kernel=kernel,
        mesh=mesh,
        space_l=space_l,
        space_n=space_n,
        stiffness=stiffness,
        M_l_w=M_l_w,
        K_nn_sym=K_nn,
        M_n_w=M_n_w,
        C_ln=C_ln,
        b_l=assemble_load(space_l, source, q=q),
        b_n=assemble_load(space_n, source, q=q),
        A_ll=A_ll,
        A_nn=A_nn,
        mass_l=assemble_weighted_mass(space_l, 1.0, q=q),
        mass_n=assemble_weighted_mass(space_n, 1.0, q=q),
        lumped=lumped,
        source=source,
    )


def export_coo(matrix, path: str | Path) -> None:
    """Write ``row col value`` lines (0-based, 17 significant digits)."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"% {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
