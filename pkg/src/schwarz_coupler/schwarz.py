"""Schwarz-type iterations for the coupled local/nonlocal system.

The local step solves ``A_ll u = b_l + C v`` and the nonlocal step
``A_nn v = b_n + C^T u``; both reuse one cached factorization.  The
alternating method feeds the freshest ``v`` into the local step, the
parallel method the previous one.
"""
from __future__ import annotations

import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assembly import AssembledSystem, FeSpace, assemble_system
from .errors import ConfigurationError
from .linsolve import SolveReport, factorize

__all__ = [
    "IterationRecord",
    "IterationHistory",
    "SchwarzConfig",
    "SchwarzResult",
    "MultidomainResult",
    "RateEstimate",
    "MonotoneReport",
    "SubsolutionReport",
    "local_step",
    "nonlocal_step",
    "run_monolithic",
    "run_schwarz",
    "run_multidomain_nonlocal",
    "eval_H_norm",
    "eval_energy",
    "estimate_rate",
    "verify_discrete_subsolution",
    "check_monotone",
    "thread_cap",
]

log = logging.getLogger(__name__)

THREADS_ENV = "SCHWARZ_COUPLER_THREADS"


def thread_cap(jobs: int) -> int:
    """Worker count for ``jobs`` independent solves, capped by the env var."""
    raw = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            warnings.warn(f"ignoring non-integer {THREADS_ENV}={raw!r}")
    return max(1, min(cap, jobs))


@dataclass
class IterationRecord:
    index: int
    step_diff_H: float
    err_vs_monolithic_H: float | None
    energy_Ei: float
    wall_time: float
    err_L2_local: float | None = None
    err_L2_nonlocal: float | None = None


@dataclass
class IterationHistory:
    records: list[IterationRecord] = field(default_factory=list)
    rate_estimate: float | None = None
    converged: bool = False
    variant: str = "alternating"

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records])

    @property
    def errors(self) -> np.ndarray:
        return self.column("err_vs_monolithic_H")

    @property
    def step_diffs(self) -> np.ndarray:
        return self.column("step_diff_H")


@dataclass
class SchwarzConfig:
    """Options of :func:`run_schwarz`.

    ``initial_u`` is ``"zero"``, a float (constant field) or a coefficient
    vector; ``initial_v`` likewise (used by the parallel variant).
    """

    variant: str = "alternating"
    tol: float = 1e-10
    max_iter: int = 500
    initial_u: object = "zero"
    initial_v: object = "zero"
    lumped: bool = False
    reference: str = "none"
    store_iterates: bool = False

    def __post_init__(self):
        if self.variant not in ("alternating", "parallel"):
            raise ConfigurationError(f"variant must be 'alternating' or 'parallel', got {self.variant!r}")
        if not (self.tol > 0):
            raise ConfigurationError(f"tol must be positive, got {self.tol!r}")
        if int(self.max_iter) < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter!r}")
        if self.reference not in ("none", "monolithic"):
            raise ConfigurationError(f"reference must be 'none' or 'monolithic', got {self.reference!r}")


@dataclass
class SchwarzResult:
    u: np.ndarray
    v: np.ndarray
    history: IterationHistory
    converged: bool
    iterates: list[tuple[np.ndarray, np.ndarray]] | None = None
    reference: tuple[np.ndarray, np.ndarray] | None = None
    fixed_point_residual: float = np.nan


def _initial(spec, n: int, name: str) -> np.ndarray:
    if isinstance(spec, str):
        if spec != "zero":
            raise ConfigurationError(f"{name}: unknown initial field {spec!r}")
        return np.zeros(n)
    if np.isscalar(spec):
        return np.full(n, float(spec))
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (n,):
        raise ConfigurationError(f"{name}: expected {n} coefficients, got shape {arr.shape}")
    return arr.copy()


def local_step(system: AssembledSystem, v) -> np.ndarray:
    """Discrete local solution operator: ``u`` with ``A_ll u = b_l + C v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (system.n_nonlocal,):
        raise ValueError(f"nonlocal field has shape {v.shape}, expected ({system.n_nonlocal},)")
    return system.local_solver.solve(system.b_l + system.C_ln @ v)


def nonlocal_step(system: AssembledSystem, u) -> np.ndarray:
    """Discrete nonlocal solution operator: ``v`` with ``A_nn v = b_n + C^T u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (system.n_local,):
        raise ValueError(f"local field has shape {u.shape}, expected ({system.n_local},)")
    return system.nonlocal_solver.solve(system.b_n + system.C_nl @ u)


def _dof_order(system: AssembledSystem) -> np.ndarray:
    coords = np.concatenate([system.space_l.dof_coords, system.space_n.dof_coords])
    return np.argsort(coords, kind="stable")


def run_monolithic(system: AssembledSystem) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    """Solve the full block system in one factorization (the reference).

    Two refinement steps with extended-precision residuals keep the
    reference well below the round-off level of the iterates it judges.
    """
    solver = factorize(system.monolithic_matrix, order=_dof_order(system))
    x, report = solver.solve_refined(system.rhs)
    u, v = system.split(x)
    return u.copy(), v.copy(), report


def eval_H_norm(system: AssembledSystem, u, v) -> float:
    """Energy norm ``sqrt(x^T A x / 2)`` from the consistent blocks."""
    x = system.join(u, v)
    q = 0.5 * float(x @ (system.norm_matrix @ x))
    return float(np.sqrt(max(q, 0.0)))


def eval_energy(system: AssembledSystem, u, v) -> float:
    """``E(u, v) = ||(u,v)||_H^2 - int f u - int f v``."""
    x = system.join(u, v)
    return 0.5 * float(x @ (system.norm_matrix @ x)) - float(system.rhs @ x)


def _l2(mass, e) -> float:
    return float(np.sqrt(max(float(e @ (mass @ e)), 0.0)))


def fixed_point_residual(system: AssembledSystem, u, v) -> float:
    """``||A_ll u - C v - b_l|| + ||A_nn v - C^T u - b_n||`` (Euclidean)."""
    r1 = system.A_ll @ u - system.C_ln @ v - system.b_l
    r2 = system.A_nn @ v - system.C_nl @ u - system.b_n
    return float(np.linalg.norm(r1) + np.linalg.norm(r2))


def run_schwarz(system: AssembledSystem, config: SchwarzConfig | None = None) -> SchwarzResult:
    """Alternating or parallel Schwarz iteration.

    Stops when the H-norm of the step difference is at most
    ``tol * ||(u_n, v_n)||_H`` or after ``max_iter`` iterations.  In the
    latter case a ``RuntimeWarning`` is issued and ``converged`` is False.
    """
    cfg = config or SchwarzConfig()
    if cfg.lumped != system.lumped:
        raise ConfigurationError("config.lumped does not match the assembled system")
    u = _initial(cfg.initial_u, system.n_local, "initial_u")
    v = _initial(cfg.initial_v, system.n_nonlocal, "initial_v")

    ref = None
    if cfg.reference == "monolithic":
        ru, rv, _ = run_monolithic(system)
        ref = (ru, rv)

    hist = IterationHistory(variant=cfg.variant)
    iterates = [(u.copy(), v.copy())] if cfg.store_iterates else None
    pool = ThreadPoolExecutor(thread_cap(2)) if cfg.variant == "parallel" and thread_cap(2) > 1 else None
    converged = False
    t0 = time.perf_counter()
    prev_energy = None
    try:
        for n in range(1, int(cfg.max_iter) + 1):
            if cfg.variant == "alternating":
                v_new = nonlocal_step(system, u)
                u_new = local_step(system, v_new)
            elif pool is not None:
                fv = pool.submit(nonlocal_step, system, u)
                fu = pool.submit(local_step, system, v)
                v_new, u_new = fv.result(), fu.result()
            else:
                v_new = nonlocal_step(system, u)
                u_new = local_step(system, v)
            diff = eval_H_norm(system, u_new - u, v_new - v)
            size = eval_H_norm(system, u_new, v_new)
            u, v = u_new, v_new
            energy = eval_energy(system, u, v)
            if prev_energy is not None and energy > prev_energy + 1e-14 * max(1.0, abs(prev_energy)):
                log.debug("energy increased at iteration %d: %.17g -> %.17g", n, prev_energy, energy)
            prev_energy = energy
            err = el = en = None
            if ref is not None:
                du, dv = u - ref[0], v - ref[1]
                err = eval_H_norm(system, du, dv)
                el, en = _l2(system.mass_l, du), _l2(system.mass_n, dv)
            hist.records.append(IterationRecord(n, diff, err, energy, time.perf_counter() - t0, el, en))
            if iterates is not None:
                iterates.append((u.copy(), v.copy()))
            if diff <= cfg.tol * size:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    hist.converged = converged
    if not converged:
        warnings.warn(f"Schwarz iteration did not converge in {cfg.max_iter} iterations", RuntimeWarning)
    est = estimate_rate(hist, quiet=True)
    hist.rate_estimate = None if est is None else est.rate
    return SchwarzResult(u, v, hist, converged, iterates, ref, fixed_point_residual(system, u, v))


@dataclass
class RateEstimate:
    rate: float
    ratios: np.ndarray
    spread: float
    source: str
    warning: str | None = None


def estimate_rate(history, quiet: bool = False, skip: int = 0) -> RateEstimate | None:
    """Geometric rate from a least-squares fit of ``log(err)`` against ``n``.

    Uses the reference errors when present, else the step differences.
    ``history`` may also be a plain sequence of errors.  Returns ``None``
    with fewer than four usable points.  ``spread`` is the largest relative
    deviation of a per-step ratio from the fitted rate.
    """
    if isinstance(history, IterationHistory):
        errs = history.errors
        source = "err_vs_monolithic_H"
        if not np.any(np.isfinite(errs) & (errs > 0)):
            errs, source = history.step_diffs, "step_diff_H"
    else:
        errs, source = np.asarray(history, dtype=float), "sequence"
    n = np.arange(1, len(errs) + 1)
    ok = np.isfinite(errs) & (errs > 0) & (n > skip)
    if ok.sum() < 4:
        return None
    e, idx = errs[ok], n[ok]
    slope = np.polyfit(idx, np.log(e), 1)[0]
    rate = float(np.exp(slope))
    ratios = e[1:] / e[:-1]
    spread = float(np.max(np.abs(ratios - rate)) / rate)
    warn = None
    if rate >= 1.0 - 1e-12:
        warn = "errors are not decreasing; rate >= 1"
        rate = max(rate, 1.0) if np.allclose(e, e[0]) else rate
        if not quiet:
            warnings.warn(warn, RuntimeWarning)
    return RateEstimate(rate, ratios, spread, source, warn)


@dataclass
class SubsolutionReport:
    is_subsolution: bool
    is_supersolution: bool
    min_local_residual: float
    min_nonlocal_residual: float
    max_local_residual: float
    max_nonlocal_residual: float


def verify_discrete_subsolution(system: AssembledSystem, u0, v0, slack: float = 1e-12) -> SubsolutionReport:
    """Sign of ``b - A x`` for the pair ``(u0, v0)``.

    Subsolution: both residuals ``>= -slack``; supersolution: ``<= slack``.
    The residuals are taken against the step matrices (lumped when the
    system was assembled with lumping).
    """
    u0 = _initial(u0, system.n_local, "u0")
    v0 = _initial(v0, system.n_nonlocal, "v0")
    rl = system.b_l - system.A_ll @ u0 + system.C_ln @ v0
    rn = system.b_n - system.A_nn @ v0 + system.C_nl @ u0

    def lo(r):
        return float(r.min()) if r.size else 0.0

    def hi(r):
        return float(r.max()) if r.size else 0.0

    sub = lo(rl) >= -slack and lo(rn) >= -slack
    sup = hi(rl) <= slack and hi(rn) <= slack
    return SubsolutionReport(sub, sup, lo(rl), lo(rn), hi(rl), hi(rn))


@dataclass
class MonotoneReport:
    monotone: bool
    direction: str
    violations: int
    first_violation: tuple | None
    bounded_by_limit: bool


def check_monotone(
    iterates: Sequence[tuple[np.ndarray, np.ndarray]],
    limit: tuple[np.ndarray, np.ndarray] | None = None,
    direction: str = "increasing",
    slack: float = 1e-12,
) -> MonotoneReport:
    """Componentwise monotonicity of stored ``(u_n, v_n)`` iterates.

    For ``"increasing"`` checks ``u_n <= u_{n+1}``, ``v_n <= v_{n+1}`` and,
    when ``limit`` is given, ``u_n <= u*`` and ``v_n <= v*``; reversed for
    ``"decreasing"``.  The slack is relative to the largest nodal value.
    """
    if direction not in ("increasing", "decreasing"):
        raise ValueError("direction must be 'increasing' or 'decreasing'")
    sign = 1.0 if direction == "increasing" else -1.0
    scale = max([1.0] + [float(np.max(np.abs(np.concatenate(p)), initial=0.0)) for p in iterates])
    tol = slack * scale
    count = 0
    first = None
    for n in range(len(iterates) - 1):
        for comp in (0, 1):
            d = sign * (iterates[n + 1][comp] - iterates[n][comp])
            bad = np.nonzero(d < -tol)[0]
            if bad.size:
                count += bad.size
                if first is None:
                    first = ("u" if comp == 0 else "v", n, int(bad[0]))
    bounded = True
    if limit is not None:
        for n, pair in enumerate(iterates):
            for comp in (0, 1):
                d = sign * (limit[comp] - pair[comp])
                bad = np.nonzero(d < -tol)[0]
                if bad.size:
                    bounded = False
                    count += bad.size
                    if first is None:
                        first = ("limit-" + ("u" if comp == 0 else "v"), n, int(bad[0]))
    return MonotoneReport(count == 0, direction, count, first, bounded)


@dataclass
class MultidomainResult:
    fields: list[np.ndarray]
    coeffs: np.ndarray
    history: IterationHistory
    converged: bool
    space: FeSpace
    system: AssembledSystem
    reference: np.ndarray | None = None
    iterates: list[np.ndarray] | None = None

    def l2_error(self, other) -> float:
        return _l2(self.system.mass_n, self.coeffs - np.asarray(other))


def run_multidomain_nonlocal(
    partition,
    kernel,
    source,
    config: SchwarzConfig | None = None,
    target_h: float | None = None,
    mesh=None,
    system: AssembledSystem | None = None,
    nonlocal_degree: str = "P1",
) -> MultidomainResult:
    """Block Gauss-Seidel (alternating) or block Jacobi (parallel) iteration
    on the purely nonlocal Galerkin system, one block per subdomain.

    Subdomain ``k`` solves its diagonal block exactly with off-block data
    frozen at the latest (alternating) or previous (parallel) iterate.
    """
    cfg = config or SchwarzConfig()
    if partition.local_intervals:
        raise ConfigurationError("multidomain iteration needs a purely nonlocal partition")
    K = len(partition.nonlocal_intervals)
    if K < 1:
        raise ConfigurationError("partition has no nonlocal subdomain")
    if system is None:
        system = assemble_system(
            partition, kernel, source, target_h=target_h, mesh=mesh, lumped=cfg.lumped, nonlocal_degree=nonlocal_degree
        )
    G = system.A_nn.tocsr()
    Gn = (system.K_nn_sym + system.M_n_w).tocsr()
    b = system.b_n
    space = system.space_n
    blocks = [np.nonzero(space.dof_region == k)[0] for k in range(K)]
    solvers = [factorize(G[idx][:, idx]) for idx in blocks]
    off = []
    for idx in blocks:
        rows = G[idx]
        mask = np.ones(G.shape[0], dtype=bool)
        mask[idx] = False
        off.append(rows[:, np.nonzero(mask)[0]].tocsr())
    comp = [np.nonzero(~np.isin(np.arange(G.shape[0]), idx))[0] for idx in blocks]

    def hnorm(x):
        return float(np.sqrt(max(0.5 * float(x @ (Gn @ x)), 0.0)))

    def energy(x):
        return 0.5 * float(x @ (Gn @ x)) - float(b @ x)

    ref = None
    if cfg.reference == "monolithic" or K == 1:
        ref = factorize(G).solve_refined(b)[0]
    if K == 1:
        warnings.warn("single nonlocal subdomain: multidomain iteration reduces to one solve")
    x = _initial(cfg.initial_v, len(b), "initial_v")
    hist = IterationHistory(variant=cfg.variant)
    iterates = [x.copy()] if cfg.store_iterates else None
    workers = thread_cap(K)
    pool = ThreadPoolExecutor(workers) if cfg.variant == "parallel" and workers > 1 else None

    def block_solve(k, data):
        return solvers[k].solve(b[blocks[k]] - off[k] @ data[comp[k]])

    converged = False
    t0 = time.perf_counter()
    try:
        for n in range(1, int(cfg.max_iter) + 1):
            if K == 1:
                new = ref.copy()
            elif cfg.variant == "alternating":
                new = x.copy()
                for k in range(K):
                    new[blocks[k]] = block_solve(k, new)
            else:
                frozen = x.copy()
                if pool is not None:
                    parts = list(pool.map(lambda k: block_solve(k, frozen), range(K)))
                else:
                    parts = [block_solve(k, frozen) for k in range(K)]
                new = np.empty_like(x)
                for k in range(K):
                    new[blocks[k]] = parts[k]
            diff = hnorm(new - x)
            size = hnorm(new)
            x = new
            err = en = None
            if ref is not None:
                err = hnorm(x - ref)
                en = _l2(system.mass_n, x - ref)
            hist.records.append(IterationRecord(n, diff, err, energy(x), time.perf_counter() - t0, None, en))
            if iterates is not None:
                iterates.append(x.copy())
            if diff <= cfg.tol * size:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    hist.converged = converged
    if not converged:
        warnings.warn(f"multidomain iteration did not converge in {cfg.max_iter} iterations", RuntimeWarning)
    est = estimate_rate(hist, quiet=True)
    hist.rate_estimate = None if est is None else est.rate
    fields = [x[idx].copy() for idx in blocks]
    return MultidomainResult(fields, x, hist, converged, space, system, ref, iterates)


def monolithic_nonlocal(system: AssembledSystem) -> np.ndarray:
    """Direct solve of the purely nonlocal system ``A_nn v = b_n``."""
    return factorize(system.A_nn).solve_refined(system.b_n)[0]


def h_norm_equivalence(system: AssembledSystem, samples: int = 100, seed: int = 0) -> tuple[float, float]:
    """Measured ``(c1, c2)`` with ``c1 N <= ||.||_H^2 <= c2 N`` on random fields,
    ``N = ||u||_{H1}^2 + ||v||_{L2}^2``."""
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        u = rng.standard_normal(system.n_local)
        v = rng.standard_normal(system.n_nonlocal)
        prod = float(u @ (system.stiffness @ u) + u @ (system.mass_l @ u) + v @ (system.mass_n @ v))
        ratios.append(eval_H_norm(system, u, v) ** 2 / prod)
    return float(min(ratios)), float(max(ratios))

