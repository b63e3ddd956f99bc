"""Command line runner: ``schwarz-coupler {solve,schwarz,multidomain,validate} CONFIG``.

Exit status: 0 success, 2 invalid configuration, 3 iteration did not
converge (artifacts are still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import accel, svgplot
from .assembly import AssembledSystem, FeSpace, assemble_system
from .config import RunConfig, bundled_config, load_config
from .errors import ConfigurationError
from .geometry import validate_partition
from .kernel import validate_kernel
from .schwarz import (
    IterationHistory,
    SchwarzConfig,
    estimate_rate,
    eval_energy,
    eval_H_norm,
    monolithic_nonlocal,
    run_monolithic,
    run_multidomain_nonlocal,
    run_schwarz,
)

log = logging.getLogger("schwarz_coupler")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3


def _num(v) -> str:
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return f"{float(v):.17g}"


# ---------------------------------------------------------------- emitters


def solution_rows(fields: Sequence[tuple[FeSpace, np.ndarray, str]]) -> list[tuple[float, float, str, int]]:
    """One ``(x, value, component, subdomain_index)`` row per dof, sorted by x."""
    rows = []
    for space, coeffs, name in fields:
        for x, val, r in zip(space.dof_coords, coeffs, space.dof_region):
            rows.append((float(x), float(val), name, int(r)))
    rank = {"local": 0, "nonlocal": 1}
    rows.sort(key=lambda t: (t[0], rank.get(t[2], 2), t[3]))
    return rows


def emit_solution_csv(fields, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "value", "component", "subdomain_index"])
        for x, val, comp, r in solution_rows(fields):
            w.writerow([_num(x), _num(val), comp, r])
    return path


def running_rates(history: IterationHistory) -> list[float | None]:
    out = []
    for n in range(1, len(history) + 1):
        partial = IterationHistory(history.records[:n])
        est = estimate_rate(partial, quiet=True)
        out.append(None if est is None else est.rate)
    return out


def emit_history_csv(history: IterationHistory, path: str | Path) -> Path:
    path = Path(path)
    rates = running_rates(history)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "step_diff_H", "err_H", "energy_Ei", "rate_running", "err_L2_local", "err_L2_nonlocal"])
        for rec, rate in zip(history.records, rates):
            w.writerow([
                rec.index,
                _num(rec.step_diff_H),
                _num(rec.err_vs_monolithic_H),
                _num(rec.energy_Ei),
                _num(rate),
                _num(rec.err_L2_local),
                _num(rec.err_L2_nonlocal),
            ])
        fh.write(f"# rate_estimate={_num(history.rate_estimate)}\n")
    return path


def read_history_csv(path: str | Path) -> tuple[list[dict], float | None]:
    """Rows as dicts of floats (``None`` for empty cells) and the footer rate."""
    rows, rate = [], None
    with Path(path).open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    data = [ln for ln in lines if not ln.startswith("#")]
    for ln in lines:
        if ln.startswith("# rate_estimate="):
            txt = ln.split("=", 1)[1]
            rate = float(txt) if txt else None
    for row in csv.DictReader(data):
        rows.append({k: (float(v) if v != "" else None) for k, v in row.items()})
    return rows, rate


def _field_series(space: FeSpace, coeffs, label: str, color: str, dash: str = "") -> list[svgplot.Series]:
    out = []
    for k, r in enumerate(space.regions):
        if space.degree == "P0":
            sel = space.dof_region == r
            x, y = space.dof_coords[sel], np.asarray(coeffs)[sel]
        else:
            els = space.elements[space.mesh.element_region[space.elements] == r]
            x = np.unique(space.mesh.nodes[space.mesh.elements[els]].ravel())
            y = space.evaluate(coeffs, x, region=r)
        out.append(svgplot.Series(x, y, label if k == 0 else "", color=color, dash=dash))
    return out


def _markers(system: AssembledSystem) -> list[float]:
    pts = set(system.partition.interface_points())
    ivs = system.partition.nonlocal_intervals
    pts.update(a.hi for a, b in zip(ivs, ivs[1:]) if a.hi == b.lo)
    return sorted(pts)


def solution_panel(system: AssembledSystem, u, v, title: str = "solution") -> svgplot.Panel:
    series = []
    if system.n_local:
        series += _field_series(system.space_l, u, "local u", svgplot.PALETTE[0])
    if system.n_nonlocal:
        series += _field_series(system.space_n, v, "nonlocal v", svgplot.PALETTE[1], "6,4")
    return svgplot.Panel(series, title, "x", "value", vlines=_markers(system))


def iterates_panel(system: AssembledSystem, iterates, limit, title: str) -> svgplot.Panel:
    series = []
    for n, (u, v) in enumerate(iterates):
        color = svgplot.PALETTE[2 + n % (len(svgplot.PALETTE) - 2)]
        lab = f"iterate {n + 1}"
        if system.n_local:
            series += _field_series(system.space_l, u, lab, color, "2,3")
            lab = ""
        if system.n_nonlocal:
            series += _field_series(system.space_n, v, lab, color, "2,3")
    lu, lv = limit
    if system.n_local:
        series += _field_series(system.space_l, lu, "limit", "#000000")
    if system.n_nonlocal:
        series += _field_series(system.space_n, lv, "" if system.n_local else "limit", "#000000")
    return svgplot.Panel(series, title, "x", "value", vlines=_markers(system))


def convergence_panel(histories: dict[str, IterationHistory]) -> svgplot.Panel:
    series = []
    use_err = all(np.any(np.isfinite(h.errors)) for h in histories.values())
    for name, h in histories.items():
        y = h.errors if use_err else h.step_diffs
        x = [r.index for r in h.records]
        series.append(svgplot.Series(x, y, name, markers=True))
    ylabel = "error in H-norm" if use_err else "step difference in H-norm"
    return svgplot.Panel(series, "convergence", "iteration", ylabel, logy=True)


# ---------------------------------------------------------------- runs


def _assemble(cfg: RunConfig) -> AssembledSystem:
    return assemble_system(
        cfg.partition,
        cfg.kernel,
        cfg.source,
        target_h=cfg.target_h,
        lumped=cfg.lumped,
        nonlocal_degree=cfg.nonlocal_degree,
        q=cfg.quadrature_order,
    )


def _jumps(system: AssembledSystem, u, v) -> list[dict]:
    out = []
    for x0 in system.partition.interface_points():
        ul = system.space_l.evaluate(u, [x0])[0]
        vn = system.space_n.evaluate(v, [x0])[0]
        out.append({"x": x0, "local": float(ul), "nonlocal": float(vn), "jump": float(abs(ul - vn))})
    return out


def _meta_base(command: str, cfg: RunConfig, system: AssembledSystem) -> dict:
    return {
        "command": command,
        "name": cfg.name,
        "config": cfg.raw,
        "backend": accel.backend(),
        "mesh": {"elements": int(system.mesh.n_elements), "h": float(system.mesh.h)},
        "dofs": {"local": int(system.n_local), "nonlocal": int(system.n_nonlocal)},
    }


def _write_meta(cfg: RunConfig, out: Path, meta: dict):
    if cfg.meta_json:
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    system = _assemble(cfg)
    if system.n_local:
        u, v, report = run_monolithic(system)
        residual = report.residual_norm
    else:
        u, v = np.zeros(0), monolithic_nonlocal(system)
        residual = float(np.linalg.norm(system.A_nn @ v - system.b_n))
    if cfg.solution_csv:
        emit_solution_csv([(system.space_l, u, "local"), (system.space_n, v, "nonlocal")], out / "solution.csv")
    if cfg.plots:
        svgplot.write([solution_panel(system, u, v, "monolithic solution")], out / "solution.svg")
    meta = _meta_base("solve", cfg, system)
    meta["monolithic"] = {
        "H_norm": eval_H_norm(system, u, v),
        "energy_Ei": eval_energy(system, u, v),
        "residual_norm": residual,
        "interface": _jumps(system, u, v),
    }
    _write_meta(cfg, out, meta)
    return EXIT_OK


def _variants(cfg: RunConfig) -> list[str]:
    return ["alternating", "parallel"] if cfg.variant == "both" else [cfg.variant]


def _schwarz_config(cfg: RunConfig, variant: str) -> SchwarzConfig:
    return SchwarzConfig(
        variant=variant,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        initial_u=cfg.initial_u,
        initial_v=cfg.initial_v,
        lumped=cfg.lumped,
        reference=cfg.reference,
        store_iterates=cfg.plots and cfg.plot_iterates > 0,
    )


def _summary(history: IterationHistory, converged: bool) -> dict:
    last = history.records[-1] if history.records else None
    return {
        "iterations": len(history),
        "converged": bool(converged),
        "rate_estimate": history.rate_estimate,
        "final_step_diff_H": None if last is None else last.step_diff_H,
        "final_err_H": None if last is None else last.err_vs_monolithic_H,
    }


def _history_name(variant: str, multiple: bool) -> str:
    return f"history_{variant}.csv" if multiple else "history.csv"


def cmd_schwarz(cfg: RunConfig, out: Path) -> int:
    if not cfg.partition.local_intervals or not cfg.partition.nonlocal_intervals:
        raise ConfigurationError("$.partition: schwarz needs at least one local and one nonlocal interval")
    system = _assemble(cfg)
    variants = _variants(cfg)
    results = {}
    for name in variants:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            results[name] = run_schwarz(system, _schwarz_config(cfg, name))
    first = results[variants[0]]
    if cfg.solution_csv:
        emit_solution_csv([(system.space_l, first.u, "local"), (system.space_n, first.v, "nonlocal")], out / "solution.csv")
    if cfg.history_csv:
        for name, res in results.items():
            emit_history_csv(res.history, out / _history_name(name, len(results) > 1))
    if cfg.plots:
        svgplot.write([solution_panel(system, first.u, first.v, "Schwarz limit")], out / "solution.svg")
        svgplot.write([convergence_panel({n: r.history for n, r in results.items()})], out / "convergence.svg")
        if cfg.plot_iterates > 0:
            panels = [
                iterates_panel(system, r.iterates[1: cfg.plot_iterates + 1], (r.u, r.v), n)
                for n, r in results.items()
            ]
            svgplot.write(panels, out / "iterates.svg")
    meta = _meta_base("schwarz", cfg, system)
    meta["runs"] = {}
    for name, res in results.items():
        entry = _summary(res.history, res.converged)
        entry["fixed_point_residual"] = res.fixed_point_residual
        entry["H_norm"] = eval_H_norm(system, res.u, res.v)
        entry["interface"] = _jumps(system, res.u, res.v)
        meta["runs"][name] = entry
    _write_meta(cfg, out, meta)
    bad = [n for n, r in results.items() if not r.converged]
    if bad:
        print(f"error: {', '.join(bad)} iteration did not converge in {cfg.max_iter} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_multidomain(cfg: RunConfig, out: Path) -> int:
    part = cfg.partition
    if part.local_intervals:
        raise ConfigurationError("$.partition.local: multidomain runs need a purely nonlocal partition")
    system = _assemble(cfg)
    results = {}
    for name in _variants(cfg):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            results[name] = run_multidomain_nonlocal(part, cfg.kernel, cfg.source, _schwarz_config(cfg, name), system=system)
    first = next(iter(results.values()))
    empty = np.zeros(0)
    if cfg.solution_csv:
        emit_solution_csv([(system.space_n, first.coeffs, "nonlocal")], out / "solution.csv")
    if cfg.history_csv:
        for name, res in results.items():
            emit_history_csv(res.history, out / _history_name(name, len(results) > 1))
    if cfg.plots:
        svgplot.write([solution_panel(system, empty, first.coeffs, "nonlocal limit")], out / "solution.svg")
        svgplot.write([convergence_panel({n: r.history for n, r in results.items()})], out / "convergence.svg")
        if cfg.plot_iterates > 0:
            panels = [
                iterates_panel(system, [(empty, c) for c in r.iterates[1: cfg.plot_iterates + 1]], (empty, r.coeffs), n)
                for n, r in results.items()
            ]
            svgplot.write(panels, out / "iterates.svg")
    meta = _meta_base("multidomain", cfg, system)
    meta["subdomains"] = len(part.nonlocal_intervals)
    meta["runs"] = {}
    for name, res in results.items():
        entry = _summary(res.history, res.converged)
        if res.reference is not None:
            entry["err_L2_vs_monolithic"] = res.l2_error(res.reference)
        meta["runs"][name] = entry
    _write_meta(cfg, out, meta)
    bad = [n for n, r in results.items() if not r.converged]
    if bad:
        print(f"error: {', '.join(bad)} iteration did not converge in {cfg.max_iter} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Path | None = None) -> int:
    krep = validate_kernel(cfg.kernel, strict=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        prep = validate_partition(cfg.partition, cfg.kernel)
    print(f"config ok: {cfg.name}")
    print(
        f"kernel: {cfg.kernel.family}, support {cfg.kernel.support_radius:g}, "
        f"delta {krep.delta:g}, lower bound {krep.lower_bound:g}"
    )
    print(f"partition: {len(cfg.partition.local_intervals)} local, {len(cfg.partition.nonlocal_intervals)} nonlocal")
    for msg in krep.messages + prep.messages:
        print(f"warning: {msg}", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "schwarz": cmd_schwarz, "multidomain": cmd_multidomain, "validate": cmd_validate}


def _resolve(arg: str) -> Path:
    path = Path(arg)
    if path.exists() or path.suffix:
        return path
    try:
        return bundled_config(arg)
    except FileNotFoundError:
        return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schwarz-coupler", description="Coupled local/nonlocal diffusion with Schwarz iterations.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "monolithic Galerkin solve"),
        ("schwarz", "alternating and/or parallel Schwarz iteration"),
        ("multidomain", "block Gauss-Seidel / Jacobi on a split nonlocal domain"),
        ("validate", "check the configuration and report kernel/partition diagnostics"),
    ):
        sp_ = sub.add_parser(name, help=help_text)
        sp_.add_argument("config", help="JSON config path or bundled name (paper_fig2, paper_fig3)")
        sp_.add_argument("--out-dir", type=Path, default=None, help="override outputs.directory")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    path = _resolve(args.config)
    try:
        cfg = load_config(path)
    except FileNotFoundError:
        print(f"error: config file not found: {path}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigurationError as exc:
        print(f"error: invalid configuration {path}:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        return cmd_validate(cfg)
    out = args.out_dir or (cfg.out_dir if cfg.out_dir.is_absolute() else Path.cwd() / cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        status = COMMANDS[args.command](cfg, out)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    log.info("%s finished in %.3f s, outputs in %s", args.command, time.perf_counter() - t0, out)
    return status


if __name__ == "__main__":
    sys.exit(main())
