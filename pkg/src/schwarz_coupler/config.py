"""Run configuration: JSON schema, loading and conversion to solver objects."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from jsonschema import Draft202012Validator

from .errors import ConfigurationError
from .geometry import Partition1D
from .kernel import KernelSpec, load_table_csv

_interval = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
}

_field = {"oneOf": [{"const": "zero"}, {"type": "number"}]}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "schwarz-coupler run",
    "type": "object",
    "additionalProperties": False,
    "required": ["partition", "kernel", "source", "discretization"],
    "properties": {
        "name": {"type": "string"},
        "partition": {
            "type": "object",
            "additionalProperties": False,
            "required": ["local", "nonlocal"],
            "properties": {
                "local": {"type": "array", "items": _interval},
                "nonlocal": {"type": "array", "items": _interval},
                "split_nonlocal": {"type": "integer", "minimum": 1},
                "horizon_pad": {"type": "number", "minimum": 0},
            },
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["hat", "box", "table"]},
                "support_radius": {"type": "number", "exclusiveMinimum": 0},
                "normalization": {"type": "number", "exclusiveMinimum": 0},
                "table_csv": {"type": "string"},
            },
        },
        "source": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["polynomial", "constant"]},
                "coefficients": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "value": {"type": "number"},
            },
        },
        "discretization": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target_h": {"type": "number", "exclusiveMinimum": 0},
                "nodes": {"type": "integer", "minimum": 2},
                "nonlocal_degree": {"enum": ["P0", "P1"]},
                "lumped": {"type": "boolean"},
                "quadrature_order": {"type": "integer", "minimum": 2, "maximum": 12},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["alternating", "parallel", "both"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "initial_u": _field,
                "initial_v": _field,
                "reference": {"enum": ["none", "monolithic"]},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "solution_csv": {"type": "boolean"},
                "history_csv": {"type": "boolean"},
                "meta_json": {"type": "boolean"},
                "plots": {"type": "boolean"},
                "plot_iterates": {"type": "integer", "minimum": 0},
            },
        },
    },
}


def _key_path(parts) -> str:
    path = "$"
    for p in parts:
        path += f"[{p}]" if isinstance(p, int) else f".{p}"
    return path


def validate_document(doc: Any) -> list[str]:
    """Schema errors as ``"<key path>: <message>"`` strings, sorted."""
    errs = Draft202012Validator(SCHEMA).iter_errors(doc)
    out = []
    for e in errs:
        where = list(e.absolute_path)
        if e.validator == "additionalProperties":
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            where = where + extra[:1]
        elif e.validator == "required":
            missing = [r for r in e.validator_value if r not in e.instance]
            where = where + missing[:1]
        out.append(f"{_key_path(where)}: {e.message}")
    return sorted(out)


@dataclass
class Source:
    family: str
    coefficients: tuple[float, ...]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full_like(x, self.coefficients[0])
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def is_nonnegative_hint(self) -> bool:
        return self.family == "constant" and self.coefficients[0] >= 0


@dataclass
class RunConfig:
    """Validated configuration with defaults filled in."""

    raw: dict
    base_dir: Path
    partition: Partition1D
    kernel: KernelSpec
    source: Source
    target_h: float
    nonlocal_degree: str
    lumped: bool
    quadrature_order: int
    variant: str
    tol: float
    max_iter: int
    initial_u: object
    initial_v: object
    reference: str
    out_dir: Path
    solution_csv: bool
    history_csv: bool
    meta_json: bool
    plots: bool
    plot_iterates: int

    @property
    def name(self) -> str:
        return self.raw.get("name", "run")


def _fail(path: str, msg: str):
    raise ConfigurationError(f"{path}: {msg}")


def build_config(doc: dict, base_dir: str | Path = ".") -> RunConfig:
    """Turn a schema-valid document into a :class:`RunConfig`.

    Semantic checks beyond the schema raise :class:`ConfigurationError`
    whose message starts with the offending key path.
    """
    errors = validate_document(doc)
    if errors:
        raise ConfigurationError("\n".join(errors))
    base = Path(base_dir)

    kd = doc["kernel"]
    family = kd["family"]
    if family == "table":
        if "table_csv" not in kd:
            _fail("$.kernel.table_csv", "required for family 'table'")
        path = Path(kd["table_csv"])
        kernel = load_table_csv(path if path.is_absolute() else base / path)
    else:
        if "support_radius" not in kd:
            _fail("$.kernel.support_radius", f"required for family {family!r}")
        factory = KernelSpec.hat if family == "hat" else KernelSpec.box
        kernel = factory(kd["support_radius"], kd.get("normalization", 1.0))

    pd = doc["partition"]
    for key in ("local", "nonlocal"):
        for i, (a, b) in enumerate(pd[key]):
            if not a < b:
                _fail(f"$.partition.{key}[{i}]", f"interval needs lo < hi, got [{a}, {b}]")
    pad = pd.get("horizon_pad", kernel.support_radius)
    try:
        partition = Partition1D(pd["local"], pd["nonlocal"], pad)
        if pd.get("split_nonlocal", 1) > 1:
            partition = partition.split_nonlocal(pd["split_nonlocal"])
    except ConfigurationError as exc:
        _fail("$.partition", str(exc))
    if partition.is_empty:
        _fail("$.partition", "no subdomains given")

    sd = doc["source"]
    if sd["family"] == "polynomial":
        if "coefficients" not in sd:
            _fail("$.source.coefficients", "required for family 'polynomial'")
        source = Source("polynomial", tuple(float(c) for c in sd["coefficients"]))
    else:
        if "value" not in sd:
            _fail("$.source.value", "required for family 'constant'")
        source = Source("constant", (float(sd["value"]),))

    dd = doc["discretization"]
    if ("target_h" in dd) == ("nodes" in dd):
        _fail("$.discretization", "give exactly one of 'target_h' or 'nodes'")
    if "target_h" in dd:
        h = float(dd["target_h"])
    else:
        measure = sum(iv.length for iv in partition.omega())
        h = measure / (dd["nodes"] - 1)

    so = doc.get("solver", {})
    out = doc.get("outputs", {})
    return RunConfig(
        raw=doc,
        base_dir=base,
        partition=partition,
        kernel=kernel,
        source=source,
        target_h=h,
        nonlocal_degree=dd.get("nonlocal_degree", "P1"),
        lumped=dd.get("lumped", False),
        quadrature_order=dd.get("quadrature_order", 4),
        variant=so.get("variant", "alternating"),
        tol=float(so.get("tol", 1e-10)),
        max_iter=int(so.get("max_iter", 500)),
        initial_u=so.get("initial_u", "zero"),
        initial_v=so.get("initial_v", "zero"),
        reference=so.get("reference", "monolithic"),
        out_dir=Path(out.get("directory", "out")),
        solution_csv=out.get("solution_csv", True),
        history_csv=out.get("history_csv", True),
        meta_json=out.get("meta_json", True),
        plots=out.get("plots", True),
        plot_iterates=out.get("plot_iterates", 3),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"$: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return build_config(doc, path.parent)


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``paper_fig2``, ``paper_fig3``)."""
    path = Path(__file__).with_name("configs") / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(path)
    return path
