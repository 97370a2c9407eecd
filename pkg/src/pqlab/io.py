"""Versioned JSON instance and solution files, plus CSV tables.

Floats are written with 17 significant digits and a fixed layout, so a file
produced here survives ``write(read(path))`` byte for byte.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .measure import DataPair, MeasureSpace
from .monotone import MonotoneMap, PPowerMap
from .subspace import SubspacePair, build_subspace

SCHEMA_VERSION = 1
MAP_KINDS = ("p-power",)


class InstanceFormatError(ValueError):
    """An instance or solution file is malformed."""


@dataclass(frozen=True, eq=False)
class Instance:
    weights: np.ndarray
    value_dim: int
    basis: np.ndarray  # (m, N*d), raw
    a: np.ndarray  # (N*d,)
    b: np.ndarray
    p: float
    coefficient: Optional[np.ndarray] = None
    map_kind: str = "p-power"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        d = int(self.value_dim)
        n = w.size * d
        if w.size < 1 or np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise InstanceFormatError("weights must be a nonempty list of positive numbers")
        if d < 1:
            raise InstanceFormatError("value_dim must be >= 1")
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.size == 0:
            basis = np.zeros((0, n))
        if basis.ndim != 2 or basis.shape[1] != n:
            raise InstanceFormatError(f"basis rows must have N*d = {n} entries")
        if basis.shape[0] > n:
            raise InstanceFormatError(f"basis has {basis.shape[0]} rows, more than N*d = {n}")
        arrs = {}
        for name in ("a", "b"):
            x = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if x.size != n:
                raise InstanceFormatError(f"{name} has {x.size} entries, expected N*d = {n}")
            arrs[name] = x
        for name, x in (("basis", basis), ("a", arrs["a"]), ("b", arrs["b"])):
            if not np.all(np.isfinite(x)):
                raise InstanceFormatError(f"{name} contains non-finite entries")
        if not (isinstance(self.p, (int, float)) and math.isfinite(self.p) and self.p > 1):
            raise InstanceFormatError("p must be a number > 1")
        if self.map_kind not in MAP_KINDS:
            raise InstanceFormatError(f"unknown map kind {self.map_kind!r}; expected one of {MAP_KINDS}")
        mu = None
        if self.coefficient is not None:
            mu = np.asarray(self.coefficient, dtype=np.float64).reshape(-1)
            if mu.size != w.size or np.any(~np.isfinite(mu)) or np.any(mu <= 0):
                raise InstanceFormatError("map coefficient must hold N positive numbers")
        for k, v in (("weights", w), ("value_dim", d), ("basis", basis), ("a", arrs["a"]),
                     ("b", arrs["b"]), ("p", float(self.p)), ("coefficient", mu)):
            object.__setattr__(self, k, v)

    @property
    def space(self) -> MeasureSpace:
        return MeasureSpace(self.weights, self.value_dim)

    def subspace(self, space: MeasureSpace | None = None) -> SubspacePair:
        return build_subspace(space or self.space, list(self.basis))

    def data(self, space: MeasureSpace | None = None) -> DataPair:
        space = space or self.space
        shape = (space.point_count, space.value_dim)
        return DataPair.from_arrays(space, self.a.reshape(shape), self.b.reshape(shape), self.p)

    def monotone_map(self) -> MonotoneMap:
        return PPowerMap(self.p, self.coefficient)

    def realize(self):
        """(S, M, f) on one shared measure space."""
        space = self.space
        return self.subspace(space), self.monotone_map(), self.data(space)


# emitter


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x) + 0.0  # folds -0.0 into 0.0
    if not math.isfinite(x):
        raise InstanceFormatError("cannot serialize non-finite number")
    return format(x, ".17g")


def _vec(v) -> str:
    return "[" + ", ".join(_num(x) for x in np.asarray(v).reshape(-1)) + "]"


def _value(v, indent: str) -> str:
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        inner = indent + "  "
        rows = [f"{inner}{json.dumps(str(k))}: {_value(x, inner)}" for k, x in v.items()]
        return "{\n" + ",\n".join(rows) + "\n" + indent + "}"
    if isinstance(v, np.ndarray) and v.ndim == 2:
        if v.shape[0] == 0:
            return "[]"
        inner = indent + "  "
        return "[\n" + ",\n".join(inner + _vec(r) for r in v) + "\n" + indent + "]"
    if isinstance(v, (list, tuple, np.ndarray)):
        return _vec(v)
    return _num(v)


def dumps_document(doc: dict) -> str:
    return _value(doc, "") + "\n"


def instance_document(inst: Instance) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "weights": inst.weights,
        "value_dim": inst.value_dim,
        "basis": inst.basis,
        "a": inst.a,
        "b": inst.b,
        "p": inst.p,
        "map": {"kind": inst.map_kind, "coefficient": inst.coefficient},
    }
    if inst.meta:
        doc["meta"] = inst.meta
    return doc


def dumps_instance(inst: Instance) -> str:
    return dumps_document(instance_document(inst))


def write_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def _require(doc: dict, key: str):
    if key not in doc:
        raise InstanceFormatError(f"missing field {key!r}")
    return doc[key]


def _numeric(value, name: str, ndim: int) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"field {name!r} is not a numeric array") from exc
    if ndim == 2 and arr.size == 0:
        return arr.reshape(0, 0)
    if arr.ndim != ndim:
        raise InstanceFormatError(f"field {name!r} must be a {ndim}-d array")
    return arr


def loads_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance file must hold a JSON object")
    version = _require(doc, "schema_version")
    if version != SCHEMA_VERSION:
        raise InstanceFormatError(f"unsupported schema_version {version!r}")
    mp = _require(doc, "map")
    if not isinstance(mp, dict):
        raise InstanceFormatError("field 'map' must be an object")
    coef = mp.get("coefficient")
    vd = _require(doc, "value_dim")
    if not isinstance(vd, int) or isinstance(vd, bool):
        raise InstanceFormatError("value_dim must be an integer")
    p = _require(doc, "p")
    if not isinstance(p, (int, float)) or isinstance(p, bool):
        raise InstanceFormatError("p must be a number")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise InstanceFormatError("field 'meta' must be an object")
    return Instance(
        weights=_numeric(_require(doc, "weights"), "weights", 1),
        value_dim=vd,
        basis=_numeric(_require(doc, "basis"), "basis", 2),
        a=_numeric(_require(doc, "a"), "a", 1),
        b=_numeric(_require(doc, "b"), "b", 1),
        p=float(p),
        coefficient=None if coef is None else _numeric(coef, "map.coefficient", 1),
        map_kind=mp.get("kind", "p-power"),
        meta=meta,
    )


def read_instance(path) -> Instance:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InstanceFormatError(f"cannot read {path}: {exc.strerror}") from exc
    return loads_instance(text)


def solution_document(report, tol: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "alpha": report.alpha.flat,
        "beta": report.beta.flat,
        "residual": report.residual_norm,
        "iterations": report.iterations,
        "converged": bool(report.converged),
        "basic_estimate_ratio": report.basic_estimate_ratio,
        "tol": tol,
        "method": report.method,
    }


def write_solution(report, tol: float, path) -> None:
    Path(path).write_text(dumps_document(solution_document(report, tol)))


def read_solution(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["alpha"] = np.asarray(doc["alpha"], dtype=np.float64)
    doc["beta"] = np.asarray(doc["beta"], dtype=np.float64)
    return doc


def csv_cell(x: Any) -> str:
    if isinstance(x, str):
        return x
    return _num(x)


def write_csv(rows: Sequence[dict], path_or_stream, columns: Sequence[str] | None = None) -> None:
    """Rows of dicts to CSV with numbers at 17 significant digits."""
    columns = list(columns or (rows[0].keys() if rows else []))
    own = isinstance(path_or_stream, (str, Path))
    fh = open(path_or_stream, "w", newline="") if own else path_or_stream
    try:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([csv_cell(r.get(c, "")) for c in columns])
    finally:
        if own:
            fh.close()
