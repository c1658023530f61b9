"""JSON serialization of spaces, test functions, measures, systems and step functions.

Every real number is written as the shortest decimal string that
round-trips to the same float (``repr``), so loading a dumped object gives
back bit-identical arrays.  Top-level documents carry a ``schema`` tag:
``homfn.v1``, ``measure.v1``, ``gym.v1``, ``sgy.v1`` or ``step.v1``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .approx import StepFunction
from .gym import DiscreteGYM, DiscreteMeasure
from .homfn import (
    Combination,
    ComposeHomMap,
    DirectionGrid,
    EtaGate,
    EtaPart,
    EuclidNorm,
    HomFn,
    HomMap,
    Linear,
    Max,
    Min,
    MoreauYosida,
    PositivePart,
    PrMoment,
    XiNorm,
)
from .space import Interval, PointCloud, SpaceModel
from .systems import SystemGYM, TimeGrid

__all__ = ["SchemaError", "dumps", "loads", "save", "load", "to_doc", "from_doc", "num", "parse_num"]


class SchemaError(ValueError):
    """A document does not match its declared schema; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def num(x) -> str:
    x = float(x)
    if math.isnan(x):
        raise ValueError("NaN cannot be serialized")
    return repr(x)


def parse_num(s, where: str = "value") -> float:
    if isinstance(s, bool) or not isinstance(s, (str, int, float)):
        raise SchemaError(where, "expected a decimal string")
    try:
        v = float(s)
    except ValueError:
        raise SchemaError(where, f"not a number: {s!r}") from None
    if math.isnan(v):
        raise SchemaError(where, "NaN is not allowed")
    return v


def _arr(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return num(a)
    return [_arr(x) for x in a]


def _parse_arr(obj, where):
    if isinstance(obj, list):
        return np.array([_parse_arr(x, f"{where}[{i}]") for i, x in enumerate(obj)], dtype=float)
    return np.float64(parse_num(obj, where))


def _get(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise SchemaError(f"{where}.{key}", "missing")
    return d[key]


def _int(d, key, where):
    v = _get(d, key, where)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{where}.{key}", "expected an integer")
    return v


# ---------------------------------------------------------------------------
# spaces


def space_doc(space: SpaceModel) -> dict:
    if isinstance(space, Interval):
        return {"kind": "interval", "lo": num(space.lo), "hi": num(space.hi), "cells": space.cells}
    if isinstance(space, PointCloud):
        return {
            "kind": "point_cloud",
            "points": list(space.points),
            "weights": _arr(space.weights),
            "distances": _arr(space.distances),
        }
    raise TypeError(f"cannot serialize space {type(space).__name__}")


def space_from(d, where="space") -> SpaceModel:
    kind = _get(d, "kind", where)
    try:
        if kind == "interval":
            return Interval(parse_num(_get(d, "lo", where), f"{where}.lo"), parse_num(_get(d, "hi", where), f"{where}.hi"),
                            _int(d, "cells", where))
        if kind == "point_cloud":
            return PointCloud(tuple(_get(d, "points", where)), _parse_arr(_get(d, "weights", where), f"{where}.weights"),
                              _parse_arr(_get(d, "distances", where), f"{where}.distances"))
    except SchemaError:
        raise
    except ValueError as e:
        raise SchemaError(where, str(e)) from None
    raise SchemaError(f"{where}.kind", f"unknown space kind {kind!r}")


# ---------------------------------------------------------------------------
# test functions


def homfn_doc(f: HomFn) -> dict:
    if isinstance(f, Linear):
        return {"kind": "linear", "a": _arr(f.a), "b": _arr(f.b)}
    if isinstance(f, EuclidNorm):
        return {"kind": "euclid_norm", "dim": f.dim}
    if isinstance(f, XiNorm):
        return {"kind": "xi_norm", "dim": f.dim}
    if isinstance(f, EtaPart):
        return {"kind": "eta", "dim": f.dim}
    if isinstance(f, PositivePart):
        return {"kind": "positive_part", "inner": homfn_doc(f.inner)}
    if isinstance(f, Min):
        return {"kind": "min", "left": homfn_doc(f.left), "right": homfn_doc(f.right)}
    if isinstance(f, Max):
        return {"kind": "max", "left": homfn_doc(f.left), "right": homfn_doc(f.right)}
    if isinstance(f, Combination):
        return {"kind": "combination", "terms": [{"coef": num(c), "f": homfn_doc(g)} for c, g in f.terms]}
    if isinstance(f, PrMoment):
        return {"kind": "moment", "r": num(f.r), "dim": f.dim}
    if isinstance(f, EtaGate):
        return {"kind": "eta_gate", "inner": homfn_doc(f.inner)}
    if isinstance(f, ComposeHomMap):
        return {"kind": "compose", "inner": homfn_doc(f.inner), "map": hommap_doc(f.psi)}
    if isinstance(f, MoreauYosida):
        return {
            "kind": "moreau_yosida",
            "inner": homfn_doc(f.inner),
            "k": num(f.k),
            "joint": bool(f.joint),
            "grid": {"vectors": _arr(f.grid.vectors), "covering_radius": num(f.grid.covering_radius)},
        }
    raise TypeError(f"{type(f).__name__} holds Python callables and cannot be serialized")


def hommap_doc(m: HomMap) -> dict:
    if m.matrix is not None:
        return {"dim_in": m.dim_in, "matrix": _arr(m.matrix)}
    return {"dim_in": m.dim_in, "components": [homfn_doc(c) for c in m.components]}


def homfn_from(d, where="f") -> HomFn:
    kind = _get(d, "kind", where)
    try:
        if kind == "linear":
            return Linear(_parse_arr(_get(d, "a", where), f"{where}.a"), _parse_arr(_get(d, "b", where), f"{where}.b"))
        if kind == "euclid_norm":
            return EuclidNorm(_int(d, "dim", where))
        if kind == "xi_norm":
            return XiNorm(_int(d, "dim", where))
        if kind == "eta":
            return EtaPart(_int(d, "dim", where))
        if kind == "positive_part":
            return PositivePart(homfn_from(_get(d, "inner", where), f"{where}.inner"))
        if kind in ("min", "max"):
            cls = Min if kind == "min" else Max
            return cls(homfn_from(_get(d, "left", where), f"{where}.left"),
                       homfn_from(_get(d, "right", where), f"{where}.right"))
        if kind == "combination":
            terms = _get(d, "terms", where)
            if not isinstance(terms, list):
                raise SchemaError(f"{where}.terms", "expected a list")
            return Combination(tuple(
                (parse_num(_get(t, "coef", f"{where}.terms[{i}]"), f"{where}.terms[{i}].coef"),
                 homfn_from(_get(t, "f", f"{where}.terms[{i}]"), f"{where}.terms[{i}].f"))
                for i, t in enumerate(terms)
            ))
        if kind == "moment":
            return PrMoment(parse_num(_get(d, "r", where), f"{where}.r"), _int(d, "dim", where))
        if kind == "eta_gate":
            return EtaGate(homfn_from(_get(d, "inner", where), f"{where}.inner"))
        if kind == "compose":
            return ComposeHomMap(homfn_from(_get(d, "inner", where), f"{where}.inner"),
                                 hommap_from(_get(d, "map", where), f"{where}.map"))
        if kind == "moreau_yosida":
            g = _get(d, "grid", where)
            grid = DirectionGrid(_parse_arr(_get(g, "vectors", f"{where}.grid"), f"{where}.grid.vectors"),
                                 parse_num(_get(g, "covering_radius", f"{where}.grid"), f"{where}.grid.covering_radius"))
            return MoreauYosida(homfn_from(_get(d, "inner", where), f"{where}.inner"),
                                parse_num(_get(d, "k", where), f"{where}.k"), grid, bool(d.get("joint", False)))
    except SchemaError:
        raise
    except (ValueError, TypeError) as e:
        raise SchemaError(where, str(e)) from None
    raise SchemaError(f"{where}.kind", f"unknown node kind {kind!r}")


def hommap_from(d, where="map") -> HomMap:
    dim_in = _int(d, "dim_in", where)
    if "matrix" in d:
        return HomMap(dim_in, matrix=_parse_arr(d["matrix"], f"{where}.matrix"))
    comps = _get(d, "components", where)
    return HomMap(dim_in, tuple(homfn_from(c, f"{where}.components[{i}]") for i, c in enumerate(comps)))


# ---------------------------------------------------------------------------
# measures, systems, step functions


def measure_body(p: DiscreteMeasure) -> dict:
    return {
        "space": space_doc(p.space),
        "dim": p.dim,
        "ac": _arr(p.ac),
        "singular": [{"cell": int(c), "mass": _arr(m)} for c, m in zip(p.singular_cells, p.singular_mass)],
    }


def measure_from(d, where="measure") -> DiscreteMeasure:
    space = space_from(_get(d, "space", where), f"{where}.space")
    dim = _int(d, "dim", where)
    sing = []
    for i, s in enumerate(_get(d, "singular", where)):
        sing.append((_int(s, "cell", f"{where}.singular[{i}]"), _parse_arr(_get(s, "mass", f"{where}.singular[{i}]"), f"{where}.singular[{i}].mass")))
    try:
        return DiscreteMeasure.make(space, dim, _parse_arr(_get(d, "ac", where), f"{where}.ac"), sing)
    except ValueError as e:
        raise SchemaError(where, str(e)) from None


def gym_body(mu: DiscreteGYM) -> dict:
    return {
        "space": space_doc(mu.space),
        "dim": mu.dim,
        "atoms": [
            {"cell": int(c), "xi": _arr(x), "eta": num(e), "w": num(w)}
            for c, x, e, w in zip(mu.cells, mu.xi, mu.eta, mu.w)
        ],
    }


def gym_from(d, where="gym", space: SpaceModel | None = None) -> DiscreteGYM:
    space = space_from(_get(d, "space", where), f"{where}.space") if space is None else space
    dim = _int(d, "dim", where)
    atoms = _get(d, "atoms", where)
    if not isinstance(atoms, list):
        raise SchemaError(f"{where}.atoms", "expected a list")
    n = len(atoms)
    cells = np.zeros(n, np.intp)
    xi = np.zeros((n, dim))
    eta = np.zeros(n)
    w = np.zeros(n)
    for i, a in enumerate(atoms):
        at = f"{where}.atoms[{i}]"
        cells[i] = _int(a, "cell", at)
        x = _parse_arr(_get(a, "xi", at), f"{at}.xi")
        if x.shape != (dim,):
            raise SchemaError(f"{at}.xi", f"expected {dim} entries")
        xi[i] = x
        eta[i] = parse_num(_get(a, "eta", at), f"{at}.eta")
        w[i] = parse_num(_get(a, "w", at), f"{at}.w")
    if n and (cells.min() < 0 or cells.max() >= space.ncells):
        raise SchemaError(f"{where}.atoms", "cell index outside the space")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise SchemaError(f"{where}.atoms", "weights must be positive and finite")
    return DiscreteGYM(space, dim, cells, xi, eta, w)


def to_doc(obj) -> dict:
    """JSON-ready document for a supported object."""
    if isinstance(obj, HomFn):
        return {"schema": "homfn.v1", "root": homfn_doc(obj)}
    if isinstance(obj, DiscreteMeasure):
        return {"schema": "measure.v1", **measure_body(obj)}
    if isinstance(obj, DiscreteGYM):
        return {"schema": "gym.v1", **gym_body(obj)}
    if isinstance(obj, SystemGYM):
        return {
            "schema": "sgy.v1",
            "times": _arr(obj.times),
            "T": num(obj.grid.T),
            "dim": obj.dim,
            "master": {"schema": "gym.v1", **gym_body(obj.master)},
        }
    if isinstance(obj, StepFunction):
        doc = {"schema": "step.v1", "space": space_doc(obj.base), "edges": _arr(obj.edges), "values": _arr(obj.values)}
        if obj.carrier is not None:
            doc["carrier"] = [bool(c) for c in obj.carrier]
        return doc
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_doc(d, expect: str | None = None):
    """Inverse of :func:`to_doc`; ``expect`` restricts the accepted schema."""
    schema = _get(d, "schema", "document")
    if expect is not None and schema != expect:
        raise SchemaError("schema", f"expected {expect!r}, found {schema!r}")
    if schema == "homfn.v1":
        return homfn_from(_get(d, "root", "document"), "root")
    if schema == "measure.v1":
        return measure_from(d, "document")
    if schema == "gym.v1":
        return gym_from(d, "document")
    if schema == "sgy.v1":
        times = _parse_arr(_get(d, "times", "document"), "times")
        try:
            grid = TimeGrid(times, parse_num(_get(d, "T", "document"), "T"))
            master = gym_from(_get(d, "master", "document"), "master")
            return SystemGYM(grid, _int(d, "dim", "document"), master)
        except SchemaError:
            raise
        except ValueError as e:
            raise SchemaError("master", str(e)) from None
    if schema == "step.v1":
        space = space_from(_get(d, "space", "document"))
        if not isinstance(space, Interval):
            raise SchemaError("space", "step functions live on intervals")
        edges = _parse_arr(_get(d, "edges", "document"), "edges")
        values = _parse_arr(_get(d, "values", "document"), "values")
        try:
            mid = 0.5 * (edges[:-1] + edges[1:])
            return StepFunction(space, edges, values, space.cell_of(mid), d.get("carrier"))
        except ValueError as e:
            raise SchemaError("edges", str(e)) from None
    raise SchemaError("schema", f"unknown schema {schema!r}")


def dumps(obj) -> str:
    return json.dumps(to_doc(obj), indent=1, sort_keys=True) + "\n"


def loads(text: str, expect: str | None = None):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("document", f"invalid JSON ({e})") from None
    return from_doc(d, expect)


def save(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def load(path, expect: str | None = None):
    return loads(Path(path).read_text(), expect)
