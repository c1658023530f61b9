"""Scenario-driven command line front end.

Usage::

    gymlab <command> --scenario <file> [--out <dir>]

A scenario is a ``scenario.v1`` JSON document naming the command, its input
files (relative to the scenario file), a battery choice and numeric
parameters.  Each run writes ``<command>.csv`` and ``verdict.json`` into the
output directory.  Exit codes: 0 pass, 1 fail or no-limit, 2 error.  The
``SEED`` environment variable overrides the scenario seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as gio
from .acceptance import run_suite, suite_csv
from .approx import (
    DensitySchedule,
    PeriodicStep,
    density_approximate,
    density_error_scale,
    density_report,
    helly_extract,
    lift_step,
    oscillation_path,
    semicontinuity_margin,
)
from .gym import (
    Battery,
    DiscreteGYM,
    YoungPart,
    barycentre,
    decompose,
    lift_young,
    norm_star,
    pair,
    pair_battery,
    recompose,
    standard_battery,
    validate,
    wstar_gap,
)
from .homfn import EuclidNorm, XiNorm
from .space import Interval
from .systems import SystemGYM, ac_modulus, derivative_estimate, variation

COMMANDS = (
    "validate", "pair", "norm", "decompose", "bary", "variation", "acmod",
    "derivative", "density", "helly", "semicont", "suite",
)
EXIT = {"pass": 0, "fail": 1, "no-limit": 1, "error": 2}


class ScenarioError(ValueError):
    """Malformed scenario; the message names the offending field."""


class Scenario:
    def __init__(self, doc: dict, root: Path):
        if not isinstance(doc, dict):
            raise ScenarioError("scenario: expected a JSON object")
        if doc.get("schema") != "scenario.v1":
            raise ScenarioError(f"schema: expected 'scenario.v1', found {doc.get('schema')!r}")
        self.doc = doc
        self.root = root
        self.command = doc.get("command")
        if self.command not in COMMANDS:
            raise ScenarioError(f"command: unknown command {self.command!r}")
        self.inputs = doc.get("inputs", {})
        self.params = doc.get("params", {})
        if not isinstance(self.inputs, dict):
            raise ScenarioError("inputs: expected an object")
        if not isinstance(self.params, dict):
            raise ScenarioError("params: expected an object")
        seed = os.environ.get("SEED", doc.get("seed", 0))
        try:
            self.seed = int(seed)
        except (TypeError, ValueError):
            raise ScenarioError(f"seed: not an integer: {seed!r}") from None

    @classmethod
    def load(cls, path) -> "Scenario":
        p = Path(path)
        try:
            doc = json.loads(p.read_text())
        except FileNotFoundError:
            raise ScenarioError(f"scenario: file not found: {p}") from None
        except json.JSONDecodeError as e:
            raise ScenarioError(f"scenario: invalid JSON ({e})") from None
        return cls(doc, p.parent)

    # -- accessors -------------------------------------------------------

    def path(self, key):
        if key not in self.inputs:
            raise ScenarioError(f"inputs.{key}: missing")
        p = self.root / self.inputs[key]
        if not p.exists():
            raise ScenarioError(f"inputs.{key}: file not found: {p}")
        return p

    def load_input(self, key, expect=None):
        try:
            return gio.load(self.path(key), expect)
        except gio.SchemaError as e:
            raise ScenarioError(f"inputs.{key}: {e}") from None

    def load_list(self, key, expect=None):
        items = self.inputs.get(key)
        if not isinstance(items, list) or not items:
            raise ScenarioError(f"inputs.{key}: expected a nonempty list of files")
        out = []
        for i, name in enumerate(items):
            p = self.root / name
            if not p.exists():
                raise ScenarioError(f"inputs.{key}[{i}]: file not found: {p}")
            try:
                out.append(gio.load(p, expect))
            except gio.SchemaError as e:
                raise ScenarioError(f"inputs.{key}[{i}]: {e}") from None
        return out

    def real(self, key, default=None, positive=False):
        if key not in self.params:
            if default is None:
                raise ScenarioError(f"params.{key}: missing")
            return float(default)
        try:
            v = gio.parse_num(self.params[key], f"params.{key}")
        except gio.SchemaError as e:
            raise ScenarioError(str(e)) from None
        if positive and not v > 0:
            raise ScenarioError(f"params.{key}: must be positive")
        return v

    def reals(self, key, default=None):
        vals = self.params.get(key, default)
        if vals is None:
            raise ScenarioError(f"params.{key}: missing")
        if not isinstance(vals, list):
            raise ScenarioError(f"params.{key}: expected a list")
        try:
            return [gio.parse_num(v, f"params.{key}[{i}]") for i, v in enumerate(vals)]
        except gio.SchemaError as e:
            raise ScenarioError(str(e)) from None

    def integer(self, key, default=None):
        v = self.params.get(key, default)
        if v is None or isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioError(f"params.{key}: expected an integer")
        return v

    def battery(self, space, dim) -> Battery:
        choice = self.doc.get("battery", "standard")
        if choice == "standard" or (isinstance(choice, dict) and choice.get("name") == "standard"):
            size = choice.get("size", 20) if isinstance(choice, dict) else 20
            return standard_battery(space, dim, int(size))
        if isinstance(choice, list) and choice:
            members = []
            for i, item in enumerate(choice):
                try:
                    if isinstance(item, str):
                        f = gio.load(self.root / item, "homfn.v1")
                    else:
                        f = gio.from_doc(item, "homfn.v1")
                except (gio.SchemaError, FileNotFoundError) as e:
                    raise ScenarioError(f"battery[{i}]: {e}") from None
                members.append(f)
            bat = Battery(tuple(members))
            if bat.dim != dim:
                raise ScenarioError(f"battery: members act on Xi^{bat.dim}, input lives on Xi^{dim}")
            return bat
        raise ScenarioError("battery: expected 'standard', {'name': 'standard', 'size': n} or a list of homfn.v1 entries")

    def function(self, key, dim, default=None):
        if key not in self.inputs:
            if default is None:
                raise ScenarioError(f"inputs.{key}: missing")
            return default
        f = self.load_input(key, "homfn.v1")
        if f.dim != dim:
            raise ScenarioError(f"inputs.{key}: function acts on Xi^{f.dim}, input lives on Xi^{dim}")
        return f


class Verdict:
    def __init__(self, command, status, payload, rows, header, provenance):
        self.command = command
        self.status = status
        self.payload = payload
        self.rows = rows
        self.header = header
        self.provenance = provenance

    def csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.header)
        wr.writerows(self.rows)
        return buf.getvalue()

    def json(self) -> str:
        doc = {"command": self.command, "status": self.status, "payload": self.payload, "provenance": self.provenance}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _n(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return gio.num(x)


def _r(x) -> str:
    return repr(float(x))


def _vec(v):
    return ";".join(repr(float(x)) for x in np.atleast_1d(v))


# ---------------------------------------------------------------------------
# commands (each returns status, payload, header, rows, extra provenance)


def cmd_validate(sc: Scenario):
    mu = sc.load_input("measure", "gym.v1")
    rep = validate(mu)
    lam = mu.space.weights
    rows = [[c, _r(lam[c]), _r(lam[c] + rep.cell_defects[c]), _r(rep.cell_defects[c])]
            for c in range(mu.space.ncells)]
    payload = {"projection_defect": _n(rep.projection_defect), "tolerance": _n(rep.tolerance),
               "negative_eta": rep.negative_eta, "noncanonical": rep.noncanonical}
    return ("pass" if rep.passed else "fail"), payload, ["cell", "lambda", "eta_mass", "defect"], rows, {"gym": "gym.v1"}


def cmd_pair(sc: Scenario):
    mu = sc.load_input("measure", "gym.v1")
    bat = sc.battery(mu.space, mu.dim)
    if "function" in sc.inputs:
        f = sc.function("function", mu.dim)
        bat = Battery((f,), ("function",))
    vals = pair_battery(bat, mu)
    rows = [[name, _r(v)] for name, v in zip(bat.names, vals)]
    return "pass", {"pairings": {n: _n(v) for n, v in zip(bat.names, vals)}}, ["member", "value"], rows, {"gym": "gym.v1"}


def cmd_norm(sc: Scenario):
    mu = sc.load_input("measure", "gym.v1")
    n1 = norm_star(mu)
    n2 = pair(EuclidNorm(mu.dim), mu)
    tol = sc.real("tol", 1e-12, positive=True)
    rows = [["norm_star", _r(n1)], ["pair_euclid", _r(n2)], ["difference", _r(abs(n1 - n2))]]
    status = "pass" if abs(n1 - n2) <= tol * max(1.0, n1) else "fail"
    return status, {"norm": _n(n1), "pair_euclid": _n(n2)}, ["quantity", "value"], rows, {"gym": "gym.v1"}


def cmd_decompose(sc: Scenario):
    mu = sc.load_input("measure", "gym.v1")
    young, var = decompose(mu)
    bat = sc.battery(mu.space, mu.dim)
    back = recompose(young, var)
    resid = float(np.max(np.abs(pair_battery(bat, back) - pair_battery(bat, mu))))
    tol = sc.real("tol", 1e-12, positive=True)
    rows = [["young", int(c), _vec(v), _r(m)] for c, v, m in zip(young.cells, young.values, young.mass)]
    rows += [["varifold", int(c), _vec(d), _r(m)] for c, d, m in zip(var.cells, var.directions, var.mass)]
    payload = {"young_atoms": int(young.cells.size), "varifold_atoms": int(var.cells.size),
               "varifold_mass": _n(var.total_mass()), "reconstruction_residual": _n(resid)}
    return ("pass" if resid <= tol else "fail"), payload, ["part", "cell", "value", "mass"], rows, {"gym": "gym.v1"}


def cmd_bary(sc: Scenario):
    mu = sc.load_input("measure", "gym.v1")
    b = barycentre(mu)
    rows = [["ac", c, _vec(b.ac[c])] for c in range(mu.space.ncells)]
    rows += [["singular", int(c), _vec(m)] for c, m in zip(b.singular_cells, b.singular_mass)]
    gio.save(b, sc.out / "barycentre.json")
    return "pass", {"total_variation": _n(b.total_variation())}, ["part", "cell", "value"], rows, {"measure": "measure.v1"}


def _system(sc):
    s = sc.load_input("system", "sgy.v1")
    return s


def cmd_variation(sc: Scenario):
    s = _system(sc)
    h = sc.function("h", s.dim, XiNorm(s.dim))
    a = sc.real("a", s.times[0])
    b = sc.real("b", s.times[-1])
    rep = variation(s, h, a, b)
    rows = [[i, _r(rep.partition[i]), _r(rep.partition[i + 1]), _r(c)] for i, c in enumerate(rep.contributions)]
    return "pass", {"variation": _n(rep.value)}, ["step", "t_start", "t_end", "contribution"], rows, {"system": "sgy.v1"}


def cmd_acmod(sc: Scenario):
    s = _system(sc)
    deltas = sc.reals("deltas")
    rows, out = [], {}
    for d in deltas:
        e = ac_modulus(s, d)
        rows.append([_r(d), _r(e)])
        out[_r(d)] = _n(e)
    return "pass", {"modulus": out}, ["delta", "epsilon"], rows, {"system": "sgy.v1"}


def _oracle(sc):
    choice = sc.params.get("oracle")
    if choice is None:
        s = _system(sc)
        return s.as_oracle(), s.space, {"system": "sgy.v1"}
    if not isinstance(choice, dict) or choice.get("kind") != "square_wave":
        raise ScenarioError("params.oracle: only {'kind': 'square_wave', ...} is supported")
    try:
        lo = gio.parse_num(choice.get("lo", "-1.0"), "params.oracle.lo")
        hi = gio.parse_num(choice.get("hi", "1.0"), "params.oracle.hi")
        center = gio.parse_num(choice.get("center", "1.0"), "params.oracle.center")
    except gio.SchemaError as e:
        raise ScenarioError(str(e)) from None
    cells, res = choice.get("cells", 2000), choice.get("res", 65536)
    if not isinstance(cells, int) or not isinstance(res, int):
        raise ScenarioError("params.oracle: cells and res must be integers")
    X = Interval(lo, hi, cells)
    o = oscillation_path(PeriodicStep.square_wave(), lambda t: t - center, X, res, (0.0, 2.0 * center))
    return o, X, {"oracle": "square_wave", "cells": cells, "res": res}


def cmd_derivative(sc: Scenario):
    oracle, space, prov = _oracle(sc)
    t0 = sc.real("t0")
    eps = sc.reals("eps")
    tol = sc.real("tol", 1e-6, positive=True)
    bat = sc.battery(space, oracle.dim)
    rep = derivative_estimate(oracle, t0, eps, bat, tol)
    rows = []
    for i, e in enumerate(rep.eps):
        for m, name in enumerate(rep.names):
            rows.append([_r(e), name, _r(rep.left[i, m]), _r(rep.right[i, m])])
    payload = {"derivative": rep.status, "residuals": {n: _n(r) for n, r in zip(rep.names, rep.residuals)},
               "witness": {k: (v if isinstance(v, str) else _n(v)) for k, v in rep.witness.items()}}
    status = "pass" if rep.converged else "no-limit"
    target = sc.params.get("young_target")
    if rep.converged and target is not None:
        try:
            vals = [gio.parse_num(v, "params.young_target.values") for v in target["values"]]
            probs = [gio.parse_num(p, "params.young_target.probs") for p in target["probs"]]
        except (KeyError, TypeError, gio.SchemaError) as e:
            raise ScenarioError(f"params.young_target: {e}") from None
        gap = wstar_gap(rep.estimate, lift_young(YoungPart.uniform(space, vals, probs)), bat)
        gap_tol = sc.real("gap_tol", 1e-2, positive=True)
        payload["target_gap"] = _n(gap)
        if gap > gap_tol:
            status = "fail"
    if rep.estimate is not None:
        payload["estimate_pairings"] = {n: _n(v) for n, v in zip(bat.names, pair_battery(bat, rep.estimate))}
    prov["schedule"] = [_n(e) for e in rep.eps]
    return status, payload, ["eps", "member", "left", "right"], rows, prov


def cmd_density(sc: Scenario):
    mu = sc.load_input("measure", "gym.v1")
    levels = sc.params.get("levels", [2, 3, 4, 5, 6, 7, 8])
    if not isinstance(levels, list) or not all(isinstance(x, int) for x in levels):
        raise ScenarioError("params.levels: expected a list of integers")
    mode = sc.params.get("mode", "singular")
    sched = DensitySchedule.dyadic(levels)
    bat = sc.battery(mu.space, mu.dim)
    K = density_error_scale(mu)
    # default rates follow from the carrier lengths (gap rate assumes 1-Lipschitz members, true of the standard battery)
    gap_factor = sc.real("gap_factor", 2.0 * K)
    norm_factor = sc.real("norm_factor", K)
    slack = 1e-12 * max(1.0, norm_star(mu))
    rows, ok, u = [], True, None
    for i, (lvl, s) in enumerate(zip(levels, sched.sigmas)):
        u = density_approximate(mu, i, sched, mode)
        rep = density_report(mu, u, s)
        gap = wstar_gap(lift_step(u), mu, bat)
        ok &= rep.bound_holds and rep.concentration_holds
        ok &= gap <= gap_factor * s + slack and abs(rep.norm_integral - rep.target_norm) <= norm_factor * s + slack
        rows.append([lvl, _r(s), _r(gap), _r(rep.norm_integral), _r(rep.target_norm), _r(rep.bound),
                     _r(rep.min_concentration), _r(rep.carrier_length)])
    gio.save(u, sc.out / "density_step.json")
    header = ["level", "sigma", "battery_gap", "norm_integral", "target_norm", "bound", "min_concentration", "carrier_length"]
    return ("pass" if ok else "fail"), {"levels": len(levels), "mode": mode, "error_scale": _n(K)}, header, rows, {"gym": "gym.v1", "step": "step.v1"}


def _D(sc, default):
    return tuple(sc.reals("D", [gio.num(t) for t in default]))


def cmd_helly(sc: Scenario):
    seq = sc.load_list("sequence", "sgy.v1")
    bat = sc.battery(seq[0].space, seq[0].dim)
    D = _D(sc, seq[0].times)
    tol = sc.real("tol", 1e-6, positive=True)
    bounds = sc.reals("bounds")
    if len(bounds) != 2:
        raise ScenarioError("params.bounds: expected [C, C_star]")
    rep = helly_extract(seq, bat, D, tol, tuple(bounds))
    rows = [[n, _r(r), _r(v)] for n, r, v in zip(rep.functionals, rep.residuals, rep.limits)]
    if rep.limit is not None:
        gio.save(rep.limit, sc.out / "limit.json")
    payload = {"indices": list(rep.indices), "theta": [_n(t) for t in rep.theta], "limit_assembled": rep.limit is not None,
               "notes": list(rep.notes)}
    if rep.limit is not None:
        payload["limit_variation"] = _n(rep.limit_variation)
        payload["limit_max_norm"] = _n(rep.limit_max_norm)
    if not rep.converged:
        status = "no-limit"
    elif rep.limit is not None and not rep.bounds_hold:
        status = "fail"
    else:
        status = "pass"
    return status, payload, ["functional", "residual", "limit"], rows, {"system": "sgy.v1"}


def cmd_semicont(sc: Scenario):
    seq = sc.load_list("sequence", "sgy.v1")
    limit = sc.load_input("limit", "sgy.v1")
    h = sc.function("h", limit.dim, XiNorm(limit.dim))
    D = _D(sc, limit.times)
    bat = sc.battery(limit.space, limit.dim)
    tol = sc.real("tol", 1e-6, positive=True)
    margin = semicontinuity_margin(seq, limit, h, D, bat, tol)
    rows = [[k, _r(variation(s, h, check=False).value)] for k, s in enumerate(seq)]
    rows.append(["limit", _r(variation(limit, h, check=False).value)])
    status = "pass" if margin >= -1e-9 else "fail"
    return status, {"margin": _n(margin)}, ["element", "variation"], rows, {"system": "sgy.v1"}


def cmd_suite(sc: Scenario):
    scale = sc.real("scale", 1.0)
    if scale < 0:
        raise ScenarioError("params.scale: must be nonnegative")
    only = sc.params.get("criteria")
    results = run_suite(sc.seed, scale, only)
    text = suite_csv(results)
    rows = list(csv.reader(io.StringIO(text)))
    header, rows = rows[0], rows[1:]
    statuses = [r.status for r in results]
    status = "error" if "error" in statuses else ("fail" if "fail" in statuses else "pass")
    payload = {r.cid: {"status": r.status, "failing": [[lbl, _n(v), _n(b), op] for lbl, v, b, op in r.failing()],
                       "error": r.error} for r in results}
    return status, payload, header, rows, {"scale": _n(scale)}


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def run_scenario(path, out=None, command=None) -> Verdict:
    """Execute a scenario and write ``<command>.csv`` and ``verdict.json``.

    Raises
    ------
    ScenarioError
        On malformed scenarios (the message names the field).
    """
    sc = Scenario.load(path)
    if command is not None and command != sc.command:
        raise ScenarioError(f"command: scenario declares {sc.command!r} but {command!r} was requested")
    target = out if out is not None else sc.doc.get("output")
    sc.out = Path(target) if target is not None else Path(path).parent / "out"
    if target is not None and out is None:
        sc.out = sc.root / target
    sc.out.mkdir(parents=True, exist_ok=True)
    status, payload, header, rows, prov = HANDLERS[sc.command](sc)
    provenance = {"scenario": "scenario.v1", "seed": sc.seed, **prov}
    v = Verdict(sc.command, status, payload, rows, header, provenance)
    (sc.out / f"{sc.command}.csv").write_text(v.csv())
    (sc.out / "verdict.json").write_text(v.json())
    return v


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gymlab", description="Generalized Young measure experiments driven by scenario files.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="scenario.v1 JSON file")
    parser.add_argument("--out", help="output directory (default: scenario 'output' field or <scenario dir>/out)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        v = run_scenario(args.scenario, args.out, args.command)
    except ScenarioError as e:
        print(f"gymlab: scenario error: {e}", file=sys.stderr)
        return 2
    except (ValueError, IndexError, TypeError) as e:
        print(f"gymlab: error: {e}", file=sys.stderr)
        return 2
    print(f"{v.command}: {v.status}")
    return EXIT[v.status]


if __name__ == "__main__":
    sys.exit(main())
