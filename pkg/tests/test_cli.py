import csv
import io
import json

import numpy as np
import pytest

from gymlab.approx import PeriodicStep, StepFunction, lift_steps, scaled_profile
from gymlab.cli import COMMANDS, EXIT, main, run_scenario
from gymlab.generators import random_gym, random_system
from gymlab.gym import DiscreteGYM, lift_function
from gymlab.homfn import XiNorm
from gymlab.io import load, save
from gymlab.space import Interval
from gymlab.systems import SystemGYM, TimeGrid


def scenario(tmp_path, command, inputs=None, params=None, **extra):
    doc = {"schema": "scenario.v1", "command": command, "inputs": inputs or {}, "params": params or {}, **extra}
    p = tmp_path / f"{command}.scenario.json"
    p.write_text(json.dumps(doc))
    return p


def run(tmp_path, command, **kw):
    p = scenario(tmp_path, command, **kw)
    out = tmp_path / "out"
    code = main([command, "--scenario", str(p), "--out", str(out)])
    return code, out


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text())))


@pytest.fixture
def measure(tmp_path):
    mu = random_gym(np.random.default_rng(0), Interval(0.0, 1.0, 3), 1)
    save(mu, tmp_path / "mu.json")
    return mu


def osc_system(X, grid, k):
    base = scaled_profile(PeriodicStep.square_wave(), X, 1.0 / k)
    return SystemGYM(TimeGrid(grid, 1.0), 1, lift_steps([base.scaled(t) for t in grid]))


def test_exit_codes():
    assert EXIT == {"pass": 0, "fail": 1, "no-limit": 1, "error": 2}
    assert set(COMMANDS) >= {"validate", "pair", "norm", "decompose", "bary", "variation", "acmod", "derivative",
                             "density", "helly", "semicont", "suite"}


class TestMeasureCommands:
    def test_validate_pass(self, tmp_path, measure):
        code, out = run(tmp_path, "validate", inputs={"measure": "mu.json"})
        assert code == 0
        rows = read_csv(out / "validate.csv")
        assert rows[0] == ["cell", "lambda", "eta_mass", "defect"]
        assert len(rows) == 4
        v = json.loads((out / "verdict.json").read_text())
        assert v["status"] == "pass" and v["command"] == "validate"

    def test_validate_defect_table(self, tmp_path):
        X = Interval(0.0, 1.0, 2)
        bad = DiscreteGYM.from_weighted(X, 1, np.array([0, 1]), np.array([[1.0], [0.0]]), np.array([1.0, 1.0]),
                                        np.array([0.5, 0.25]))
        save(bad, tmp_path / "bad.json")
        code, out = run(tmp_path, "validate", inputs={"measure": "bad.json"})
        assert code == 1
        rows = read_csv(out / "validate.csv")
        defects = [float(r[3]) for r in rows[1:]]
        assert defects == pytest.approx([0.0, -0.25], abs=1e-15)

    def test_pair_battery_and_function(self, tmp_path, measure):
        code, out = run(tmp_path, "pair", inputs={"measure": "mu.json"}, battery={"name": "standard", "size": 5})
        assert code == 0
        assert len(read_csv(out / "pair.csv")) == 6
        save(XiNorm(1), tmp_path / "f.json")
        code, out = run(tmp_path, "pair", inputs={"measure": "mu.json", "function": "f.json"})
        rows = read_csv(out / "pair.csv")
        assert code == 0 and rows[1][0] == "function"

    def test_pair_mismatched_battery(self, tmp_path, measure, capsys):
        f3 = {"schema": "homfn.v1", "root": {"kind": "xi_norm", "dim": 3}}
        code, _ = run(tmp_path, "pair", inputs={"measure": "mu.json"}, battery=[f3])
        assert code == 2
        assert "battery" in capsys.readouterr().err

    def test_norm(self, tmp_path, measure):
        code, out = run(tmp_path, "norm", inputs={"measure": "mu.json"})
        assert code == 0
        rows = dict(read_csv(out / "norm.csv")[1:])
        assert float(rows["difference"]) <= 1e-12

    def test_decompose(self, tmp_path, measure):
        code, out = run(tmp_path, "decompose", inputs={"measure": "mu.json"})
        assert code == 0
        parts = {r[0] for r in read_csv(out / "decompose.csv")[1:]}
        assert "young" in parts

    def test_bary(self, tmp_path):
        X = Interval(0.0, 1.0, 2)
        save(lift_function(X, np.array([[2.0], [-1.0]])), tmp_path / "mu.json")
        code, out = run(tmp_path, "bary", inputs={"measure": "mu.json"})
        assert code == 0
        b = load(out / "barycentre.json", "measure.v1")
        np.testing.assert_allclose(b.ac[:, 0], [2.0, -1.0], atol=1e-15)

    def test_density(self, tmp_path, measure):
        code, out = run(tmp_path, "density", inputs={"measure": "mu.json"}, params={"levels": [2, 3, 4]})
        assert code == 0
        assert len(read_csv(out / "density.csv")) == 4
        assert load(out / "density_step.json", "step.v1").base.same_as(measure.space)


class TestSystemCommands:
    @pytest.fixture
    def system(self, tmp_path):
        s = random_system(np.random.default_rng(1), Interval(0.0, 1.0, 2), 1, 4)
        save(s, tmp_path / "s.json")
        return s

    def test_variation(self, tmp_path, system):
        code, out = run(tmp_path, "variation", inputs={"system": "s.json"})
        assert code == 0
        rows = read_csv(out / "variation.csv")
        assert rows[0] == ["step", "t_start", "t_end", "contribution"] and len(rows) == 4

    def test_acmod(self, tmp_path, system):
        code, out = run(tmp_path, "acmod", inputs={"system": "s.json"}, params={"deltas": ["0.1", "1"]})
        assert code == 0
        eps = [float(r[1]) for r in read_csv(out / "acmod.csv")[1:]]
        assert eps[0] <= eps[1]

    def test_derivative_system(self, tmp_path, system):
        code, out = run(tmp_path, "derivative", inputs={"system": "s.json"},
                        params={"t0": "0.5", "eps": ["0.1", "0.05", "0.025"]})
        assert code in (0, 1)
        v = json.loads((out / "verdict.json").read_text())
        assert v["payload"]["derivative"] in ("converged", "one-sided-left", "one-sided-right", "no-limit")

    def test_derivative_square_wave(self, tmp_path):
        params = {"oracle": {"kind": "square_wave", "cells": 2000, "res": 65536},
                  "t0": "1", "eps": [repr(2.0**-k) for k in range(6, 11)], "tol": "1e-2",
                  "young_target": {"values": ["1", "-1"], "probs": ["0.5", "0.5"]}, "gap_tol": "1e-2"}
        code, out = run(tmp_path, "derivative", params=params)
        v = json.loads((out / "verdict.json").read_text())
        assert code == 0, v
        assert float(v["payload"]["target_gap"]) <= 1e-2
        assert v["provenance"]["oracle"] == "square_wave"

    def test_helly_and_semicont(self, tmp_path):
        X = Interval(-1.0, 1.0, 4)
        grid = [0.0, 0.5, 1.0]
        names = []
        for k in (2, 6, 24, 120):
            save(osc_system(X, grid, k), tmp_path / f"s{k}.json")
            names.append(f"s{k}.json")
        code, out = run(tmp_path, "helly", inputs={"sequence": names}, params={"bounds": ["2.5", "2.5"]})
        assert code == 0
        assert (out / "limit.json").exists()
        save(load(out / "limit.json"), tmp_path / "lim.json")
        code, out = run(tmp_path, "semicont", inputs={"sequence": names, "limit": "lim.json"})
        assert code == 0
        assert float(json.loads((out / "verdict.json").read_text())["payload"]["margin"]) >= -1e-9

    def test_helly_no_limit(self, tmp_path):
        X = Interval(-1.0, 1.0, 2)
        grid = [0.0, 1.0]
        names = []
        # the pairing with xi against a growing constant slope never settles
        for k in range(4):
            u = [np.full((2, 1), t * (k + 1)) for t in grid]
            s = SystemGYM(TimeGrid(grid, 1.0), 1, lift_steps([StepFunction.from_cells(X, v) for v in u]))
            save(s, tmp_path / f"g{k}.json")
            names.append(f"g{k}.json")
        code, out = run(tmp_path, "helly", inputs={"sequence": names}, params={"bounds": ["100", "100"], "tol": "1e-3"})
        assert code == 1
        assert json.loads((out / "verdict.json").read_text())["status"] == "no-limit"


class TestSuite:
    def test_deterministic(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SEED", "17")
        p = scenario(tmp_path, "suite", params={"criteria": ["A1", "A2"]})
        outs = []
        for name in ("a", "b"):
            assert main(["suite", "--scenario", str(p), "--out", str(tmp_path / name)]) == 0
            outs.append(((tmp_path / name / "suite.csv").read_bytes(), (tmp_path / name / "verdict.json").read_bytes()))
        assert outs[0] == outs[1]
        assert json.loads(outs[0][1])["provenance"]["seed"] == 17

    def test_zero_scale_fails(self, tmp_path):
        code, out = run(tmp_path, "suite", params={"criteria": ["A1"], "scale": "0"})
        assert code == 1
        v = json.loads((out / "verdict.json").read_text())
        assert v["payload"]["A1"]["status"] == "fail" and v["payload"]["A1"]["failing"]


class TestErrors:
    def test_missing_input(self, tmp_path, capsys):
        code, _ = run(tmp_path, "validate", inputs={})
        assert code == 2
        assert "inputs.measure" in capsys.readouterr().err

    def test_bad_param(self, tmp_path, measure, capsys):
        code, _ = run(tmp_path, "norm", inputs={"measure": "mu.json"}, params={"tol": "abc"})
        assert code == 2
        assert "params.tol" in capsys.readouterr().err

    def test_bad_schema_field(self, tmp_path, capsys):
        d = json.loads(_saved(tmp_path).read_text())
        d["atoms"][0]["w"] = "NaN"
        (tmp_path / "nan.json").write_text(json.dumps(d))
        code, _ = run(tmp_path, "validate", inputs={"measure": "nan.json"})
        assert code == 2
        assert "atoms[0].w" in capsys.readouterr().err

    def test_command_mismatch(self, tmp_path, measure, capsys):
        p = scenario(tmp_path, "norm", inputs={"measure": "mu.json"})
        assert main(["validate", "--scenario", str(p)]) == 2
        assert "command" in capsys.readouterr().err

    def test_unknown_command_and_schema(self, tmp_path):
        assert main(["explode", "--scenario", "x.json"]) == 2
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"schema": "scenario.v0", "command": "norm"}))
        assert main(["norm", "--scenario", str(p)]) == 2

    def test_default_output_dir(self, tmp_path, measure):
        p = scenario(tmp_path, "norm", inputs={"measure": "mu.json"})
        assert main(["norm", "--scenario", str(p)]) == 0
        assert (tmp_path / "out" / "norm.csv").exists()
        p = scenario(tmp_path, "norm", inputs={"measure": "mu.json"}, output="results")
        v = run_scenario(p)
        assert v.status == "pass" and (tmp_path / "results" / "verdict.json").exists()


def _saved(tmp_path):
    mu = random_gym(np.random.default_rng(0), Interval(0.0, 1.0, 2), 1)
    save(mu, tmp_path / "plain.json")
    return tmp_path / "plain.json"
