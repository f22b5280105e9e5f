# scripts/test_lp_writer.py
import os
import stat

import pytest

from cgap_errors import ProgramSyntaxError, SolverError
from lp_writer import CONSTANT_VAR, export_lp, parse_lp, solve_external
from milp import build_ilc
from milp_solver import INFEASIBLE, OPTIMAL, ConstraintSystem


def _small():
    cs = ConstraintSystem()
    cs.add_variable("x", binary=True)
    cs.add_variable("y")
    cs.add_variable("k", 0.0, 0.0)
    cs.add_constraint({"x": 1, "y": 1}, ">=", 1)
    cs.add_constraint({"x": 1, "y": -0.5}, "<=", 0.75)
    cs.set_objective({"x": 2, "y": 1}, "min", constant=0.25)
    return cs


def _fake_solver(tmp_path, solution_text):
    script = tmp_path / "fake-cbc"
    script.write_text("#!/bin/sh\ncat > \"$4\" <<'EOF'\n" + solution_text + "EOF\n", encoding="utf-8")
    script.chmod(script.stat().st_mode | stat.S_IXUSR)
    return str(script)


def test_export_layout():
    text = export_lp(_small())
    lines = text.splitlines()
    assert lines[1] == "Minimize"
    assert lines[2] == f" obj: 2 x + y + 0.25 {CONSTANT_VAR}"
    assert " c1: x + y >= 1" in lines
    assert " c2: x - 0.5 y <= 0.75" in lines
    assert " k = 0" in lines
    assert f" {CONSTANT_VAR} = 1" in lines
    assert lines[-2:] == [" x", "End"]


def test_parse_reads_back_what_export_writes():
    cs = _small()
    again = parse_lp(export_lp(cs))
    assert again.sense == "min"
    assert again.objective == cs.objective
    assert again.objective_constant == pytest.approx(0.25)
    assert {n: (v.lb, v.ub, v.binary) for n, v in again.variables.items()} == {
        n: (v.lb, v.ub, v.binary) for n, v in cs.variables.items()
    }
    assert [(c.name, c.coeffs, c.sense, c.rhs) for c in again.constraints] == [
        (c.name, c.coeffs, c.sense, c.rhs) for c in cs.constraints
    ]


def test_encoding_survives_export(unrolling_demo):
    cs = build_ilc(unrolling_demo, 2)
    again = parse_lp(export_lp(cs))
    assert set(again.variables) == set(cs.variables)
    assert len(again.constraints) == len(cs.constraints)


def test_long_rows_wrap():
    cs = ConstraintSystem()
    names = [cs.add_variable(f"variable_with_a_long_name_{k}") for k in range(40)]
    cs.add_constraint(dict.fromkeys(names, 1.0), "<=", 3)
    text = export_lp(cs)
    assert any(line.startswith("   +") for line in text.splitlines())
    assert parse_lp(text).constraints[0].coeffs == dict.fromkeys(names, 1.0)


@pytest.mark.parametrize("text", [
    "Minimize\n obj: x\nSubject To\n c1: x +\n",
    " c1: x >= 1\nEnd\n",
    "Minimize\n obj: x\nGeneral\n x\nEnd\n",
    "Minimize\n obj: x\nBounds\n x y z\nEnd\n",
])
def test_parse_errors(text):
    with pytest.raises(ProgramSyntaxError):
        parse_lp(text)


def test_missing_solver_binary():
    with pytest.raises(SolverError, match="not found"):
        solve_external(_small(), "min", command="no-such-solver-binary")


@pytest.mark.skipif(os.name != "posix", reason="needs a POSIX shell")
def test_external_solution_is_read_back(tmp_path):
    command = _fake_solver(tmp_path, "Optimal - objective value 1.25\n      0 x  0  0\n      1 y  1  0\n")
    sol = solve_external(_small(), "min", command=command)
    assert sol.status == OPTIMAL
    assert sol["y"] == 1.0
    assert sol.objective == pytest.approx(1.25)


@pytest.mark.skipif(os.name != "posix", reason="needs a POSIX shell")
def test_external_infeasible(tmp_path):
    command = _fake_solver(tmp_path, "Infeasible - objective value 0\n")
    assert solve_external(_small(), "min", command=command).status == INFEASIBLE
