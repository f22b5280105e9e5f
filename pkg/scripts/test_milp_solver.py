# scripts/test_milp_solver.py
import pytest

import cgap_settings as settings
from cgap_errors import ValidationError
from cgap_text import parse_program
from grounder import ground
from milp import build_ilc
from milp_solver import CAP_EXCEEDED, INFEASIBLE, OPTIMAL, ConstraintSystem, solve


def _knapsack():
    cs = ConstraintSystem()
    cs.add_variable("x", binary=True)
    cs.add_variable("y")
    cs.add_constraint({"x": 1, "y": 1}, ">=", 1)
    cs.set_objective({"x": 2, "y": 1}, "min")
    return cs


def test_plain_system_goes_to_the_milp_backend():
    cs = _knapsack()
    low = solve(cs, "min")
    assert low.status == OPTIMAL
    assert low.objective == pytest.approx(1.0)
    assert low["x"] == 0.0
    high = solve(cs, "max")
    assert high.objective == pytest.approx(3.0)
    assert solve(cs).feasible


def test_infeasible_system():
    cs = _knapsack()
    cs.add_constraint({"x": 1}, ">=", 2)
    assert solve(cs, "min").status == INFEASIBLE


def test_system_validation():
    cs = _knapsack()
    with pytest.raises(ValidationError):
        cs.add_constraint({"z": 1}, ">=", 0)
    with pytest.raises(ValidationError):
        cs.add_constraint({"x": 0}, ">=", 0)
    with pytest.raises(ValidationError):
        cs.add_constraint({"x": 1}, "!=", 0)
    with pytest.raises(ValidationError):
        cs.add_variable("x", 0.0, 2.0)
    with pytest.raises(ValidationError):
        cs.add_variable("w", 1.0, 0.0)
    with pytest.raises(ValidationError):
        cs.set_objective({"z": 1}, "min")
    with pytest.raises(ValidationError):
        solve(cs, "best")


def test_copy_keeps_the_original_untouched():
    cs = _knapsack()
    other = cs.copy()
    other.add_constraint({"y": 1}, "<=", 0.5, "extra")
    assert len(cs.constraints) == 1
    assert [c.tag for c in other.tagged("extra")] == ["extra"]


def test_evaluate_and_violated():
    cs = _knapsack()
    cs.set_objective({"x": 2, "y": 1}, "min", constant=0.5)
    assert cs.evaluate({"x": 1, "y": 0}) == pytest.approx(2.5)
    assert [c.name for c in cs.violated({"x": 0, "y": 0})] == ["c1"]
    assert cs.violated({"x": 0, "y": 1}) == []


def test_propagation_satisfies_the_encoding(unrolling_demo):
    cs = build_ilc(unrolling_demo, 2)
    u = cs.unrolling
    chosen = u.propagate((1,))
    assert chosen["x_2_a1_1"] == pytest.approx(0.6)
    assert chosen["x_1_a1_1"] == pytest.approx(0.3)
    assert cs.violated(chosen) == []
    assert u.choice_of(chosen) == (1,)
    assert u.model_of(chosen)["b1(1)"] == pytest.approx(0.6)

    # the second option decides nothing while a1 sits at 0.3: only the strong rows break
    idle = u.propagate((2,))
    assert {c.tag for c in cs.violated(idle)} == {"type4"}


def test_propagation_bridges_into_decisions_with_rules():
    gp = ground(parse_program("buyMac^D(tom):0.5.\nbuyMac^U(tom):1.\n"
                              "buyMac^D(X),buyAsus^D(X) <~ buyMac^U(X),buyAsus^U(X).\n"))
    cs = build_ilc(gp, 1)
    u = cs.unrolling
    assert [(row, i) for row, i, _, _ in u.bridges] == [(0, 1)]

    mac = u.propagate((1,))
    assert mac["x_1_buyMac_D_tom"] == 1.0
    assert mac["q_1_vc0_1"] == 1.0 and mac["u_1_vc0_1"] == 1.0
    assert cs.violated(mac) == []

    # the unchosen Mac decision keeps its own 0.5
    asus = u.propagate((2,))
    assert asus["x_1_buyMac_D_tom"] == 0.5 and asus["q_1_vc0_1"] == 0.0
    assert "type3" in {c.tag for c in cs.violated(asus)}


def test_branch_cap(asus_mac):
    cs = build_ilc(asus_mac, 2)
    settings.apply_overrides({"branch_cap": 3})
    assert solve(cs).status == CAP_EXCEEDED
