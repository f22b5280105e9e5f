# scripts/test_game.py
import numpy as np
import pytest

from cgap_errors import ProgramSyntaxError, ValidationError
from cgap_model import Const
from conftest import PROGRAMS
from equilibria import enumerate_strong_equilibria
from game import (
    GenericGame, State, apt_simon_utility, compile_apt_simon, compile_generic_game, is_apt_simon_nash,
    is_nash_state, load_apt_simon, load_game, pure_nash_equilibria, state_for_profile, strategy_for_state,
    utilities, utility,
)
from grounder import ground


@pytest.fixture
def prisoner():
    return load_game((PROGRAMS / "prisoner.game.json").read_text(encoding="utf-8"))


@pytest.fixture
def triangle():
    return load_apt_simon((PROGRAMS / "triangle.asg.json").read_text(encoding="utf-8"))


def test_state_construction(asus_mac):
    s = State.uniform(asus_mac, 2)
    assert s.as_dict() == {"1": 2, "2": 2}
    assert s.with_action("1", 1)["1"] == 1
    assert s["1"] == 2
    assert State.from_mapping(asus_mac, {"2": 1, "1": 2}).key() == (2, 1)
    assert State.from_mapping(asus_mac, {"1": 2, "2": 2}) == s
    with pytest.raises(ValidationError):
        State.from_mapping(asus_mac, {"1": 2})
    with pytest.raises(ValidationError):
        State.from_mapping(asus_mac, {"1": 2, "2": 2, "3": 1})
    with pytest.raises(ValidationError):
        State.uniform(asus_mac, 3)
    with pytest.raises(ValidationError):
        State(asus_mac.vertices, (0, 1))


def test_utilities_of_a_state(asus_mac):
    s = State(asus_mac.vertices, (1, 1))
    model, u = utilities(asus_mac, s)
    assert u.ravel().tolist() == pytest.approx([0.3, 0.6, 0.3, 0.0])
    assert model["buyMac^D(2)"] == pytest.approx(0.3)
    assert utility(asus_mac, s, "2", 1) == pytest.approx(0.3)
    assert utility(asus_mac, s, "2", 2) == 0.0
    with pytest.raises(ValidationError):
        utility(asus_mac, s, "2", 3)


def test_a_strong_equilibrium_need_not_be_nash(two_eq_asus_first):
    asus, mac = State(two_eq_asus_first.vertices, (1,)), State(two_eq_asus_first.vertices, (2,))
    assert is_nash_state(two_eq_asus_first, asus)
    # choosing Asus would lift its utility from 0.3 to 0.6
    assert not is_nash_state(two_eq_asus_first, mac)
    assert not is_nash_state(two_eq_asus_first, mac, jobs=2)


def test_unique_equilibrium_of_the_chain_is_nash(asus_mac):
    assert is_nash_state(asus_mac, State.uniform(asus_mac, 2))
    assert not is_nash_state(asus_mac, State.uniform(asus_mac, 1))


def test_pure_nash_of_the_prisoner_table(prisoner):
    assert prisoner.players == ("A", "B")
    assert pure_nash_equilibria(prisoner) == [(0, 0)]
    assert prisoner.payoff(1, (1, 0)) == 0.0


def test_compiled_game_keeps_its_nash_equilibria(prisoner):
    p = compile_generic_game(prisoner, decimals=2)
    values = sorted({r.annotation.value for r in p.rules if r.conditions})
    assert values == pytest.approx([0.1, 0.23, 0.88, 1.0])
    assert all(r.annotation == Const(0.1) for r in p.rules if not r.conditions)

    gp = ground(p)
    found = enumerate_strong_equilibria(gp)
    assert [eq.choice for eq in found] == [(1, 1)]
    assert state_for_profile(gp, prisoner, (0, 0)).key() == (1, 1)
    assert is_nash_state(gp, state_for_profile(gp, prisoner, (0, 0)))


def test_exact_scaling_without_rounding(prisoner):
    p = compile_generic_game(prisoner, epsilon=0.2)
    top = max(r.annotation.value for r in p.rules)
    assert top == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        compile_generic_game(prisoner, epsilon=1.0)


def test_game_validation():
    with pytest.raises(ValidationError):
        GenericGame(("A", "B"), ("c", "d"), np.zeros((2, 2, 3)))
    with pytest.raises(ValidationError):
        GenericGame(("A",), ("c",), np.zeros((1, 1)))
    with pytest.raises(ProgramSyntaxError):
        load_game("{")
    with pytest.raises(ValidationError):
        load_game('{"players": ["A"]}')
    with pytest.raises(ValidationError):
        load_game("[]")


def test_threshold_game_payoffs(triangle):
    strategy = {"a": "x", "b": "x", "c": "y"}
    assert apt_simon_utility(triangle, strategy, "a") == pytest.approx(0.65)
    assert apt_simon_utility(triangle, strategy, "b") == pytest.approx(0.625)
    assert apt_simon_utility(triangle, {**strategy, "c": "x"}, "c") == 0.0


def test_threshold_game_equilibria_match(triangle):
    nash = {(a, b) for a in "xy" for b in "xy" if is_apt_simon_nash(triangle, {"a": a, "b": b, "c": "y"})}
    assert nash == {("x", "x"), ("y", "y")}

    gp = ground(compile_apt_simon(triangle))
    assert gp.vertices == ("a", "b", "c")
    found = enumerate_strong_equilibria(gp)
    assert [eq.choice for eq in found] == [(1, 1, 2), (2, 2, 2)]
    for eq in found:
        assert is_apt_simon_nash(triangle, strategy_for_state(triangle, eq.state(gp)))


def test_threshold_game_validation():
    with pytest.raises(ValidationError):
        load_apt_simon('{"vertices": ["a"], "products": ["x"], "availability": {"a": ["x"]}, '
                       '"thresholds": {"a": {"x": 0.5}}}')
    with pytest.raises(ValidationError, match="threshold"):
        load_apt_simon('{"vertices": ["a"], "products": ["x", "y"], "availability": {"a": ["x"]}, '
                       '"thresholds": {"a": {}}}')
    with pytest.raises(ValidationError, match="lacks"):
        load_apt_simon('{"vertices": ["a"]}')
