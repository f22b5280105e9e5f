# scripts/test_equilibria.py
import pytest

from cgap_errors import ResourceCapError
from cgap_text import parse_program
from conftest import PROGRAMS, load_program
from equilibria import distinct_models, enumerate_coherent, enumerate_strong_equilibria
from grounder import ground


def _cyclic_without(fact):
    text = (PROGRAMS / "cyclic_three.cgap").read_text(encoding="utf-8")
    assert fact in text
    return ground(parse_program(text.replace(fact + "\n", "")))


def test_every_choice_of_the_chain_is_coherent(asus_mac):
    coherent = enumerate_coherent(asus_mac)
    assert [eq.choice for eq in coherent] == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_unique_strong_equilibrium(asus_mac):
    found = enumerate_strong_equilibria(asus_mac)
    assert len(found) == 1
    eq = found[0]
    assert eq.choice == (2, 2)
    assert eq.state(asus_mac).as_dict() == {"1": 2, "2": 2}
    assert eq.model["buyAsus^D(2)"] == pytest.approx(0.6)
    assert eq.model["buyMac^D(1)"] == 0.0
    assert eq.model["buyMac^U(1)"] == pytest.approx(0.3)


def test_two_equilibria_in_choice_order(two_eq):
    first, second = enumerate_strong_equilibria(two_eq)
    assert (first.choice, second.choice) == ((1,), (2,))
    assert first.model["buyMac^D(1)"] == pytest.approx(0.3)
    assert first.model["buyAsus^U(1)"] == pytest.approx(0.3)
    assert first.model["buyAsus^D(1)"] == 0.0
    assert second.model["buyAsus^D(1)"] == pytest.approx(0.6)
    assert second.model["buyMac^D(1)"] == 0.0


def test_coherent_models_that_are_not_strong(unrolling_demo):
    assert [eq.choice for eq in enumerate_coherent(unrolling_demo)] == [(1,), (2,)]
    strong = enumerate_strong_equilibria(unrolling_demo)
    assert [eq.choice for eq in strong] == [(1,)]
    assert strong[0].model["a1(1)"] == pytest.approx(0.6)


@pytest.mark.parametrize("name", ["forced_decisions.cgap", "forced_mixed.cgap", "mutual_dependency.cgap"])
def test_programs_without_equilibria(name):
    assert enumerate_strong_equilibria(load_program(name)) == []


def test_forced_decisions_have_no_coherent_model():
    assert enumerate_coherent(load_program("forced_decisions.cgap")) == []


def test_cycle_has_no_equilibrium_until_a_fact_goes(cyclic):
    assert enumerate_strong_equilibria(cyclic) == []
    for fact in ("g^U(1):0.4.", "r^U(2):0.4.", "b^U(3):0.4."):
        found = enumerate_strong_equilibria(_cyclic_without(fact))
        assert len(found) == 3
        # the vertex that lost its fact is indifferent; the model is the same
        assert len(distinct_models(found)) == 1


def test_enumeration_cap(asus_mac):
    with pytest.raises(ResourceCapError):
        enumerate_coherent(asus_mac, cap=3)
    with pytest.raises(ResourceCapError):
        enumerate_strong_equilibria(asus_mac, cap=3)


def test_limit_and_workers(asus_mac):
    assert [eq.choice for eq in enumerate_coherent(asus_mac, limit=2)] == [(1, 1), (1, 2)]
    threaded = enumerate_coherent(asus_mac, jobs=2)
    assert [eq.choice for eq in threaded] == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_enumeration_grounds_programs(asus_mac):
    found = enumerate_strong_equilibria(load_program("asus_mac.cgap"))
    assert found[0].model.to_dict() == enumerate_strong_equilibria(asus_mac)[0].model.to_dict()
