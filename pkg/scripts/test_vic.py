# scripts/test_vic.py
import numpy as np
import pytest

from cgap_errors import NotVicError, ValidationError
from conftest import load_program
from game import State
from grounder import ground
from semantics import least_model, with_bridges
from vic import (
    classify, dependency_graph, downstream, extremal_models, find_se_vic2, restrict, split_program, union,
)


def test_spread_program_is_vic2(asus_mac):
    verdict = classify(load_program("asus_mac.cgap"))
    assert verdict.is_vic and verdict.is_vic2
    assert verdict.describe() == "VIC with 2 options"
    # the ground program classifies the same way
    assert classify(asus_mac).is_vic2


def test_cross_option_dependency_is_not_vic():
    verdict = classify(load_program("mutual_dependency.cgap"))
    assert not verdict.is_vic
    assert verdict.condition == 2
    assert verdict.path == ("buyMac^D", "buyAsus^U")
    assert verdict.describe() == "not VIC: path buyMac^D -> buyAsus^U"
    assert verdict.as_dict()["path"] == ["buyMac^D", "buyAsus^U"]


def test_decision_heading_a_rule_is_not_vic():
    verdict = classify(load_program("forced_decisions.cgap"))
    assert (verdict.is_vic, verdict.condition, verdict.predicate) == (False, 1, "buyMac^D")


def test_three_options_are_vic_but_not_vic2(cyclic):
    verdict = classify(cyclic)
    assert verdict.is_vic and verdict.m == 3
    assert not verdict.is_vic2
    with pytest.raises(NotVicError) as err:
        find_se_vic2(cyclic)
    assert err.value.classification.m == 3


def test_dependency_graph_sets(asus_mac):
    dep = dependency_graph(load_program("asus_mac.cgap"))
    assert dep.decisions == ("buyMac^D", "buyAsus^D")
    assert dep.pred_sets[0] == {"buyMac^D", "buyMac^U", "friend"}
    assert dep.pred_sets[1] == {"buyAsus^D", "buyAsus^U", "friend"}
    assert dep.option_of("friend") == [0, 1]
    assert dependency_graph(asus_mac) is dependency_graph(asus_mac)


def test_flip_search_from_each_default(asus_mac):
    trace = []
    state, model = find_se_vic2(asus_mac, 1, trace=trace)
    assert state.as_dict() == {"1": 2, "2": 2}
    assert trace == [["1"], ["2"]]
    assert model["buyAsus^D(2)"] == pytest.approx(0.6)

    trace = []
    state, _ = find_se_vic2(asus_mac, 2, trace=trace)
    assert state.key() == (2, 2)
    assert trace == []


def test_flip_search_finds_both_equilibria(two_eq):
    low, low_model = find_se_vic2(two_eq, 1)
    high, high_model = find_se_vic2(two_eq, 2)
    assert (low.key(), high.key()) == ((1,), (2,))
    assert low_model["buyAsus^U(1)"] == pytest.approx(0.3)
    assert high_model["buyAsus^U(1)"] == pytest.approx(0.6)


def test_flip_search_rejects_bad_inputs(asus_mac):
    with pytest.raises(ValidationError):
        find_se_vic2(asus_mac, 3)
    with pytest.raises(NotVicError) as err:
        find_se_vic2(load_program("mutual_dependency.cgap"))
    assert err.value.classification.condition == 2


def test_election_flips_one_voter_per_round():
    gp = ground(load_program("labour_tory.cgap"))
    assert classify(gp).is_vic2
    state, model = find_se_vic2(gp, 1)
    assert state.as_dict() == {"tom": 1, "john": 1}
    assert model["voteLabour^D(tom)"] == pytest.approx(0.8)

    trace = []
    state, _ = find_se_vic2(gp, 2, trace=trace)
    assert state.as_dict() == {"tom": 1, "john": 1}
    assert trace == [["john"], ["tom"]]


def test_dropped_bridges_reach_only_their_own_option(asus_mac):
    mac_d1 = asus_mac.index.id_of("buyMac^D(1)")
    reached = downstream(asus_mac, [mac_d1])
    names = {asus_mac.index.text(a) for a in np.flatnonzero(reached)}
    assert names == {"buyMac^D(1)", "buyMac^U(2)", "buyMac^D(2)"}


@pytest.mark.parametrize("name", ["asus_mac.cgap", "two_equilibria.cgap", "labour_tory.cgap"])
@pytest.mark.parametrize("default", [1, 2])
def test_warm_started_rounds_end_at_the_cold_fixpoint(name, default):
    gp = ground(load_program(name))
    state, model = find_se_vic2(gp, default)
    cold = least_model(with_bridges(gp, np.array(state.key())))
    assert model.allclose(cold, 1e-7)


def test_split_parts_rebuild_the_whole_model(asus_mac):
    state = State(asus_mac.vertices, (2, 2))
    mac_part, asus_part = split_program(asus_mac, state)
    assert mac_part.bridges == []
    assert len(asus_part.bridges) == 2

    whole = least_model(union(mac_part, asus_part))
    _, se = find_se_vic2(asus_mac, 2)
    assert whole.allclose(se)

    mac_only = least_model(mac_part)
    dep = dependency_graph(asus_mac)
    assert restrict(mac_only, dep.pred_sets[0]).tolist() == restrict(se, dep.pred_sets[0]).tolist()
    assert mac_only["buyAsus^U(1)"] == 0.0


def test_union_of_different_programs_is_rejected(asus_mac, two_eq):
    a = split_program(asus_mac, State(asus_mac.vertices, (1, 1)))[0]
    b = split_program(two_eq, State(two_eq.vertices, (1,)))[0]
    with pytest.raises(ValidationError):
        union(a, b)


def test_extremal_models(two_eq):
    ext = extremal_models(two_eq)
    assert (ext.s12.key(), ext.s21.key()) == ((1,), (2,))
    assert ext.max_model["buyMac^D(1)"] == pytest.approx(0.3)
    assert ext.min_model["buyAsus^D(1)"] == pytest.approx(0.6)
    # neither option bridged
    assert ext.mixed_low["buyMac^D(1)"] == 0.0
    assert ext.mixed_low["buyAsus^U(1)"] == pytest.approx(0.3)
    # both options bridged
    assert ext.mixed_high["buyMac^D(1)"] == pytest.approx(0.3)
    assert ext.mixed_high["buyAsus^D(1)"] == pytest.approx(0.6)
    assert extremal_models(two_eq) is ext
