# scripts/test_milp.py
import pytest

import cgap_settings as settings
from cgap_errors import ResourceCapError, ValidationError
from cgap_text import parse_program
from conftest import PROGRAMS, load_program
from equilibria import enumerate_strong_equilibria
from game import compile_apt_simon, load_apt_simon
from grounder import ground
from milp import atom_names, build_ilc, compute_t_hat, enumerate_se_milp, no_good_cut, oracle, sanitize
from milp_solver import solve


def test_names_are_lp_safe(asus_mac):
    assert sanitize("buyAsus^D(1)") == "buyAsus_D_1"
    assert sanitize('p("New York")') == "p_New_York"
    names = atom_names(asus_mac)
    assert "buyAsus_D_1" in names
    assert len(set(names)) == len(names)


def test_constraint_families(asus_mac):
    cs = build_ilc(asus_mac, 2)
    assert cs.unrolling.y_names == ["y_1_1", "y_1_2", "y_2_1", "y_2_2"]
    # one strong row per vertex and option
    assert len(cs.tagged("type4")) == 4
    # four coupling rows per vertex, option and iteration, plus one sum per vertex
    assert len(cs.tagged("type3")) == 2 * 2 * 2 * 4 + 2
    assert cs.tagged("type1") and cs.tagged("type2")
    assert not build_ilc(asus_mac, 2, strong=False).tagged("type4")
    with pytest.raises(ValidationError):
        build_ilc(asus_mac, 0)


def test_t_hat_counts_the_rounds_a_choice_needs(unrolling_demo):
    assert not oracle(unrolling_demo, 1)
    assert oracle(unrolling_demo, 2)
    assert compute_t_hat(unrolling_demo) == 2
    assert compute_t_hat(unrolling_demo, delta=3) == 2
    with pytest.raises(ValidationError):
        compute_t_hat(unrolling_demo, delta=0)


def test_facts_only_program_settles_at_once():
    p = parse_program("a1(1):0.3.\nb1(X),b2(X) <~ a1(X),a2(X).\n")
    assert compute_t_hat(p) == 1


def test_spread_needs_two_rounds(asus_mac):
    assert compute_t_hat(asus_mac) == 2


def test_cuts_enumerate_every_equilibrium(two_eq):
    found = enumerate_se_milp(two_eq)
    assert [sol.choice for sol in found] == [(1,), (2,)]
    assert found[1].model["buyAsus^D(1)"] == pytest.approx(0.6)
    assert len(enumerate_se_milp(two_eq, limit=1)) == 1


def test_no_good_cut_excludes_the_solution(two_eq):
    cs = build_ilc(two_eq, 2)
    sol = solve(cs)
    cut = no_good_cut(cs, sol)
    assert cut.tag == "cut"
    assert not cut.holds(sol.assignment)
    assert solve(cs).choice == (2,)


def test_unrolled_demo_finds_the_single_equilibrium(unrolling_demo):
    found = enumerate_se_milp(unrolling_demo, t_hat=2)
    assert len(found) == 1
    assert found[0].choice == (1,)
    assert found[0].model["a1(1)"] == pytest.approx(0.6)
    assert found[0].model["b1(1)"] == pytest.approx(0.6)


@pytest.mark.parametrize("name", [
    "asus_mac.cgap", "two_equilibria.cgap", "unrolling_demo.cgap", "cyclic_three.cgap",
    "mutual_dependency.cgap", "labour_tory.cgap", "forced_decisions.cgap", "forced_mixed.cgap",
])
def test_agrees_with_brute_force(name):
    gp = ground(load_program(name))
    brute = enumerate_strong_equilibria(gp)
    by_cuts = enumerate_se_milp(gp)
    assert sorted(sol.choice for sol in by_cuts) == [eq.choice for eq in brute]
    for sol in by_cuts:
        match = next(eq for eq in brute if eq.choice == sol.choice)
        assert sol.model.allclose(match.model, 1e-6)


def test_social_functions_have_no_encoding():
    game = load_apt_simon((PROGRAMS / "triangle.asg.json").read_text(encoding="utf-8"))
    with pytest.raises(ValidationError, match="linear encoding"):
        build_ilc(compile_apt_simon(game), 2)


def test_branch_cap_stops_enumeration(asus_mac):
    settings.apply_overrides({"branch_cap": 2})
    with pytest.raises(ResourceCapError):
        enumerate_se_milp(asus_mac, t_hat=2)


VC = "buyMac^D(X),buyAsus^D(X) <~ buyMac^U(X),buyAsus^U(X).\n"


@pytest.mark.parametrize("facts", [
    "buyMac^D(tom):0.5.\nbuyMac^U(tom):1.\n",
    # the utility arrives one round after the decision's own fact
    "buyMac^D(tom):0.5.\nc(tom):1.\nbuyMac^U(tom):1 <- c(tom):1.\n",
])
def test_decision_heading_its_own_rules_still_takes_the_bridge(facts):
    gp = ground(parse_program(facts + VC))
    brute = enumerate_strong_equilibria(gp)
    by_cuts = enumerate_se_milp(gp)
    assert [eq.choice for eq in brute] == [(1,)]
    assert [sol.choice for sol in by_cuts] == [(1,)]
    assert by_cuts[0].model.allclose(brute[0].model, 1e-6)
    assert by_cuts[0].model["buyMac^D(tom)"] == pytest.approx(1.0)


def test_decision_rules_above_the_utility_block_the_choice():
    gp = ground(parse_program("buyMac^D(tom):0.8.\nbuyMac^U(tom):0.5.\n" + VC))
    assert enumerate_strong_equilibria(gp) == []
    assert enumerate_se_milp(gp) == []


@pytest.mark.parametrize("value", [0.5 - 5e-5, 0.5 - 1e-8, 0.5 - 1e-10, 0.5])
def test_condition_band_matches_the_fixpoint(value):
    # a1 sits just under, or at, the condition constant of the rule
    p = parse_program(f"a1(1):{value!r}.\na1(1):0.9 <- a1(1):0.5.\nb1(X),b2(X) <~ a1(X),a2(X).\n")
    gp = ground(p)
    brute = enumerate_strong_equilibria(gp)
    by_cuts = enumerate_se_milp(gp)
    assert [sol.choice for sol in by_cuts] == [eq.choice for eq in brute] == [(1,)]
    assert by_cuts[0].model.allclose(brute[0].model, 1e-6)


def test_external_band_widens_the_condition_gap(unrolling_demo):
    # b1(1):0.3 gates the second a1 rule
    def gap_rows(cs, eps):
        return [c for c in cs.tagged("type2") if c.rhs == pytest.approx(eps - 0.3, abs=1e-12)]

    tight = build_ilc(unrolling_demo, 2)
    wide = build_ilc(unrolling_demo, 2, band=settings.EPS_MILP)
    assert len(gap_rows(tight, settings.EPS_EQ)) == 2 and not gap_rows(tight, settings.EPS_MILP)
    assert len(gap_rows(wide, settings.EPS_MILP)) == 2
