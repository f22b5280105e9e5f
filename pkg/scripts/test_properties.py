# scripts/test_properties.py
"""Seeded randomized checks: small random programs and games, cross-checked between solvers."""
import itertools

import numpy as np
import pytest

from cgap_errors import CgapError, NotAModelError
from cgap_model import (
    Apply, Atom, AtomIndex, AVar, Const, FunctionRegistry, GapRule, Interpretation, Program, VCRule,
    avg_fn, gated_max_fn, lattice_join, lattice_leq, lattice_meet, linear_fn, max_fn, social_fn,
)
from cgap_text import parse_program, serialize_program
from conftest import PROGRAMS, load_program
from equilibria import enumerate_coherent, enumerate_strong_equilibria
from game import (
    AptSimonGame, GenericGame, State, compile_apt_simon, compile_generic_game, is_apt_simon_nash,
    pure_nash_equilibria, state_for_profile, strategy_for_state, utilities,
)
from grounder import ground
from milp import build_ilc, compute_t_hat, enumerate_se_milp
from semantics import (
    is_coherent_model, is_model, is_strong_equilibrium, least_model, tp_step, with_bridges,
)
from vic import classify, extremal_models, find_se_vic2, restrict

UTILITY = ("p^U", "q^U")
DECISION = ("p^D", "q^D")
GRID = [k / 10 for k in range(1, 10)]
TOL = 1e-7


def _grid(rng) -> float:
    return GRID[int(rng.integers(len(GRID)))]


def random_program(rng, n_vertices: int, *, cross: float = 0.0, decision_facts: float = 0.0) -> Program:
    """
    Two-option program over v1..vn built from constants, copies, max and a gated max.

    cross is the chance that a rule reads the other option's decisions; decision_facts
    the chance of one fact on a decision atom.
    """
    vertices = [f"v{k}" for k in range(1, n_vertices + 1)]
    rules = []
    for v in vertices:
        first = int(rng.integers(2))
        rules.append(GapRule(Atom(UTILITY[first], (v,)), Const(_grid(rng))))
        if rng.random() < 0.6:
            rules.append(GapRule(Atom(UTILITY[1 - first], (v,)), Const(_grid(rng))))

    for _ in range(int(rng.integers(1, 2 * n_vertices + 1))):
        target = int(rng.integers(2))
        source = 1 - target if rng.random() < cross else target
        head = Atom(UTILITY[target], (vertices[int(rng.integers(n_vertices))],))
        a, b = (Atom(DECISION[source], (vertices[int(k)],)) for k in rng.choice(n_vertices, 2, replace=False))
        kind = int(rng.integers(4))
        if kind == 0:
            rules.append(GapRule(head, AVar("M"), ((a, "M"),)))
        elif kind == 1:
            rules.append(GapRule(head, Const(_grid(rng)), (), ((a, _grid(rng)),)))
        else:
            fn = "max" if kind == 2 else "g"
            rules.append(GapRule(head, Apply(fn, (AVar("M1"), AVar("M2"))), ((a, "M1"), (b, "M2"))))

    if rng.random() < decision_facts:
        option = int(rng.integers(2))
        rules.append(GapRule(Atom(DECISION[option], (vertices[int(rng.integers(n_vertices))],)), Const(_grid(rng))))
    return Program(tuple(rules), VCRule(DECISION, UTILITY), (), FunctionRegistry([gated_max_fn("g", 0.5)]))


def _mixed(seed: int):
    rng = np.random.default_rng(seed)
    return ground(random_program(rng, int(rng.integers(2, 4)), cross=0.3, decision_facts=0.1))


def _vic(seed: int):
    rng = np.random.default_rng(1000 + seed)
    p = random_program(rng, int(rng.integers(2, 5)))
    assert classify(p).is_vic2
    return ground(p)


def _choices(gp):
    return itertools.product(range(1, gp.size + 1), repeat=len(gp.vc))


def _below(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(a <= b + TOL))


def _own_choice(gp, eq) -> bool:
    """No decision atom outside the choice is positive; otherwise another choice reaches the same model."""
    decisions = eq.model.values[gp.decision_ids].copy()
    decisions[np.arange(len(gp.vc)), np.array(eq.choice) - 1] = 0.0
    return not np.any(decisions > 0)


@pytest.mark.parametrize("seed", range(100))
def test_brute_force_and_milp_agree(seed):
    gp = _mixed(seed)
    brute = enumerate_strong_equilibria(gp)
    by_cuts = enumerate_se_milp(gp)
    assert sorted(sol.choice for sol in by_cuts) == [eq.choice for eq in brute if _own_choice(gp, eq)]
    for eq in brute:
        assert any(sol.model.allclose(eq.model, 1e-6) for sol in by_cuts)


@pytest.mark.parametrize("seed", range(100))
def test_flip_search_lands_inside_the_extremal_models(seed):
    gp = _vic(seed)
    brute = enumerate_strong_equilibria(gp)
    found = {eq.choice for eq in brute}
    for default in (1, 2):
        state, model = find_se_vic2(gp, default)
        assert state.key() in found
        assert is_strong_equilibrium(gp, model)

    ext = extremal_models(gp)
    first, second = ext.graph.pred_sets
    for eq in brute:
        assert _below(restrict(ext.min_model, first), restrict(eq.model, first))
        assert _below(restrict(eq.model, first), restrict(ext.max_model, first))
        assert _below(restrict(ext.max_model, second), restrict(eq.model, second))
        assert _below(restrict(eq.model, second), restrict(ext.min_model, second))


@pytest.mark.parametrize("seed", range(50))
def test_unrolled_propagation_reaches_the_coherent_models(seed):
    gp = _mixed(seed)
    cs = build_ilc(gp, compute_t_hat(gp), strong=False)
    for eq in filter(lambda eq: _own_choice(gp, eq), enumerate_coherent(gp)):
        values = cs.unrolling.propagate(eq.choice)
        assert cs.violated(values) == []
        assert cs.unrolling.model_of(values).allclose(eq.model, TOL)
        assert cs.unrolling.choice_of(values) == eq.choice


def _interpretations(rng, index, count):
    return [Interpretation(index, rng.random(len(index))) for _ in range(count)]


def test_lattice_laws():
    rng = np.random.default_rng(7)
    index = AtomIndex(Atom("a", (f"v{k}",)) for k in range(6))
    for _ in range(100):
        a, b, c = _interpretations(rng, index, 3)
        assert lattice_meet(a, b) == lattice_meet(b, a)
        assert lattice_join(a, b) == lattice_join(b, a)
        assert lattice_meet(lattice_meet(a, b), c) == lattice_meet(a, lattice_meet(b, c))
        assert lattice_join(lattice_join(a, b), c) == lattice_join(a, lattice_join(b, c))
        assert lattice_meet(a, a) == a and lattice_join(a, a) == a
        assert lattice_meet(a, lattice_join(a, b)) == a
        assert lattice_join(a, lattice_meet(a, b)) == a
        assert lattice_leq(a, b) == (lattice_meet(a, b) == a)
        assert lattice_leq(a, lattice_join(a, b))
        assert lattice_leq(lattice_meet(a, b), b)


def test_annotation_functions_are_monotone():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        theta = float(rng.uniform(0.05, 0.5))
        fns = [
            linear_fn("lin", rng.dirichlet(np.ones(k)) * rng.uniform(0, 1)),
            max_fn(),
            avg_fn(),
            gated_max_fn("gate", float(rng.uniform(0, 1.5))),
            social_fn("agree", theta, rng.uniform(theta, 1.0, size=k)),
        ]
        low = rng.random(k)
        high = low + rng.random(k) * (1 - low)
        for fn in fns:
            assert fn(low) <= fn(high) + 1e-12, fn.name


@pytest.mark.parametrize("seed", range(50))
def test_one_step_is_monotone(seed):
    gp = _mixed(seed)
    rng = np.random.default_rng(seed)
    choice = rng.integers(1, gp.size + 1, size=len(gp.vc))
    for gap in (gp, with_bridges(gp, choice)):
        for _ in range(20):
            low = rng.random(len(gp.index))
            high = low + rng.random(len(gp.index)) * (1 - low)
            t_low = tp_step(gap, Interpretation(gp.index, low))
            t_high = tp_step(gap, Interpretation(gp.index, high))
            assert lattice_leq(t_low, t_high)


@pytest.mark.parametrize("seed", range(50))
def test_strong_equilibria_are_coherent_models(seed):
    gp = _mixed(seed)
    for choice in _choices(gp):
        model = least_model(with_bridges(gp, np.array(choice)))
        strong = is_strong_equilibrium(gp, model)
        if not is_model(gp, model):
            assert not strong
            with pytest.raises(NotAModelError):
                is_coherent_model(gp, model)
        elif strong:
            assert is_coherent_model(gp, model)


@pytest.mark.parametrize("seed", range(30))
def test_a_single_flip_moves_utilities_one_way(seed):
    gp = _vic(seed)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        before = State(gp.vertices, rng.integers(1, 3, size=len(gp.vc)))
        v = gp.vertices[int(rng.integers(len(gp.vc)))]
        left = before[v]
        after = before.with_action(v, 3 - left)
        _, u_before = utilities(gp, before)
        _, u_after = utilities(gp, after)
        # the option v leaves can only lose support, the one it joins only gain
        assert _below(u_after[:, left - 1], u_before[:, left - 1])
        assert _below(u_before[:, 2 - left], u_after[:, 2 - left])


def _two_by_two(rng) -> GenericGame:
    return GenericGame(("A", "B"), ("x", "y"), rng.integers(0, 4, size=(2, 2, 2)).astype(float))


def _se_profiles(g: GenericGame):
    gp = ground(compile_generic_game(g))
    return gp, {eq.choice for eq in enumerate_strong_equilibria(gp)}


def test_compiled_games_keep_their_pure_nash_equilibria():
    rng = np.random.default_rng(3)
    for _ in range(200):
        g = _two_by_two(rng)
        gp, found = _se_profiles(g)
        assert found == {state_for_profile(gp, g, profile).key() for profile in pure_nash_equilibria(g)}
        rescaled = GenericGame(g.players, g.actions, g.utilities * rng.uniform(0.5, 5) + rng.uniform(-3, 3))
        assert _se_profiles(rescaled)[1] == found


def _threshold_game(rng) -> AptSimonGame:
    vertices = ("a", "b", "c", "d")[:int(rng.integers(2, 5))]
    edges = {(i, v): round(float(rng.uniform(0.5, 1.0)), 2)
             for i in vertices for v in vertices if i != v and rng.random() < 0.5}
    availability = {}
    for v in vertices:
        availability[v] = ("x", "y") if rng.random() < 0.7 else (("x",), ("y",))[int(rng.integers(2))]
    thresholds = {(v, q): round(float(rng.uniform(0.05, 0.5)), 2) for v in vertices for q in availability[v]}
    return AptSimonGame(vertices, edges, ("x", "y"), availability, thresholds)


def test_threshold_games_with_heavy_edges():
    rng = np.random.default_rng(5)
    for _ in range(100):
        g = _threshold_game(rng)
        p = compile_apt_simon(g)
        assert classify(p).is_vic2
        gp = ground(p)
        found = enumerate_strong_equilibria(gp)
        nash = {state.key() for state in (State(gp.vertices, c) for c in _choices(gp))
                if is_apt_simon_nash(g, strategy_for_state(g, state))}
        assert {eq.choice for eq in found} == nash
        for default in (1, 2):
            state, _ = find_se_vic2(gp, default)
            assert is_apt_simon_nash(g, strategy_for_state(g, state))


FUZZ_ALPHABET = list("abpqXYM^_():,.<-~%#{}|[]*>= \n0123456789\"\\") + ["<-", "<~", "#function", "max", "if sum >="]


def test_parser_only_raises_its_own_errors():
    rng = np.random.default_rng(13)
    seed_text = (PROGRAMS / "asus_mac.cgap").read_text(encoding="utf-8")
    for _ in range(500):
        pieces = rng.choice(FUZZ_ALPHABET, size=int(rng.integers(1, 60)))
        samples = ["".join(pieces), rng.bytes(int(rng.integers(1, 80)))]
        text = list(seed_text)
        for _ in range(int(rng.integers(1, 6))):
            at = int(rng.integers(len(text)))
            text[at] = FUZZ_ALPHABET[int(rng.integers(len(FUZZ_ALPHABET)))] if rng.random() < 0.5 else ""
        samples.append("".join(text))
        for sample in samples:
            try:
                parse_program(sample)
            except CgapError:
                pass


def test_serialized_programs_parse_back():
    corpus = [load_program(path.name) for path in sorted(PROGRAMS.glob("*.cgap"))]
    rng = np.random.default_rng(17)
    corpus += [random_program(rng, int(rng.integers(2, 6)), cross=0.3, decision_facts=0.3) for _ in range(20)]
    assert len(corpus) >= 20
    for p in corpus:
        assert parse_program(serialize_program(p)) == p
