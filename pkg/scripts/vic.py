# scripts/vic.py
"""
Vertex-independent-choice analysis.

The dependency graph links body predicates to head predicates and each
utility predicate to its decision predicate. A program is VIC when no decision
predicate heads a GAP rule and no decision predicate reaches a utility
predicate of another option. For two options the flip search below finds a
strong equilibrium with one fixpoint per round.
"""
import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterator, List, Optional, Tuple, Union

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix

import cgap_settings as settings
from cgap_errors import NoEquilibriumError, NotVicError, ValidationError
from cgap_model import Interpretation, Program, VCRule
from game import State, aligned_actions
from grounder import GroundProgram, as_ground
from semantics import GroundGap, is_strong_equilibrium, least_model, with_bridges

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DependencyGraph:
    graph: nx.DiGraph
    decisions: Tuple[str, ...]
    utilities: Tuple[str, ...]
    pred_sets: Tuple[FrozenSet[str], ...]

    def option_of(self, predicate: str) -> List[int]:
        """0-based options whose predicate set holds the predicate."""
        return [k for k, preds in enumerate(self.pred_sets) if predicate in preds]


def _rule_predicates(p: Union[Program, GroundProgram]) -> Iterator[Tuple[str, List[str]]]:
    if isinstance(p, GroundProgram):
        atom = p.index.atom
        for rule in p.rules:
            body = [atom(a).predicate for a, _ in rule.body] + [atom(a).predicate for a, _ in rule.conditions]
            yield atom(rule.head).predicate, body
        return
    for rule in p.rules:
        yield rule.head.predicate, [a.predicate for a, _ in rule.body] + [a.predicate for a, _ in rule.conditions]
    for t in p.templates:
        yield t.head.predicate, [t.edge.predicate, t.body.predicate]


def _vc_rule(p: Union[Program, GroundProgram]) -> VCRule:
    return p.vc_rule if isinstance(p, GroundProgram) else p.vc


def dependency_graph(p: Union[Program, GroundProgram]) -> DependencyGraph:
    """
    Predicate dependency graph with one reverse-reachability set per option.

    Edge predicates are nodes too, so a rule conditioned on an edge fact lands
    in every option set that reaches it.
    """
    if isinstance(p, GroundProgram) and "dependency_graph" in p.cache:
        return p.cache["dependency_graph"]
    vc = _vc_rule(p)
    g = nx.DiGraph()
    g.add_nodes_from(vc.heads + vc.bodies)
    for head, body in _rule_predicates(p):
        g.add_node(head)
        g.add_edges_from((b, head) for b in body)
    g.add_edges_from(zip(vc.bodies, vc.heads))
    pred_sets = tuple(frozenset(nx.ancestors(g, b) | {b}) for b in vc.heads)
    out = DependencyGraph(g, vc.heads, vc.bodies, pred_sets)
    if isinstance(p, GroundProgram):
        p.cache["dependency_graph"] = out
    return out


@dataclass(frozen=True)
class VicClassification:
    """Verdict plus witness: condition 1 names a decision predicate heading a
    GAP rule, condition 2 a path from one option's decision to another's utility."""

    is_vic: bool
    m: int
    condition: int = 0
    predicate: Optional[str] = None
    path: Tuple[str, ...] = ()

    @property
    def is_vic2(self) -> bool:
        return self.is_vic and self.m == 2

    def describe(self) -> str:
        if self.is_vic:
            return f"VIC with {self.m} options"
        if self.condition == 1:
            return f"not VIC: decision predicate {self.predicate} heads a GAP rule"
        return "not VIC: path " + " -> ".join(self.path)

    def as_dict(self) -> dict:
        return {"vic": self.is_vic, "m": self.m, "condition": self.condition,
                "predicate": self.predicate, "path": list(self.path)}


def classify(p: Union[Program, GroundProgram]) -> VicClassification:
    dep = dependency_graph(p)
    m = len(dep.decisions)
    heads = {head for head, _ in _rule_predicates(p)}
    for b in dep.decisions:
        if b in heads:
            return VicClassification(False, m, 1, b)
    for j, b in enumerate(dep.decisions):
        for i, a in enumerate(dep.utilities):
            if i != j and nx.has_path(dep.graph, b, a):
                return VicClassification(False, m, 2, b, tuple(nx.shortest_path(dep.graph, b, a)))
    return VicClassification(True, m)


def _require_vic(gp: GroundProgram, two: bool = False) -> VicClassification:
    verdict = gp.cache.get("vic_classification")
    if verdict is None:
        verdict = gp.cache["vic_classification"] = classify(gp.source if gp.source is not None else gp)
    if not verdict.is_vic or (two and verdict.m != 2):
        raise NotVicError(verdict.describe() if not verdict.is_vic else
                          f"program has {verdict.m} options; this needs exactly 2", verdict)
    return verdict


def _part_masks(gp: GroundProgram) -> List[np.ndarray]:
    masks = gp.cache.get("vic_masks")
    if masks is None:
        dep = dependency_graph(gp)
        rules = list(_rule_predicates(gp))
        masks = [np.array([head in preds and all(b in preds for b in body) for head, body in rules], dtype=bool)
                 for preds in dep.pred_sets]
        gp.cache["vic_masks"] = masks
    return masks


def split_program(p, s: State, sn=None) -> List[GroundGap]:
    """
    Split the induced program of a state into one independent GAP per option.

    Part i keeps the rules all of whose predicates lie in the i-th predicate
    set and the bridges of vertices choosing option i. Rules over predicates
    outside every set are dropped, so the union of the parts' minimal models
    matches the whole one on the atoms of those sets.
    """
    gp = as_ground(p, sn)
    _require_vic(gp)
    actions = aligned_actions(gp, s)
    whole = with_bridges(gp, actions)
    parts = []
    for option, mask in enumerate(_part_masks(gp)):
        keep = actions == option + 1
        parts.append(GroundGap(gp, whole.bridge_src[keep], whole.bridge_dst[keep], mask))
    return parts


def union(a: GroundGap, b: GroundGap) -> GroundGap:
    """GAP holding the rules and bridges of both parts."""
    if a.program is not b.program:
        raise ValidationError("cannot join parts of different ground programs")
    n = len(a.program.rules)
    mask_a = np.ones(n, dtype=bool) if a.rule_mask is None else a.rule_mask
    mask_b = np.ones(n, dtype=bool) if b.rule_mask is None else b.rule_mask
    return GroundGap(a.program, np.concatenate([a.bridge_src, b.bridge_src]),
                     np.concatenate([a.bridge_dst, b.bridge_dst]), mask_a | mask_b)


def _atom_graph(gp: GroundProgram) -> csr_matrix:
    """Sparse atom dependency matrix: entry (head, body) for every rule and (decision, utility) per VC pair."""
    graph = gp.cache.get("atom_graph")
    if graph is None:
        heads, sources = [], []
        for rule in gp.rules:
            for atom, _ in list(rule.body) + list(rule.conditions):
                heads.append(rule.head)
                sources.append(atom)
        heads.extend(gp.decision_ids.ravel().tolist())
        sources.extend(gp.utility_ids.ravel().tolist())
        n = len(gp.index)
        graph = gp.cache["atom_graph"] = csr_matrix(
            (np.ones(len(heads)), (heads, sources)), shape=(n, n))
    return graph


def downstream(gp: GroundProgram, atoms: np.ndarray) -> np.ndarray:
    """Mask of the atoms whose value can depend on any of the given atoms, these included."""
    graph = _atom_graph(gp)
    reached = np.zeros(len(gp.index), dtype=bool)
    reached[np.asarray(atoms, dtype=np.int64)] = True
    frontier = reached.copy()
    while frontier.any():
        frontier = (graph @ frontier.astype(np.float64) > 0) & ~reached
        reached |= frontier
    return reached


def find_se_vic2(p, default_action: int = 1, sn=None,
                 trace: Optional[List[List[str]]] = None) -> Tuple[State, Interpretation]:
    """
    Strong equilibrium of a two-option VIC program by one-directional flips.

    Args:
        p: Program or ground program
        default_action: Option every vertex starts from (1 or 2)
        sn: Network used when p still needs grounding
        trace: When given, receives the vertices flipped in each round

    Returns:
        (state, minimal model of its induced program)

    Raises:
        NotVicError: the program is not VIC with two options
    """
    if default_action not in (1, 2):
        raise ValidationError(f"default action must be 1 or 2, got {default_action}")
    gp = as_ground(p, sn)
    _require_vic(gp, two=True)
    other = 3 - default_action
    actions = np.full(len(gp.vc), default_action, dtype=np.int64)
    vertices = np.array(gp.vertices, dtype=object)

    model = least_model(with_bridges(gp, actions))
    for round_ in range(len(gp.vc) + 1):
        u = model.values[gp.utility_ids]
        flip = (actions == default_action) & (u[:, default_action - 1] < u[:, other - 1] - settings.EPS_EQ)
        if not flip.any():
            break
        actions[flip] = other
        # atoms fed by the dropped bridges restart from 0; everything else can only grow
        start = model.values.copy()
        start[downstream(gp, gp.decision_ids[flip, default_action - 1])] = 0.0
        model = least_model(with_bridges(gp, actions), start=start)
        if trace is not None:
            trace.append([str(v) for v in vertices[flip]])
        log.debug("round %d: %d vertices move to option %d", round_ + 1, int(flip.sum()), other)

    if not is_strong_equilibrium(gp, model):
        raise NoEquilibriumError("flip search stopped at a state that is not a strong equilibrium")
    return State(gp.vertices, actions), model


@dataclass(frozen=True, eq=False)
class ExtremalModels:
    """
    Equilibria reached from each default option and the two mixed models.

    max_model is the model of s12 (largest on the first option's predicates),
    min_model the model of s21.
    """

    graph: DependencyGraph
    s12: State
    s21: State
    max_model: Interpretation
    min_model: Interpretation
    mixed_low: Interpretation
    mixed_high: Interpretation


def extremal_models(p, sn=None) -> ExtremalModels:
    gp = as_ground(p, sn)
    cached = gp.cache.get("extremal_models")
    if cached is not None:
        return cached
    s12, m12 = find_se_vic2(gp, 1)
    s21, m21 = find_se_vic2(gp, 2)
    first12, second12 = split_program(gp, s12)
    first21, second21 = split_program(gp, s21)
    out = ExtremalModels(
        dependency_graph(gp), s12, s21, m12, m21,
        mixed_low=least_model(union(first21, second12)),
        mixed_high=least_model(union(first12, second21)),
    )
    gp.cache["extremal_models"] = out
    return out


def restrict(i: Interpretation, predicates: FrozenSet[str]) -> np.ndarray:
    """Values of the atoms over the given predicates, in index order."""
    return i.values[i.index.ids_of_predicates(sorted(predicates))]
