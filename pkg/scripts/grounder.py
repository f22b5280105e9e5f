# scripts/grounder.py
"""
Grounding: instantiate rule variables over the vertex domain, expand neighbor
templates from edge facts and intern every ground atom into a dense index.
"""
import logging
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

import cgap_settings as settings
from cgap_errors import ResourceCapError, ValidationError
from cgap_model import (
    AnnotationExpr, Apply, Atom, AtomIndex, AVar, Const, FunctionRegistry, GapRule,
    NeighborTemplate, Program, SocialNetwork, VCRule, Var, format_number, gated_max_fn,
    sn_to_facts,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundRule:
    """Ground GAP rule over atom ids: head:annotation <- body atoms:vars, condition atoms:c."""

    head: int
    annotation: AnnotationExpr
    body: Tuple[Tuple[int, str], ...] = ()
    conditions: Tuple[Tuple[int, float], ...] = ()


@dataclass(frozen=True)
class GroundVC:
    vertex: str
    decisions: Tuple[int, ...]
    utilities: Tuple[int, ...]


class GroundProgram:
    """A grounded cGAP: atom index, ground GAP rules and one VC instance per vertex."""

    def __init__(self, index: AtomIndex, rules: Sequence[GroundRule], vc_rule: VCRule,
                 vc: Sequence[GroundVC], functions: FunctionRegistry, domain: Sequence[str],
                 source: Optional[Program] = None):
        self.index = index
        self.rules = tuple(rules)
        self.vc_rule = vc_rule
        self.vc = tuple(vc)
        self.functions = functions
        self.domain = tuple(domain)
        self.source = source
        # Derived structures owned by other modules (fixpoint kernel, VIC masks)
        self.cache: Dict[str, object] = {}

    @property
    def size(self) -> int:
        """Number of options m in the vertex choice rule."""
        return self.vc_rule.size

    @property
    def vertices(self) -> Tuple[str, ...]:
        return tuple(inst.vertex for inst in self.vc)

    @cached_property
    def vertex_position(self) -> Dict[str, int]:
        return {inst.vertex: k for k, inst in enumerate(self.vc)}

    @cached_property
    def decision_ids(self) -> np.ndarray:
        return np.array([inst.decisions for inst in self.vc], dtype=np.int64).reshape(len(self.vc), self.size)

    @cached_property
    def utility_ids(self) -> np.ndarray:
        return np.array([inst.utilities for inst in self.vc], dtype=np.int64).reshape(len(self.vc), self.size)

    @cached_property
    def _adjacency(self) -> Dict[int, Tuple[int, ...]]:
        out: Dict[int, List[int]] = {}
        for k, rule in enumerate(self.rules):
            out.setdefault(rule.head, []).append(k)
        return {atom: tuple(ids) for atom, ids in out.items()}

    def rules_for(self, atom: Union[int, Atom, str]) -> Tuple[int, ...]:
        """Indexes of the ground rules whose head is the atom."""
        atom_id = atom if isinstance(atom, (int, np.integer)) else self.index.id_of(atom)
        return self._adjacency.get(int(atom_id), ())

    def to_program(self) -> Program:
        """The ground program as plain rules, suitable for serialization."""
        atom = self.index.atom
        rules = tuple(
            GapRule(atom(r.head), r.annotation,
                    tuple((atom(a), v) for a, v in r.body),
                    tuple((atom(a), c) for a, c in r.conditions))
            for r in self.rules
        )
        return Program(rules, self.vc_rule, (), self.functions)

    def __repr__(self) -> str:
        return f"GroundProgram(atoms={len(self.index)}, rules={len(self.rules)}, vertices={len(self.vc)})"


def intern(gp: GroundProgram, atom: Union[Atom, str]) -> int:
    """Id of a ground atom; raises UnknownAtomError for atoms outside the program."""
    return gp.index.id_of(atom)


class _FactTable:
    """Extensional facts with lazily built lookups per bound-argument mask."""

    def __init__(self):
        self.facts: Dict[str, Dict[Tuple[str, ...], float]] = {}
        self._indexes: Dict[Tuple[str, Tuple[bool, ...]], Dict[Tuple[str, ...], List[Tuple[str, ...]]]] = {}

    def add(self, atom: Atom, value: float) -> None:
        table = self.facts.setdefault(atom.predicate, {})
        table[atom.args] = max(value, table.get(atom.args, 0.0))

    def size(self, predicate: str) -> int:
        return len(self.facts.get(predicate, ()))

    def lookup(self, predicate: str, pattern: Tuple[Optional[str], ...], threshold: float) -> List[Tuple[str, ...]]:
        table = self.facts.get(predicate, {})
        mask = tuple(p is not None for p in pattern)
        if not any(mask):
            candidates = table.keys()
        elif all(mask):
            candidates = [pattern] if pattern in table else []
        else:
            key = (predicate, mask)
            index = self._indexes.get(key)
            if index is None:
                index = {}
                for args in table:
                    index.setdefault(tuple(a for a, m in zip(args, mask) if m), []).append(args)
                self._indexes[key] = index
            candidates = index.get(tuple(p for p in pattern if p is not None), ())
        floor = threshold - settings.EPS_EQ
        return [args for args in candidates if table[args] >= floor]


def _unify(terms: Tuple, args: Tuple[str, ...], binding: Dict[str, str]) -> Optional[Dict[str, str]]:
    out = dict(binding)
    for term, value in zip(terms, args):
        if isinstance(term, Var):
            bound = out.get(term.name)
            if bound is None:
                out[term.name] = value
            elif bound != value:
                return None
        elif term != value:
            return None
    return out


def _bindings(rule: GapRule, facts: _FactTable, extensional: set, domain: Sequence[str],
              naive: bool) -> Iterator[Dict[str, str]]:
    variables = rule.variables()
    bindings: List[Dict[str, str]] = [{}]
    bound: set = set()
    if not naive:
        restricting = [(atom, c) for atom, c in rule.conditions
                       if atom.predicate in extensional and c > settings.EPS_EQ and atom.variables()]
        restricting.sort(key=lambda item: facts.size(item[0].predicate))
        for atom, c in restricting:
            joined = []
            for b in bindings:
                pattern = tuple(b.get(t.name) if isinstance(t, Var) else t for t in atom.args)
                for args in facts.lookup(atom.predicate, pattern, c):
                    nb = _unify(atom.args, args, b)
                    if nb is not None:
                        joined.append(nb)
            bindings = joined
            bound.update(atom.variables())
    free = [v for v in variables if v not in bound]
    total = len(bindings) * len(domain) ** len(free)
    if total > settings.GROUND_CAP:
        raise ResourceCapError(f"rule for {rule.head} would produce {total} ground instances "
                               f"(cap {settings.GROUND_CAP})")
    for b in bindings:
        for combo in itertools.product(domain, repeat=len(free)):
            yield {**b, **dict(zip(free, combo))} if free else b


def _gate_name(tau: float, functions: FunctionRegistry) -> str:
    base = "gmax_" + format_number(tau).replace(".", "_").replace("-", "m").replace("+", "p")
    name, k = base, 1
    while name in functions and functions.get(name) != gated_max_fn(name, tau):
        k += 1
        name = f"{base}_{k}"
    return name


def ground(p: Program, sn: Optional[SocialNetwork] = None, *, naive: bool = False) -> GroundProgram:
    """
    Ground a program against a social network.

    Args:
        p: Validated program
        sn: Network supplying vertices, labels and edge facts
        naive: Instantiate every variable over the full domain instead of
            joining through extensional conditions

    Returns:
        The ground program
    """
    sn = sn or SocialNetwork()
    network_facts = sn_to_facts(sn)

    domain = list(dict.fromkeys(list(sn.vertices) + p.constants()))
    if not domain:
        raise ValidationError("vertex domain is empty")

    intensional = set(p.vc.heads)
    intensional.update(t.head.predicate for t in p.templates)
    for rule in p.rules:
        if not (rule.is_fact and rule.is_ground and isinstance(rule.annotation, Const)):
            intensional.add(rule.head.predicate)
    facts = _FactTable()
    for rule in list(network_facts) + list(p.rules):
        if rule.is_fact and rule.is_ground and isinstance(rule.annotation, Const):
            facts.add(rule.head, rule.annotation.value)
    extensional = set(facts.facts) - intensional

    index = AtomIndex()
    functions = p.functions.copy()
    rules: List[GroundRule] = []

    def emit(rule: GapRule) -> None:
        rules.append(GroundRule(
            index.intern(rule.head), rule.annotation,
            tuple((index.intern(a), v) for a, v in rule.body),
            tuple((index.intern(a), c) for a, c in rule.conditions),
        ))

    for fact in network_facts:
        emit(fact)
    for rule in p.rules:
        if rule.is_ground:
            emit(rule)
            continue
        for b in _bindings(rule, facts, extensional, domain, naive):
            emit(GapRule(rule.head.substitute(b), rule.annotation,
                         tuple((a.substitute(b), v) for a, v in rule.body),
                         tuple((a.substitute(b), c) for a, c in rule.conditions)))

    for template in p.templates:
        rules.extend(_expand_template(template, facts, domain, index, functions))

    vc = []
    for vertex in domain:
        inst = p.vc.instance(vertex)
        vc.append(GroundVC(vertex, tuple(index.intern(a) for a in inst.decisions),
                           tuple(index.intern(a) for a in inst.utilities)))

    gp = GroundProgram(index, rules, p.vc, vc, functions, domain, p)
    log.debug("grounded %d rules over %d atoms and %d vertices%s",
              len(gp.rules), len(index), len(domain), " (naive)" if naive else "")
    return gp


def _expand_template(template: NeighborTemplate, facts: _FactTable, domain: Sequence[str],
                     index: AtomIndex, functions: FunctionRegistry) -> List[GroundRule]:
    neighbors: Dict[str, Dict[str, None]] = {}
    floor = template.edge_weight - settings.EPS_EQ
    for (src, dst), weight in facts.facts.get(template.edge.predicate, {}).items():
        if weight < floor:
            continue
        vertex, neighbor = (dst, src) if template.incoming else (src, dst)
        neighbors.setdefault(vertex, {})[neighbor] = None

    if template.tau is not None:
        fn_name = _gate_name(template.tau, functions)
        functions.register(gated_max_fn(fn_name, template.tau))
    else:
        fn_name = template.aggregate

    out = []
    for vertex in domain:
        nbr = neighbors.get(vertex)
        if not nbr:
            continue
        names = tuple(f"M{k}" for k in range(1, len(nbr) + 1))
        body = tuple((index.intern(Atom(template.body.predicate, (u,))), name) for u, name in zip(nbr, names))
        head = index.intern(Atom(template.head.predicate, (vertex,)))
        out.append(GroundRule(head, Apply(fn_name, tuple(AVar(n) for n in names)), body))
    return out


def as_ground(p: Union[Program, GroundProgram], sn: Optional[SocialNetwork] = None) -> GroundProgram:
    """Ground a program unless it already is."""
    return p if isinstance(p, GroundProgram) else ground(p, sn)
