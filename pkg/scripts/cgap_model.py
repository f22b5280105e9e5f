# scripts/cgap_model.py
"""
Core cGAP types: social networks, annotated atoms and rules, the vertex-choice
rule, programs, and array-backed interpretations with their lattice and
satisfaction primitives.
"""
import re
from enum import Enum
from functools import cached_property
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

import cgap_settings as settings
from cgap_errors import UnknownAtomError, ValidationError


_PLAIN_CONSTANT = re.compile(r"[a-z][A-Za-z0-9_^]*|\d+")
_IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_^]*")

CHOICE_PREFIX = "c_"


class PredicateKind(str, Enum):
    VERTEX = "vertex"
    EDGE = "edge"


class PredicateTag(str, Enum):
    PLAIN = "plain"
    UTILITY = "utility"
    DECISION = "decision"
    CHOICE = "choice-indicator"


@dataclass(frozen=True)
class Predicate:
    name: str
    kind: PredicateKind
    tag: PredicateTag = PredicateTag.PLAIN

    @property
    def arity(self) -> int:
        return 1 if self.kind is PredicateKind.VERTEX else 2


@dataclass(frozen=True)
class Var:
    """Logic variable ranging over vertices."""

    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[str, Var]


def format_term(term: Term) -> str:
    """Render a term the way the parser reads it back."""
    if isinstance(term, Var):
        return term.name
    if _PLAIN_CONSTANT.fullmatch(term):
        return term
    escaped = term.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: Tuple[Term, ...]

    def __post_init__(self):
        if len(self.args) not in (1, 2):
            raise ValidationError(f"atom {self.predicate} has {len(self.args)} arguments; expected 1 or 2")

    @property
    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def variables(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.args if isinstance(a, Var))

    def substitute(self, binding: Mapping[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding[a.name] if isinstance(a, Var) else a for a in self.args))

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(format_term(a) for a in self.args)})"


# Annotation expressions


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class AVar:
    name: str


@dataclass(frozen=True)
class Apply:
    fn: str
    args: Tuple["AnnotationExpr", ...]


AnnotationExpr = Union[Const, AVar, Apply]


def expr_variables(expr: AnnotationExpr) -> List[str]:
    """Annotation variables used by an expression, in order of first use."""
    if isinstance(expr, AVar):
        return [expr.name]
    if isinstance(expr, Apply):
        seen: List[str] = []
        for arg in expr.args:
            for name in expr_variables(arg):
                if name not in seen:
                    seen.append(name)
        return seen
    return []


def format_number(value: float) -> str:
    return repr(float(value))


def format_expr(expr: AnnotationExpr) -> str:
    if isinstance(expr, Const):
        return format_number(expr.value)
    if isinstance(expr, AVar):
        return expr.name
    return f"{expr.fn}({','.join(format_expr(a) for a in expr.args)})"


class FnKind(str, Enum):
    LINEAR = "linear"
    MAX = "max"
    AVERAGE = "avg"
    GATED_MAX = "gatedmax"
    SOCIAL = "social"


@dataclass(frozen=True)
class AnnotationFn:
    """
    A registered annotation function.

    The kind doubles as the MILP linearization descriptor. Parameters are the
    coefficient vector for LINEAR, (tau,) for GATED_MAX and (theta, w1..wk) for
    SOCIAL; MAX and AVERAGE take none. arity None means variadic.
    """

    name: str
    arity: Optional[int]
    kind: FnKind
    params: Tuple[float, ...] = ()
    monotone: bool = True

    @property
    def coeffs(self) -> Tuple[float, ...]:
        return self.params if self.kind is FnKind.LINEAR else ()

    @property
    def tau(self) -> float:
        return self.params[0] if self.kind is FnKind.GATED_MAX else 0.0

    @property
    def linearizable(self) -> bool:
        return self.kind is not FnKind.SOCIAL

    def __call__(self, values: Sequence[float]) -> float:
        values = [float(v) for v in values]
        if self.arity is not None and len(values) != self.arity:
            raise ValidationError(f"function {self.name} expects {self.arity} arguments, got {len(values)}")
        if self.kind is FnKind.LINEAR:
            out = sum(a * v for a, v in zip(self.params, values))
        elif self.kind is FnKind.MAX:
            out = max(values, default=0.0)
        elif self.kind is FnKind.AVERAGE:
            out = sum(values) / len(values) if values else 0.0
        elif self.kind is FnKind.GATED_MAX:
            out = max(values, default=0.0) if sum(values) >= self.tau - settings.EPS_EQ else 0.0
        else:
            theta, weights = self.params[0], self.params[1:]
            active = sum(w - theta for w, v in zip(weights, values) if v > settings.EPS_EQ)
            out = 0.5 + active / (2 * len(weights)) if weights else 0.5
        return min(1.0, max(0.0, out))

    def declaration(self) -> str:
        arity = "*" if self.arity is None else str(self.arity)
        params = ",".join(format_number(p) for p in self.params)
        return f"#function {self.name} {arity} {self.kind.value}({params})"


def linear_fn(name: str, coeffs: Sequence[float]) -> AnnotationFn:
    coeffs = tuple(float(c) for c in coeffs)
    if not coeffs:
        raise ValidationError(f"linear function {name} needs at least one coefficient")
    if any(c < 0 for c in coeffs):
        raise ValidationError(f"linear function {name} has a negative coefficient")
    if sum(coeffs) > 1 + settings.EPS_EQ:
        raise ValidationError(f"linear function {name} coefficients sum above 1")
    return AnnotationFn(name, len(coeffs), FnKind.LINEAR, coeffs)


def max_fn(name: str = "max") -> AnnotationFn:
    return AnnotationFn(name, None, FnKind.MAX)


def avg_fn(name: str = "avg") -> AnnotationFn:
    return AnnotationFn(name, None, FnKind.AVERAGE)


def gated_max_fn(name: str, tau: float) -> AnnotationFn:
    if tau < 0:
        raise ValidationError(f"gated max {name} needs a nonnegative threshold")
    return AnnotationFn(name, None, FnKind.GATED_MAX, (float(tau),))


def social_fn(name: str, theta: float, weights: Sequence[float]) -> AnnotationFn:
    """Threshold utility of a social-network game: 1/2 + sum over agreeing neighbors of (w - theta) / 2k."""
    weights = tuple(float(w) for w in weights)
    if not weights:
        raise ValidationError(f"social function {name} needs at least one weight")
    if not 0 < theta <= 1 or any(not 0 < w <= 1 for w in weights):
        raise ValidationError(f"social function {name} needs theta and weights in (0,1]")
    monotone = all(w >= theta for w in weights)
    return AnnotationFn(name, len(weights), FnKind.SOCIAL, (float(theta),) + weights, monotone)


class FunctionRegistry:
    """Named annotation functions; max and avg are always present."""

    BUILTINS = ("max", "avg")

    def __init__(self, functions: Iterable[AnnotationFn] = ()):
        self._functions: Dict[str, AnnotationFn] = {"max": max_fn(), "avg": avg_fn()}
        for fn in functions:
            self.register(fn, allow_nonmonotone=fn.kind is FnKind.SOCIAL)

    def register(self, fn: AnnotationFn, *, allow_nonmonotone: bool = False) -> AnnotationFn:
        existing = self._functions.get(fn.name)
        if existing is not None:
            if existing == fn:
                return existing
            raise ValidationError(f"function {fn.name} declared twice")
        if not fn.monotone and not allow_nonmonotone:
            raise ValidationError(f"function {fn.name} is not monotone")
        self._functions[fn.name] = fn
        return fn

    def get(self, name: str) -> AnnotationFn:
        try:
            return self._functions[name]
        except KeyError:
            raise ValidationError(f"unknown function '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._functions

    def __iter__(self) -> Iterator[AnnotationFn]:
        return iter(self._functions.values())

    def declared(self) -> List[AnnotationFn]:
        """Functions beyond the builtins, in registration order."""
        return [fn for name, fn in self._functions.items() if name not in self.BUILTINS]

    def copy(self) -> "FunctionRegistry":
        clone = FunctionRegistry()
        clone._functions = dict(self._functions)
        return clone

    def __eq__(self, other) -> bool:
        return isinstance(other, FunctionRegistry) and self._functions == other._functions

    def __repr__(self) -> str:
        return f"FunctionRegistry({[fn.name for fn in self.declared()]})"


def evaluate_expr(expr: AnnotationExpr, env: Mapping[str, float], functions: FunctionRegistry) -> float:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, AVar):
        return env[expr.name]
    return functions.get(expr.fn)([evaluate_expr(a, env, functions) for a in expr.args])


# Rules and programs


@dataclass(frozen=True)
class GapRule:
    """head:annotation <- propagating body (atom:variable) plus constant conditions (atom:c)."""

    head: Atom
    annotation: AnnotationExpr
    body: Tuple[Tuple[Atom, str], ...] = ()
    conditions: Tuple[Tuple[Atom, float], ...] = ()

    @property
    def is_fact(self) -> bool:
        return not self.body and not self.conditions

    @property
    def is_ground(self) -> bool:
        return all(a.is_ground for a in self.atoms())

    def atoms(self) -> Iterator[Atom]:
        yield self.head
        for atom, _ in self.body:
            yield atom
        for atom, _ in self.conditions:
            yield atom

    def variables(self) -> List[str]:
        seen: List[str] = []
        for atom in self.atoms():
            for name in atom.variables():
                if name not in seen:
                    seen.append(name)
        return seen


@dataclass(frozen=True)
class NeighborTemplate:
    """
    head(V) : agg{ Mu | edge(U,V):w, body(U):Mu } [if sum >= tau]

    Expanded per vertex by the grounder, one propagating atom per neighbor.
    """

    head: Atom
    aggregate: str
    mu: str
    edge: Atom
    edge_weight: float
    body: Atom
    tau: Optional[float] = None

    def __post_init__(self):
        if self.aggregate not in ("avg", "max"):
            raise ValidationError(f"template aggregate must be avg or max, not {self.aggregate}")
        if self.tau is not None and self.aggregate != "max":
            raise ValidationError("a template gate ('if sum >= tau') needs the max aggregate")
        if len(self.head.args) != 1 or len(self.body.args) != 1 or len(self.edge.args) != 2:
            raise ValidationError("template head and body must be vertex atoms over an edge atom")
        head_var, body_var = self.head.args[0], self.body.args[0]
        if not isinstance(head_var, Var) or not isinstance(body_var, Var) or head_var == body_var:
            raise ValidationError("template head and body need distinct variables")
        if set(self.edge.args) != {head_var, body_var}:
            raise ValidationError("template edge atom must connect the head and body variables")
        if not 0 <= self.edge_weight <= 1:
            raise ValidationError(f"template edge constant {self.edge_weight} outside [0,1]")

    @property
    def incoming(self) -> bool:
        """True when the edge points from the neighbor to the head vertex."""
        return self.edge.args[1] == self.head.args[0]


@dataclass(frozen=True)
class VCInstance:
    vertex: str
    decisions: Tuple[Atom, ...]
    utilities: Tuple[Atom, ...]


@dataclass(frozen=True)
class VCRule:
    """b1(X),...,bm(X) <~ a1(X),...,am(X)"""

    heads: Tuple[str, ...]
    bodies: Tuple[str, ...]
    var: str = "X"

    def __post_init__(self):
        if len(self.heads) != len(self.bodies):
            raise ValidationError("vertex choice rule needs as many decision as utility atoms")
        if len(self.heads) < 2:
            raise ValidationError("vertex choice rule needs at least two options")
        names = self.heads + self.bodies
        if len(set(names)) != len(names):
            raise ValidationError("vertex choice rule predicates must be distinct")

    @property
    def size(self) -> int:
        return len(self.heads)

    def instance(self, vertex: str) -> VCInstance:
        return VCInstance(vertex,
                          tuple(Atom(b, (vertex,)) for b in self.heads),
                          tuple(Atom(a, (vertex,)) for a in self.bodies))


@dataclass(frozen=True)
class Program:
    rules: Tuple[GapRule, ...]
    vc: VCRule
    templates: Tuple[NeighborTemplate, ...] = ()
    functions: FunctionRegistry = field(default_factory=FunctionRegistry)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "templates", tuple(self.templates))
        validate_program(self)

    @cached_property
    def predicates(self) -> Dict[str, Predicate]:
        arities: Dict[str, int] = {}
        for atom in self._all_atoms():
            arities.setdefault(atom.predicate, len(atom.args))
        for name in self.vc.heads + self.vc.bodies:
            arities.setdefault(name, 1)
        out = {}
        for name, arity in arities.items():
            tag = PredicateTag.PLAIN
            if name in self.vc.heads:
                tag = PredicateTag.DECISION
            elif name in self.vc.bodies:
                tag = PredicateTag.UTILITY
            out[name] = Predicate(name, PredicateKind.VERTEX if arity == 1 else PredicateKind.EDGE, tag)
        return out

    def _all_atoms(self) -> Iterator[Atom]:
        for rule in self.rules:
            yield from rule.atoms()
        for t in self.templates:
            yield t.head
            yield t.edge
            yield t.body

    def constants(self) -> List[str]:
        """Vertex constants in order of first appearance."""
        seen: Dict[str, None] = {}
        for atom in self._all_atoms():
            for arg in atom.args:
                if not isinstance(arg, Var):
                    seen.setdefault(arg, None)
        return list(seen)


def validate_program(program: Program) -> None:
    """Structural checks shared by the parser and programmatic construction."""
    arities: Dict[str, int] = {}

    def check_atom(atom: Atom) -> None:
        if not _IDENTIFIER.fullmatch(atom.predicate):
            raise ValidationError(f"bad predicate name '{atom.predicate}'")
        known = arities.setdefault(atom.predicate, len(atom.args))
        if known != len(atom.args):
            raise ValidationError(f"predicate {atom.predicate} used with arities {known} and {len(atom.args)}")

    reserved = {CHOICE_PREFIX + b for b in program.vc.heads}
    for atom in program._all_atoms():
        check_atom(atom)
        if atom.predicate in reserved:
            raise ValidationError(f"predicate {atom.predicate} is reserved for choice atoms")

    for name in program.vc.heads + program.vc.bodies:
        if arities.get(name, 1) != 1:
            raise ValidationError(f"vertex choice rule uses edge predicate {name}")

    for rule in program.rules:
        body_vars = [var for _, var in rule.body]
        if len(set(body_vars)) != len(body_vars):
            raise ValidationError(f"rule for {rule.head} repeats an annotation variable in its body")
        missing = set(expr_variables(rule.annotation)) - set(body_vars)
        if missing:
            raise ValidationError(f"rule for {rule.head} uses unbound annotation variables {sorted(missing)}")
        _check_expr(rule.annotation, program.functions, str(rule.head))
        for atom, c in rule.conditions:
            if not 0 <= c <= 1:
                raise ValidationError(f"condition constant {c} on {atom} outside [0,1]")

    for template in program.templates:
        for atom in (template.head, template.body):
            if arities.get(atom.predicate) != 1:
                raise ValidationError(f"template atom {atom} must use a vertex predicate")
        if arities.get(template.edge.predicate) != 2:
            raise ValidationError(f"template edge atom {template.edge} must use an edge predicate")


def _check_expr(expr: AnnotationExpr, functions: FunctionRegistry, where: str) -> None:
    if isinstance(expr, Const):
        if not 0 <= expr.value <= 1:
            raise ValidationError(f"annotation constant {expr.value} in rule for {where} outside [0,1]")
    elif isinstance(expr, Apply):
        fn = functions.get(expr.fn)
        if fn.arity is not None and fn.arity != len(expr.args):
            raise ValidationError(f"function {fn.name} expects {fn.arity} arguments in rule for {where}")
        for arg in expr.args:
            _check_expr(arg, functions, where)


def choice_gap_from_models(options: Sequence[Tuple[str, Sequence[Union[GapRule, NeighborTemplate]]]],
                           shared: Sequence[GapRule] = (),
                           functions: Optional[FunctionRegistry] = None,
                           utility_suffix: str = "^U",
                           decision_suffix: str = "^D") -> Program:
    """
    Combine one diffusion model per competing option into a cGAP.

    Each option is (base predicate, rules). Rule heads over a base predicate
    become its utility predicate, body occurrences become its decision
    predicate, and a vertex choice rule over the options is appended.

    Args:
        options: (base predicate, model rules) per option, in choice order
        shared: Rules copied unchanged, e.g. network facts
        functions: Registry the model rules refer to

    Returns:
        The combined program
    """
    bases = [name for name, _ in options]
    utility = {b: b + utility_suffix for b in bases}
    decision = {b: b + decision_suffix for b in bases}

    def head(atom: Atom) -> Atom:
        return Atom(utility.get(atom.predicate, atom.predicate), atom.args)

    def body(atom: Atom) -> Atom:
        return Atom(decision.get(atom.predicate, atom.predicate), atom.args)

    rules: List[GapRule] = list(shared)
    templates: List[NeighborTemplate] = []
    for _, model in options:
        for rule in model:
            if isinstance(rule, NeighborTemplate):
                templates.append(NeighborTemplate(head(rule.head), rule.aggregate, rule.mu, rule.edge,
                                                  rule.edge_weight, body(rule.body), rule.tau))
            else:
                rules.append(GapRule(head(rule.head), rule.annotation,
                                     tuple((body(a), v) for a, v in rule.body),
                                     tuple((body(a), c) for a, c in rule.conditions)))
    vc = VCRule(tuple(decision[b] for b in bases), tuple(utility[b] for b in bases))
    return Program(tuple(rules), vc, tuple(templates), functions or FunctionRegistry())


# Social networks


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    label: str
    weight: float = 1.0


@dataclass(frozen=True)
class SocialNetwork:
    """Vertices, labelled weighted edges (a multiset) and valued vertex labels."""

    vertices: Tuple[str, ...] = ()
    edges: Tuple[Edge, ...] = ()
    labels: Tuple[Tuple[str, str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(dict.fromkeys(self.vertices)))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "labels", tuple(self.labels))
        known = set(self.vertices)
        for e in self.edges:
            if e.source not in known or e.target not in known:
                raise ValidationError(f"edge {e.source}->{e.target} has an endpoint outside the vertex set")
            if not 0 <= e.weight <= 1:
                raise ValidationError(f"edge {e.source}->{e.target} weight {e.weight} outside [0,1]")
        for vertex, pred, value in self.labels:
            if vertex not in known:
                raise ValidationError(f"label {pred} on unknown vertex {vertex}")
            if not 0 <= value <= 1:
                raise ValidationError(f"label {pred}({vertex}) value {value} outside [0,1]")


def sn_to_facts(sn: SocialNetwork) -> Tuple[GapRule, ...]:
    """One fact per vertex label and one per edge."""
    facts = [GapRule(Atom(pred, (vertex,)), Const(float(value))) for vertex, pred, value in sn.labels]
    facts.extend(GapRule(Atom(e.label, (e.source, e.target)), Const(float(e.weight))) for e in sn.edges)
    return tuple(facts)


# Atom index and interpretations


class AtomIndex:
    """Dense bijection between ground atoms and integer ids."""

    def __init__(self, atoms: Iterable[Atom] = ()):
        self._atoms: List[Atom] = []
        self._ids: Dict[Atom, int] = {}
        self._by_text: Optional[Dict[str, int]] = None
        for atom in atoms:
            self.intern(atom)

    def intern(self, atom: Atom) -> int:
        found = self._ids.get(atom)
        if found is not None:
            return found
        if not atom.is_ground:
            raise ValidationError(f"cannot index non-ground atom {atom}")
        self._ids[atom] = len(self._atoms)
        self._atoms.append(atom)
        self._by_text = None
        return self._ids[atom]

    def id_of(self, atom: Union[Atom, str]) -> int:
        if isinstance(atom, Atom):
            found = self._ids.get(atom)
        else:
            if self._by_text is None:
                self._by_text = {str(a): i for i, a in enumerate(self._atoms)}
            found = self._by_text.get(atom)
            if found is None:
                found = self._by_text.get(re.sub(r"\s+", "", atom))
        if found is None:
            raise UnknownAtomError(f"unknown atom {atom}")
        return found

    def get(self, atom: Atom) -> Optional[int]:
        return self._ids.get(atom)

    def atom(self, atom_id: int) -> Atom:
        return self._atoms[atom_id]

    def text(self, atom_id: int) -> str:
        return str(self._atoms[atom_id])

    def ids_of_predicates(self, names: Iterable[str]) -> np.ndarray:
        wanted = set(names)
        return np.array([i for i, a in enumerate(self._atoms) if a.predicate in wanted], dtype=np.int64)

    def copy(self) -> "AtomIndex":
        return AtomIndex(self._atoms)

    def __len__(self) -> int:
        return len(self._atoms)

    def __iter__(self) -> Iterator[Atom]:
        return iter(self._atoms)

    def __contains__(self, atom) -> bool:
        if isinstance(atom, Atom):
            return atom in self._ids
        try:
            self.id_of(atom)
        except UnknownAtomError:
            return False
        return True


class Interpretation:
    """Total mapping from the atoms of an index to values in [0,1]."""

    __slots__ = ("index", "values")

    def __init__(self, index: AtomIndex, values: Optional[np.ndarray] = None):
        self.index = index
        if values is None:
            values = np.zeros(len(index))
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(index),):
            raise ValidationError(f"interpretation has {values.shape[0]} values for {len(index)} atoms")
        self.values = values

    @classmethod
    def bottom(cls, index: AtomIndex) -> "Interpretation":
        return cls(index)

    @classmethod
    def from_mapping(cls, index: AtomIndex, mapping: Mapping[Union[Atom, str], float]) -> "Interpretation":
        values = np.zeros(len(index))
        for key, value in mapping.items():
            value = float(value)
            if not 0 <= value <= 1:
                raise ValidationError(f"value {value} for {key} outside [0,1]")
            values[index.id_of(key)] = value
        return cls(index, values)

    def __getitem__(self, key: Union[Atom, str, int]) -> float:
        if isinstance(key, (int, np.integer)):
            return float(self.values[key])
        return float(self.values[self.index.id_of(key)])

    def value(self, predicate: str, *args: str) -> float:
        return self[Atom(predicate, tuple(str(a) for a in args))]

    def __len__(self) -> int:
        return len(self.values)

    def copy(self) -> "Interpretation":
        return Interpretation(self.index, self.values.copy())

    def allclose(self, other: "Interpretation", tol: Optional[float] = None) -> bool:
        _same_index(self, other)
        tol = settings.EPS_EQ if tol is None else tol
        return bool(np.all(np.abs(self.values - other.values) <= tol))

    def to_dict(self) -> Dict[str, float]:
        return {self.index.text(i): float(v) for i, v in enumerate(self.values)}

    def __eq__(self, other) -> bool:
        return (isinstance(other, Interpretation) and self.index is other.index
                and bool(np.array_equal(self.values, other.values)))

    __hash__ = None

    def __repr__(self) -> str:
        shown = ", ".join(f"{self.index.text(i)}:{v:g}" for i, v in enumerate(self.values) if v > 0)
        return f"Interpretation({shown})"


def _same_index(a: Interpretation, b: Interpretation) -> None:
    if a.index is not b.index:
        raise ValidationError("interpretations over mismatched atom indexes")


def lattice_meet(a: Interpretation, b: Interpretation) -> Interpretation:
    _same_index(a, b)
    return Interpretation(a.index, np.minimum(a.values, b.values))


def lattice_join(a: Interpretation, b: Interpretation) -> Interpretation:
    _same_index(a, b)
    return Interpretation(a.index, np.maximum(a.values, b.values))


def lattice_leq(a: Interpretation, b: Interpretation, tol: float = 0.0) -> bool:
    _same_index(a, b)
    return bool(np.all(a.values <= b.values + tol))


def vc_rows_satisfied(decisions: np.ndarray, utilities: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """
    Per-row vertex choice satisfaction for (vertices x options) value matrices.

    A row is satisfied when some option has decision equal to utility and every
    other decision is zero.
    """
    tol = settings.EPS_EQ if tol is None else tol
    match = np.abs(decisions - utilities) <= tol
    positive = decisions > tol
    n_positive = positive.sum(axis=1)
    chosen = positive.argmax(axis=1)
    rows = np.arange(decisions.shape[0])
    return np.where(n_positive == 0, match.any(axis=1),
                    np.where(n_positive == 1, match[rows, chosen], False))


def satisfies(i: Interpretation, r, functions: Optional[FunctionRegistry] = None) -> bool:
    """
    Satisfaction of a ground annotated atom (Atom, mu), GAP rule or VC instance.

    Rules with annotation variables are read at the interpretation's body
    values, which is exact for monotone functions.
    """
    tol = settings.EPS_EQ
    if isinstance(r, tuple) and len(r) == 2 and isinstance(r[0], Atom):
        atom, mu = r
        if not atom.is_ground:
            raise ValidationError(f"cannot check non-ground atom {atom}")
        return i[atom] >= mu - tol
    if isinstance(r, GapRule):
        if not r.is_ground:
            raise ValidationError(f"cannot check non-ground rule for {r.head}")
        if any(i[atom] < c - tol for atom, c in r.conditions):
            return True
        env = {var: i[atom] for atom, var in r.body}
        return i[r.head] >= evaluate_expr(r.annotation, env, functions or FunctionRegistry()) - tol
    if isinstance(r, VCInstance):
        decisions = np.array([[i[a] for a in r.decisions]])
        utilities = np.array([[i[a] for a in r.utilities]])
        return bool(vc_rows_satisfied(decisions, utilities)[0])
    if isinstance(r, VCRule):
        raise ValidationError("cannot check a non-ground vertex choice rule; use VCRule.instance(vertex)")
    raise ValidationError(f"cannot check satisfaction of {type(r).__name__}")
