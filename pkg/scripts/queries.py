# scripts/queries.py
"""
Estimation queries: an aggregate over target atoms, answered by the range of
values it takes across all strong equilibria.

Targets may name choice atoms c_<decision>(v), which hold 1 exactly when
vertex v picked that option. Three evaluation paths exist: enumerate every
equilibrium, read the extremal equilibria of a two-option VIC program
(monotone aggregates only), or minimize and maximize over the MILP.
"""
import json
import fnmatch
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import cgap_settings as settings
from cgap_errors import ProgramSyntaxError, ResourceCapError, UnknownAtomError, ValidationError
from cgap_model import CHOICE_PREFIX, Atom, AtomIndex, Interpretation
from equilibria import Equilibrium, enumerate_strong_equilibria
from grounder import GroundProgram, as_ground
from milp import build_ilc, compute_t_hat
from milp_solver import CAP_EXCEEDED, ConstraintSystem, Solution, solve
from vic import extremal_models

log = logging.getLogger(__name__)

AGGREGATES = ("sum", "count", "min", "max", "linear")


@dataclass(frozen=True)
class AuxVariable:
    name: str
    lb: float = 0.0
    ub: float = 1.0
    binary: bool = False


@dataclass(frozen=True)
class LinearQuerySpec:
    """
    k + c1 . x + c2 . y subject to constraints over targets and auxiliaries.

    Constraint coefficients refer to target values as t1..tn and to
    auxiliaries by name. An empty c1 weighs every target by 1.
    """

    k: float = 0.0
    c1: Tuple[float, ...] = ()
    c2: Tuple[Tuple[str, float], ...] = ()
    aux: Tuple[AuxVariable, ...] = ()
    constraints: Tuple[Tuple[Tuple[Tuple[str, float], ...], str, float], ...] = ()

    def __post_init__(self):
        names = {a.name for a in self.aux}
        for name, _ in self.c2:
            if name not in names:
                raise ValidationError(f"linear query coefficient for undeclared auxiliary '{name}'")
        used = {n for n, _ in self.c2}
        for coeffs, sense, _ in self.constraints:
            if sense not in (">=", "<=", "="):
                raise ValidationError(f"unknown constraint sense '{sense}'")
            for ref, _ in coeffs:
                if ref not in names and not _is_target_ref(ref):
                    raise ValidationError(f"linear query constraint references unknown '{ref}'")
                used.add(ref)
        unused = names - used
        if unused:
            raise ValidationError(f"auxiliary variables {sorted(unused)} appear in no constraint or coefficient")

    @property
    def monotone(self) -> bool:
        return all(c >= 0 for c in self.c1) and all(c >= 0 for _, c in self.c2)

    def weights(self, n: int) -> np.ndarray:
        if not self.c1:
            return np.ones(n)
        if len(self.c1) != n:
            raise ValidationError(f"linear query has {len(self.c1)} coefficients for {n} targets")
        return np.asarray(self.c1, dtype=np.float64)


def _is_target_ref(ref: str) -> bool:
    return ref.startswith("t") and ref[1:].isdigit() and int(ref[1:]) >= 1


@dataclass(frozen=True)
class EstimationQuery:
    aggregate: str
    targets: Tuple[str, ...]
    linear: Optional[LinearQuerySpec] = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.aggregate not in AGGREGATES:
            raise ValidationError(f"unknown aggregate '{self.aggregate}'; expected one of {', '.join(AGGREGATES)}")
        if self.aggregate == "linear" and self.linear is None:
            object.__setattr__(self, "linear", LinearQuerySpec())
        if not self.targets:
            raise ValidationError("empty target set")

    @property
    def monotone(self) -> bool:
        return self.aggregate != "linear" or self.linear.monotone


@dataclass
class RangeAnswer:
    status: str  # defined | undefined
    glb: Optional[float] = None
    lub: Optional[float] = None
    exact: bool = True
    method: str = ""
    witnesses: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    @property
    def defined(self) -> bool:
        return self.status == "defined"

    def as_dict(self) -> dict:
        return {"status": self.status, "glb": self.glb, "lub": self.lub, "exact": self.exact,
                "method": self.method, "witnesses": {k: list(v) for k, v in self.witnesses.items()}}


def undefined(method: str) -> RangeAnswer:
    return RangeAnswer("undefined", exact=False, method=method)


# Choice atoms


@dataclass(frozen=True, eq=False)
class ChoiceAtoms:
    """Atom index extended with one choice atom per vertex and option."""

    index: AtomIndex
    base_size: int
    ids: np.ndarray  # (vertices x options) ids in the extended index


def augment_choice_atoms(gp: GroundProgram) -> ChoiceAtoms:
    cached = gp.cache.get("choice_atoms")
    if cached is not None:
        return cached
    index = gp.index.copy()
    ids = np.array([[index.intern(Atom(CHOICE_PREFIX + b, (v,))) for b in gp.vc_rule.heads] for v in gp.vertices],
                   dtype=np.int64).reshape(len(gp.vc), gp.size)
    out = gp.cache["choice_atoms"] = ChoiceAtoms(index, len(gp.index), ids)
    return out


def choice_indicators(gp: GroundProgram, choice: Sequence[int]) -> np.ndarray:
    """(vertices x options) 0/1 matrix of a 1-based choice vector."""
    out = np.zeros((len(gp.vc), gp.size))
    out[np.arange(len(gp.vc)), np.asarray(choice, dtype=np.int64) - 1] = 1.0
    return out


def with_choice_atoms(gp: GroundProgram, model: Interpretation, choice: Optional[Sequence[int]] = None,
                      indicators: Optional[np.ndarray] = None) -> Interpretation:
    """
    Extend a model of gp with choice-atom values.

    The choice comes from an explicit vector or indicator matrix, or else from
    the single positive decision of each vertex; a vertex with no positive
    decision leaves its choice atoms undefined.
    """
    aug = augment_choice_atoms(gp)
    if indicators is None:
        if choice is None:
            decisions = model.values[gp.decision_ids]
            positive = decisions > settings.EPS_EQ
            if np.any(positive.sum(axis=1) != 1):
                raise ValidationError("choice atoms are undefined: some vertex has no single positive decision")
            choice = positive.argmax(axis=1) + 1
        indicators = choice_indicators(gp, choice)
    values = np.zeros(len(aug.index))
    values[:aug.base_size] = model.values
    values[aug.ids.ravel()] = indicators.ravel()
    return Interpretation(aug.index, values)


def equilibrium_view(gp: GroundProgram, eq: Equilibrium) -> Interpretation:
    return with_choice_atoms(gp, eq.model, eq.choice)


# Evaluation


def resolve_targets(q: EstimationQuery, index: AtomIndex) -> np.ndarray:
    """Atom ids of the query targets; patterns use shell wildcards."""
    ids: List[int] = []
    texts = None
    for pattern in q.targets:
        if not any(ch in pattern for ch in "*?["):
            ids.append(index.id_of(pattern))
            continue
        if texts is None:
            texts = [str(a) for a in index]
        matched = [i for i, text in enumerate(texts) if fnmatch.fnmatchcase(text, pattern)]
        if not matched:
            raise UnknownAtomError(f"target pattern {pattern} matches no atom")
        ids.extend(matched)
    return np.array(ids, dtype=np.int64)


def _aggregate(q: EstimationQuery, values: np.ndarray) -> float:
    if q.aggregate == "sum":
        return float(values.sum())
    if q.aggregate == "count":
        return float(np.count_nonzero(values > settings.EPS_EQ))
    if q.aggregate == "min":
        return float(values.min())
    if q.aggregate == "max":
        return float(values.max())
    spec = q.linear
    base = spec.k + float(spec.weights(len(values)) @ values)
    if not spec.aux:
        return base
    # auxiliaries are pinned by their constraints once the targets are fixed
    cs = ConstraintSystem()
    refs = {f"t{k}": cs.add_variable(f"t{k}", float(v), float(v)) for k, v in enumerate(values, 1)}
    for a in spec.aux:
        refs[a.name] = cs.add_variable(f"q_{a.name}", a.lb, a.ub, a.binary)
    for coeffs, sense, rhs in spec.constraints:
        cs.add_constraint({refs[r]: c for r, c in coeffs}, sense, rhs, "query")
    cs.set_objective({refs[n]: c for n, c in spec.c2}, "min")
    sol = solve(cs, "min")
    if not sol.feasible:
        raise ValidationError("linear query constraints are infeasible for these target values")
    return base + sol.objective


def eval_query(q: EstimationQuery, i: Interpretation) -> float:
    """Aggregate value of q over an interpretation (extended with choice atoms when targets need them)."""
    return _aggregate(q, i.values[resolve_targets(q, i.index)])


def range_naive(p, q: EstimationQuery, sn=None, *, jobs: Optional[int] = None) -> RangeAnswer:
    """Evaluate q on every strong equilibrium and report the extremes."""
    gp = as_ground(p, sn)
    found = enumerate_strong_equilibria(gp, jobs=jobs)
    if not found:
        return undefined("naive")
    values = [eval_query(q, equilibrium_view(gp, eq)) for eq in found]
    lo, hi = int(np.argmin(values)), int(np.argmax(values))
    return RangeAnswer("defined", values[lo], values[hi], True, "naive",
                       {"glb": found[lo].choice, "lub": found[hi].choice})


def _profile(actions) -> Tuple[int, ...]:
    return tuple(int(a) for a in actions)


def range_monotone_vic2(p, q: EstimationQuery, sn=None) -> RangeAnswer:
    """
    Range of a monotone query on a two-option VIC program from its extremal equilibria.

    Targets over the first option's predicates range from the equilibrium reached
    from option 2 up to the one reached from option 1, and the other way round
    for the second option. Targets spanning both sets get the bounds of the
    mixed models, flagged as not exact.
    """
    if not q.monotone:
        raise ValidationError("query function is not monotone; use the naive or milp method")
    gp = as_ground(p, sn)
    ext = extremal_models(gp)
    aug = augment_choice_atoms(gp)
    ids = resolve_targets(q, aug.index)

    first, second = ext.graph.pred_sets
    predicates = set()
    for atom_id in ids:
        name = aug.index.atom(int(atom_id)).predicate
        if atom_id >= aug.base_size:
            name = name[len(CHOICE_PREFIX):]
        if name not in first and name not in second:
            raise ValidationError(f"target predicate {name} lies outside both choice predicate sets")
        predicates.add(name)

    s12, s21 = ext.s12.actions, ext.s21.actions

    def value(model: Interpretation, indicators: np.ndarray) -> float:
        return eval_query(q, with_choice_atoms(gp, model, indicators=indicators))

    i12, i21 = choice_indicators(gp, s12), choice_indicators(gp, s21)
    if predicates <= first:
        lo, hi = value(ext.min_model, i21), value(ext.max_model, i12)
        return RangeAnswer("defined", lo, hi, True, "monotone", {"glb": _profile(s21), "lub": _profile(s12)})
    if predicates <= second:
        lo, hi = value(ext.max_model, i12), value(ext.min_model, i21)
        return RangeAnswer("defined", lo, hi, True, "monotone", {"glb": _profile(s12), "lub": _profile(s21)})
    low_ind = np.column_stack([i21[:, 0], i12[:, 1]])
    high_ind = np.column_stack([i12[:, 0], i21[:, 1]])
    lo, hi = value(ext.mixed_low, low_ind), value(ext.mixed_high, high_ind)
    return RangeAnswer("defined", lo, hi, False, "monotone")


# MILP path


def _target_vars(cs: ConstraintSystem, gp: GroundProgram, q: EstimationQuery) -> Tuple[List[str], List[bool]]:
    aug = augment_choice_atoms(gp)
    u = cs.unrolling
    names, is_choice = [], []
    for atom_id in resolve_targets(q, aug.index):
        atom_id = int(atom_id)
        if atom_id < aug.base_size:
            names.append(u.x[u.t_hat][atom_id])
            is_choice.append(False)
        else:
            k, i = np.argwhere(aug.ids == atom_id)[0]
            names.append(u.y[k][i])
            is_choice.append(True)
    return names, is_choice


def _add(coeffs: Dict[str, float], name: str, c: float) -> None:
    coeffs[name] = coeffs.get(name, 0.0) + c


def query_objective(cs: ConstraintSystem, gp: GroundProgram, q: EstimationQuery) -> Tuple[Dict[str, float], float]:
    """Add the query's auxiliary encoding to cs and return its linear objective."""
    targets, is_choice = _target_vars(cs, gp, q)
    coeffs: Dict[str, float] = {}
    if q.aggregate == "sum":
        for name in targets:
            _add(coeffs, name, 1.0)
        return coeffs, 0.0
    if q.aggregate == "count":
        if not all(is_choice):
            raise ValidationError("count in the MILP path needs choice-atom targets")
        for name in targets:
            _add(coeffs, name, 1.0)
        return coeffs, 0.0
    if q.aggregate in ("min", "max"):
        return _extremum(cs, targets, q.aggregate), 0.0

    spec = q.linear
    for name, w in zip(targets, spec.weights(len(targets))):
        _add(coeffs, name, float(w))
    refs = {f"t{k}": name for k, name in enumerate(targets, 1)}
    for a in spec.aux:
        refs[a.name] = cs.add_variable(f"q_{a.name}", a.lb, a.ub, a.binary)
    for ref_coeffs, sense, rhs in spec.constraints:
        row: Dict[str, float] = {}
        for ref, c in ref_coeffs:
            if ref not in refs:
                raise ValidationError(f"linear query constraint references {ref} beyond {len(targets)} targets")
            _add(row, refs[ref], c)
        cs.add_constraint(row, sense, rhs, "query")
    for name, c in spec.c2:
        _add(coeffs, refs[name], c)
    return coeffs, spec.k


def _extremum(cs: ConstraintSystem, targets: List[str], kind: str) -> Dict[str, float]:
    if len(targets) == 1:
        return {targets[0]: 1.0}
    out = cs.add_variable("q_y2" if len(targets) == 2 else "q_m")
    if len(targets) == 2:
        y1 = cs.add_variable("q_y1", binary=True)
        b1, b2 = targets
        if kind == "max":
            cs.add_constraint({b1: 1, y1: 1, out: -1}, ">=", 0, "query")
            cs.add_constraint({b1: 1, out: -1}, "<=", 0, "query")
            cs.add_constraint({b2: 1, y1: -1, out: -1}, ">=", -1, "query")
            cs.add_constraint({b2: 1, out: -1}, "<=", 0, "query")
        else:
            cs.add_constraint({out: 1, b1: -1}, "<=", 0, "query")
            cs.add_constraint({out: 1, b2: -1}, "<=", 0, "query")
            cs.add_constraint({out: 1, b1: -1, y1: 1}, ">=", 0, "query")
            cs.add_constraint({out: 1, b2: -1, y1: -1}, ">=", -1, "query")
        return {out: 1.0}
    selectors = [cs.add_variable(f"q_s{k}", binary=True) for k in range(1, len(targets) + 1)]
    cs.add_constraint({s: 1 for s in selectors}, "=", 1, "query")
    for x, s in zip(targets, selectors):
        if kind == "max":
            cs.add_constraint({out: 1, x: -1}, ">=", 0, "query")
            cs.add_constraint({out: 1, x: -1, s: 1}, "<=", 1, "query")
        else:
            cs.add_constraint({out: 1, x: -1}, "<=", 0, "query")
            cs.add_constraint({out: 1, x: -1, s: -1}, ">=", -1, "query")
    return {out: 1.0}


def query_system(p, q: EstimationQuery, sn=None, *, t_hat: Optional[int] = None,
                 band: Optional[float] = None) -> ConstraintSystem:
    gp = as_ground(p, sn)
    cs = build_ilc(gp, compute_t_hat(gp) if t_hat is None else t_hat, band=band)
    coeffs, constant = query_objective(cs, gp, q)
    cs.set_objective(coeffs, "min", constant)
    return cs


def _optimum(cs: ConstraintSystem, sense: str) -> Solution:
    sol = solve(cs, sense)
    if sol.status == CAP_EXCEEDED:
        raise ResourceCapError(f"choice branching exceeded the cap {settings.BRANCH_CAP}")
    return sol


def range_linear_milp(p, q: EstimationQuery, sn=None, *, t_hat: Optional[int] = None) -> RangeAnswer:
    """Minimize and maximize the query objective over the strong-equilibrium MILP."""
    cs = query_system(p, q, sn, t_hat=t_hat)
    low = _optimum(cs, "min")
    if not low.feasible:
        return undefined("milp")
    high = _optimum(cs, "max")
    return RangeAnswer("defined", low.objective, high.objective, True, "milp",
                       {"glb": low.choice, "lub": high.choice})


def answer(p, q: EstimationQuery, method: str = "naive", sn=None) -> RangeAnswer:
    if method == "naive":
        return range_naive(p, q, sn)
    if method == "monotone":
        return range_monotone_vic2(p, q, sn)
    if method == "milp":
        return range_linear_milp(p, q, sn)
    raise ValidationError(f"unknown query method '{method}'")


# Query files


def _pairs(mapping: Mapping[str, float]) -> Tuple[Tuple[str, float], ...]:
    return tuple((str(k), float(v)) for k, v in mapping.items())


def load_query(text: str) -> EstimationQuery:
    """
    Read a .query.json file:
    {"aggregate": "sum", "targets": ["buyAsus^D(1)"],
     "linear": {"k": 1, "c1": [-1], "c2": {}, "aux": [], "constraints": []}}
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProgramSyntaxError(f"bad JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(data, dict):
        raise ValidationError("query file must hold a JSON object")
    try:
        linear = None
        if data.get("linear") is not None:
            spec = data["linear"]
            linear = LinearQuerySpec(
                float(spec.get("k", 0.0)),
                tuple(float(c) for c in spec.get("c1", ())),
                _pairs(spec.get("c2", {})),
                tuple(AuxVariable(str(a["name"]), float(a.get("lb", 0.0)), float(a.get("ub", 1.0)),
                                  bool(a.get("binary", False))) for a in spec.get("aux", ())),
                tuple((_pairs(c["coeffs"]), str(c["sense"]), float(c["rhs"])) for c in spec.get("constraints", ())),
            )
        return EstimationQuery(str(data["aggregate"]), tuple(str(t) for t in data["targets"]), linear)
    except KeyError as e:
        raise ValidationError(f"query file lacks field {e}") from None
    except (TypeError, ValueError, AttributeError) as e:
        raise ValidationError(f"bad query file: {e}") from None
