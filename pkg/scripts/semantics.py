# scripts/semantics.py
"""
Fixpoint semantics of ground GAPs and the coherence, strong-equilibrium and
entailment checks built on it.

The T operator is compiled once per ground program into numpy/scipy.sparse
arrays: constant heads, linear heads (identity, average, weighted sums) as a
sparse matrix product, max and gated-max heads via segmented reductions, and a
per-rule fallback for anything else.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix

import cgap_settings as settings
from cgap_errors import NonConvergenceError, NotAModelError, ValidationError
from cgap_model import (
    Apply, Atom, AVar, Const, FnKind, Interpretation, evaluate_expr, vc_rows_satisfied,
)
from grounder import GroundProgram, as_ground

log = logging.getLogger(__name__)


class _Kernel:
    """Vectorized evaluation of every ground rule of a program."""

    def __init__(self, gp: GroundProgram):
        self.n_atoms = len(gp.index)
        self.n_rules = len(gp.rules)
        self.heads = np.array([r.head for r in gp.rules], dtype=np.int64)

        const_rules, const_values = [], []
        lin_rules, lin_rows, lin_cols, lin_vals = [], [], [], []
        max_rules, max_atoms, max_starts, max_tau = [], [], [], []
        self.custom: List[Tuple[int, Callable[[np.ndarray], float]]] = []
        cond_rule, cond_atom, cond_value = [], [], []

        for k, rule in enumerate(gp.rules):
            for atom, c in rule.conditions:
                cond_rule.append(k)
                cond_atom.append(atom)
                cond_value.append(c)
            bound = {var: atom for atom, var in rule.body}
            ann = rule.annotation
            if isinstance(ann, Const):
                const_rules.append(k)
                const_values.append(ann.value)
                continue
            if isinstance(ann, AVar):
                lin_rows.append(len(lin_rules))
                lin_cols.append(bound[ann.name])
                lin_vals.append(1.0)
                lin_rules.append(k)
                continue
            fn = gp.functions.get(ann.fn)
            flat = all(isinstance(a, AVar) for a in ann.args)
            if flat and not ann.args and fn.kind in (FnKind.MAX, FnKind.AVERAGE, FnKind.GATED_MAX):
                const_rules.append(k)
                const_values.append(0.0)
            elif flat and fn.kind in (FnKind.LINEAR, FnKind.AVERAGE):
                weights = fn.coeffs if fn.kind is FnKind.LINEAR else [1.0 / len(ann.args)] * len(ann.args)
                row = len(lin_rules)
                for arg, w in zip(ann.args, weights):
                    lin_rows.append(row)
                    lin_cols.append(bound[arg.name])
                    lin_vals.append(w)
                lin_rules.append(k)
            elif flat and fn.kind in (FnKind.MAX, FnKind.GATED_MAX):
                max_starts.append(len(max_atoms))
                max_atoms.extend(bound[a.name] for a in ann.args)
                max_rules.append(k)
                max_tau.append(fn.tau if fn.kind is FnKind.GATED_MAX else -np.inf)
            else:
                self.custom.append((k, self._compile(ann, bound, gp)))

        self.const_rules = np.array(const_rules, dtype=np.int64)
        self.const_values = np.array(const_values, dtype=np.float64)
        self.lin_rules = np.array(lin_rules, dtype=np.int64)
        self.lin = csr_matrix((lin_vals, (lin_rows, lin_cols)), shape=(len(lin_rules), self.n_atoms))
        self.max_rules = np.array(max_rules, dtype=np.int64)
        self.max_atoms = np.array(max_atoms, dtype=np.int64)
        self.max_starts = np.array(max_starts, dtype=np.int64)
        self.max_tau = np.array(max_tau, dtype=np.float64)
        self.cond_rule = np.array(cond_rule, dtype=np.int64)
        self.cond_atom = np.array(cond_atom, dtype=np.int64)
        self.cond_value = np.array(cond_value, dtype=np.float64)

        # rules grouped by head for one segmented max per step
        self.head_order = np.argsort(self.heads, kind="stable")
        self.head_atoms, self.head_starts = np.unique(self.heads[self.head_order], return_index=True)

    @staticmethod
    def _compile(ann, bound, gp: GroundProgram) -> Callable[[np.ndarray], float]:
        items = list(bound.items())

        def evaluate(x: np.ndarray) -> float:
            return evaluate_expr(ann, {var: float(x[atom]) for var, atom in items}, gp.functions)

        return evaluate

    def rule_values(self, x: np.ndarray) -> np.ndarray:
        """Head value of every rule at x, before condition gating."""
        vals = np.zeros(self.n_rules)
        if self.const_rules.size:
            vals[self.const_rules] = self.const_values
        if self.lin_rules.size:
            vals[self.lin_rules] = self.lin @ x
        if self.max_rules.size:
            picked = x[self.max_atoms]
            maxima = np.maximum.reduceat(picked, self.max_starts)
            sums = np.add.reduceat(picked, self.max_starts)
            vals[self.max_rules] = np.where(sums >= self.max_tau - settings.EPS_EQ, maxima, 0.0)
        for k, fn in self.custom:
            vals[k] = fn(x)
        return np.clip(vals, 0.0, 1.0)

    def head_maxima(self, vals: np.ndarray) -> np.ndarray:
        """Per atom, the largest of the given rule values with that head (0 without rules)."""
        out = np.zeros(self.n_atoms)
        if self.n_rules:
            out[self.head_atoms] = np.maximum.reduceat(vals[self.head_order], self.head_starts)
        return out

    def active(self, x: np.ndarray) -> np.ndarray:
        """Rules whose constant conditions all hold at x."""
        if not self.cond_rule.size:
            return np.ones(self.n_rules, dtype=bool)
        failed = x[self.cond_atom] < self.cond_value - settings.EPS_EQ
        return np.bincount(self.cond_rule, weights=failed, minlength=self.n_rules) == 0


def kernel(gp: GroundProgram) -> _Kernel:
    compiled = gp.cache.get("kernel")
    if compiled is None:
        compiled = gp.cache["kernel"] = _Kernel(gp)
    return compiled


@dataclass(frozen=True, eq=False)
class GroundGap:
    """
    A plain GAP derived from a ground cGAP: its rules (optionally masked) plus
    bridge rules b(v):X <- a(v):X standing in for vertex choice instances.
    """

    program: GroundProgram
    bridge_src: np.ndarray
    bridge_dst: np.ndarray
    rule_mask: Optional[np.ndarray] = None

    @classmethod
    def plain(cls, gp: GroundProgram) -> "GroundGap":
        empty = np.zeros(0, dtype=np.int64)
        return cls(gp, empty, empty)

    @property
    def bridges(self) -> List[Tuple[int, int]]:
        return [(int(s), int(d)) for s, d in zip(self.bridge_src, self.bridge_dst)]

    @cached_property
    def distinct_targets(self) -> bool:
        return np.unique(self.bridge_dst).size == self.bridge_dst.size

    def rule_ids(self) -> List[int]:
        if self.rule_mask is None:
            return list(range(len(self.program.rules)))
        return [int(k) for k in np.flatnonzero(self.rule_mask)]

    def describe(self) -> List[str]:
        """Bridge rules as text, e.g. 'buyAsus^D(1) <- buyAsus^U(1)'."""
        text = self.program.index.text
        return [f"{text(d)} <- {text(s)}" for s, d in self.bridges]


def _as_gap(g: Union[GroundGap, GroundProgram]) -> GroundGap:
    return g if isinstance(g, GroundGap) else GroundGap.plain(g)


def _step(gap: GroundGap, x: np.ndarray) -> np.ndarray:
    k = kernel(gap.program)
    if k.n_rules:
        active = k.active(x)
        if gap.rule_mask is not None:
            active &= gap.rule_mask
        out = k.head_maxima(np.where(active, k.rule_values(x), 0.0))
    else:
        out = np.zeros(k.n_atoms)
    if gap.bridge_src.size:
        if gap.distinct_targets:
            out[gap.bridge_dst] = np.maximum(out[gap.bridge_dst], x[gap.bridge_src])
        else:
            np.maximum.at(out, gap.bridge_dst, x[gap.bridge_src])
    return out


def tp_step(gap: Union[GroundGap, GroundProgram], i: Interpretation) -> Interpretation:
    """One application of the T operator; VC instances are ignored unless bridged."""
    gap = _as_gap(gap)
    if i.index is not gap.program.index:
        raise ValidationError("interpretation belongs to another ground program")
    return Interpretation(i.index, _step(gap, i.values))


def iterate(gap: Union[GroundGap, GroundProgram]) -> Iterator[Interpretation]:
    """Successive iterates T^1, T^2, ... from the bottom interpretation."""
    gap = _as_gap(gap)
    x = np.zeros(len(gap.program.index))
    while True:
        x = _step(gap, x)
        yield Interpretation(gap.program.index, x)


@dataclass(frozen=True)
class FixpointReport:
    result: Interpretation
    iterations: int
    converged: bool
    residual: float


def minimal_model(gap: Union[GroundGap, GroundProgram], max_iterations: Optional[int] = None,
                  tol: Optional[float] = None, start: Optional[np.ndarray] = None) -> FixpointReport:
    """
    Least fixpoint of the T operator by iteration from bottom, or from start.

    Args:
        gap: Ground GAP (or a ground program, whose VC instances are then dropped)
        max_iterations: Iteration cap. Defaults to 10*|atoms| + 100
        tol: Residual at which iteration stops. Defaults to CGAP_EPS_FIX
        start: Values to iterate from instead of all zeros. Must lie below the least
            fixpoint and below their own T image, or the result is some other fixpoint

    Returns:
        FixpointReport; converged is False when the cap was hit first
    """
    gap = _as_gap(gap)
    n = len(gap.program.index)
    cap = settings.k_max(n) if max_iterations is None else max_iterations
    tol = settings.EPS_FIX if tol is None else tol
    x = np.zeros(n) if start is None else np.asarray(start, dtype=np.float64)
    if x.shape != (n,):
        raise ValidationError(f"start holds {x.size} values for {n} atoms")
    residual = 0.0
    for step in range(1, cap + 1):
        nx = _step(gap, x)
        residual = float(np.max(np.abs(nx - x))) if n else 0.0
        x = nx
        if residual <= tol:
            return FixpointReport(Interpretation(gap.program.index, x), step, True, residual)
    log.warning("fixpoint did not converge after %d iterations (residual %.3g)", cap, residual)
    return FixpointReport(Interpretation(gap.program.index, x), cap, False, residual)


def least_model(gap: Union[GroundGap, GroundProgram], start: Optional[np.ndarray] = None) -> Interpretation:
    """minimal_model(...).result, raising NonConvergenceError when the cap is hit."""
    report = minimal_model(gap, start=start)
    if not report.converged:
        raise NonConvergenceError(f"fixpoint did not converge within {report.iterations} iterations "
                                  f"(residual {report.residual:.3g}); the program looks non-finitary",
                                  report.iterations, report.residual)
    return report.result


def with_bridges(gp: GroundProgram, choice: np.ndarray, rule_mask: Optional[np.ndarray] = None) -> GroundGap:
    """GAP with one bridge per vertex for the 1-based options in choice."""
    rows = np.arange(len(gp.vc))
    cols = np.asarray(choice, dtype=np.int64) - 1
    return GroundGap(gp, gp.utility_ids[rows, cols], gp.decision_ids[rows, cols], rule_mask)


def coherence_transform(gp: GroundProgram, i: Interpretation) -> GroundGap:
    """Replace each VC instance by bridges for its matched pairs with positive utility."""
    _check_index(gp, i)
    decisions = i.values[gp.decision_ids]
    utilities = i.values[gp.utility_ids]
    matched = (utilities > settings.EPS_EQ) & (np.abs(utilities - decisions) <= settings.EPS_EQ)
    return GroundGap(gp, gp.utility_ids[matched], gp.decision_ids[matched])


def _check_index(gp: GroundProgram, i: Interpretation) -> None:
    if i.index is not gp.index:
        raise ValidationError("interpretation belongs to another ground program")


def is_model(gp: GroundProgram, i: Interpretation) -> bool:
    """i satisfies every ground GAP rule and every VC instance."""
    _check_index(gp, i)
    if np.any(_step(GroundGap.plain(gp), i.values) > i.values + settings.EPS_EQ):
        return False
    return bool(np.all(vc_rows_satisfied(i.values[gp.decision_ids], i.values[gp.utility_ids])))


def is_coherent_model(gp: GroundProgram, i: Interpretation, tol: Optional[float] = None) -> bool:
    """
    True iff i is the minimal model of its own coherence transform.

    Raises:
        NotAModelError: i is not a model of gp
    """
    if not is_model(gp, i):
        raise NotAModelError("interpretation is not a model of the program")
    return least_model(coherence_transform(gp, i)).allclose(i, tol)


def sum_max_rows(gp: GroundProgram, values: np.ndarray) -> np.ndarray:
    """Per vertex: sum of decisions equals the largest utility."""
    decisions = values[gp.decision_ids]
    utilities = values[gp.utility_ids]
    if not len(gp.vc):
        return np.zeros(0, dtype=bool)
    return np.abs(decisions.sum(axis=1) - utilities.max(axis=1)) <= settings.EPS_EQ


def is_strong_equilibrium(gp: GroundProgram, i: Interpretation) -> bool:
    try:
        if not is_coherent_model(gp, i):
            return False
    except NotAModelError:
        return False
    return bool(np.all(sum_max_rows(gp, i.values)))


@dataclass(frozen=True)
class Entailment:
    holds: bool
    vacuous: bool
    method: str

    def __bool__(self) -> bool:
        return self.holds


def entails(p, aa: Tuple[Union[Atom, str], float], method: str = "enumerate", sn=None) -> Entailment:
    """
    Does every strong equilibrium satisfy the annotated atom?

    Args:
        p: Program or ground program
        aa: (atom, annotation) pair
        method: 'enumerate' (exhaustive) or 'vic2' (extremal equilibria of a VIC2 program)
        sn: Network used when p still needs grounding

    Returns:
        Entailment, vacuous when no strong equilibrium exists
    """
    gp = as_ground(p, sn)
    atom, mu = aa
    atom_id = gp.index.id_of(atom)
    floor = mu - settings.EPS_EQ
    if method == "enumerate":
        from equilibria import enumerate_strong_equilibria

        found = enumerate_strong_equilibria(gp)
        if not found:
            return Entailment(True, True, method)
        return Entailment(all(eq.model.values[atom_id] >= floor for eq in found), False, method)
    if method == "vic2":
        from vic import extremal_models

        ext = extremal_models(gp)
        predicate = gp.index.atom(atom_id).predicate
        if predicate not in ext.graph.pred_sets[0] | ext.graph.pred_sets[1]:
            raise ValidationError(f"{predicate} lies outside both choice predicate sets; use method=enumerate")
        lowest = min(ext.max_model.values[atom_id], ext.min_model.values[atom_id])
        return Entailment(bool(lowest >= floor), False, method)
    raise ValidationError(f"unknown entailment method '{method}'")
