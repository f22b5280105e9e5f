# scripts/milp_solver.py
"""
Linear constraint systems and the solvers behind the MILP encodings.

A ConstraintSystem is a plain list of named variables and linear rows. When
it carries an Unrolling (the fixpoint iterations of a ground program) the
internal solver branches only over the choice binaries y: every other
unrolling variable follows by forward propagation, and whatever is left
(query auxiliaries) goes to scipy.optimize.milp.
"""
import logging
import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_matrix

import cgap_settings as settings
from cgap_errors import SolverError, ValidationError
from cgap_model import Interpretation
from grounder import GroundProgram
from semantics import kernel

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
CAP_EXCEEDED = "cap-exceeded"

SENSES = (">=", "<=", "=")


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = 1.0
    binary: bool = False


@dataclass
class Constraint:
    coeffs: Dict[str, float]
    sense: str
    rhs: float
    tag: str = ""
    name: str = ""

    def activity(self, values: Mapping[str, float]) -> float:
        return sum(c * values[v] for v, c in self.coeffs.items())

    def holds(self, values: Mapping[str, float], tol: Optional[float] = None) -> bool:
        tol = settings.FEAS_TOL if tol is None else tol
        lhs = self.activity(values)
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        return abs(lhs - self.rhs) <= tol


@dataclass
class Solution:
    status: str
    assignment: Dict[str, float] = field(default_factory=dict)
    objective: Optional[float] = None
    choice: Optional[Tuple[int, ...]] = None
    model: Optional[Interpretation] = None

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name: str) -> float:
        return self.assignment[name]


def var_z(t: int, k: int) -> str:
    return f"z_{t}_r{k}"


def var_u(t: int, k: int) -> str:
    return f"u_{t}_r{k}"


def var_v(t: int, k: int, j: int) -> str:
    return f"v_{t}_r{k}_{j}"


def var_v_all(t: int, k: int) -> str:
    return f"v_{t}_r{k}_all"


def var_w(t: int, k: int) -> str:
    return f"w_{t}_r{k}"


def var_s(t: int, k: int, j: int) -> str:
    return f"s_{t}_r{k}_{j}"


def var_g(t: int, k: int) -> str:
    return f"g_{t}_r{k}"


def var_h(t: int, k: int) -> str:
    return f"h_{t}_r{k}"


def var_q(t: int, row: int, i: int) -> str:
    return f"q_{t}_vc{row}_{i}"


def var_q_pick(t: int, row: int, i: int) -> str:
    return f"u_{t}_vc{row}_{i}"


@dataclass
class RuleEncoding:
    """How a ground rule's head value is written linearly."""

    index: int
    kind: str  # const | linear | max | gated
    const: float = 0.0
    weights: Dict[int, float] = field(default_factory=dict)
    args: Tuple[int, ...] = ()
    tau: Optional[float] = None
    conditions: Tuple[Tuple[int, float], ...] = ()


@dataclass
class Unrolling:
    """T-hat fixpoint iterations of a ground program laid out as variables."""

    program: GroundProgram
    t_hat: int
    strong: bool
    x: List[List[str]]
    y: List[List[str]]
    rules: List[RuleEncoding]
    # (vertex row, option, decision atom, utility atom) for decision atoms that head rules
    bridges: List[Tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def y_names(self) -> List[str]:
        return [name for row in self.y for name in row]

    def choice_of(self, assignment: Mapping[str, float]) -> Tuple[int, ...]:
        return tuple(int(np.argmax([assignment[n] for n in row])) + 1 for row in self.y)

    def model_of(self, assignment: Mapping[str, float], t: Optional[int] = None) -> Interpretation:
        names = self.x[self.t_hat if t is None else t]
        return Interpretation(self.program.index, np.clip([assignment[n] for n in names], 0.0, 1.0))

    def propagate(self, choice: Sequence[int]) -> Dict[str, float]:
        """Values of every unrolling variable once the choice binaries are fixed."""
        gp = self.program
        k = kernel(gp)
        eps = settings.EPS_EQ
        n = len(gp.index)
        rows = np.arange(len(gp.vc))
        chosen = np.zeros(gp.decision_ids.shape, dtype=bool)
        chosen[rows, np.asarray(choice, dtype=np.int64) - 1] = True
        bridge_dst, bridge_src = gp.decision_ids[chosen], gp.utility_ids[chosen]

        values: Dict[str, float] = dict.fromkeys(self.x[0], 0.0)
        x_prev = np.zeros(n)
        for t in range(1, self.t_hat + 1):
            z = np.zeros(k.n_rules)
            if k.n_rules:
                z = np.where(k.active(x_prev), k.rule_values(x_prev), 0.0)
            x = k.head_maxima(z)
            # chosen decisions: max of their own rules and the bridge from the utility
            x[bridge_dst] = np.maximum(x[bridge_dst], x[bridge_src])
            values.update(zip(self.x[t], x.tolist()))

            picked = set()
            for enc in self.rules:
                r = enc.index
                values[var_z(t, r)] = float(z[r])
                head = int(k.heads[r])
                take = head not in picked and z[r] >= x[head] - eps
                if take:
                    picked.add(head)
                values[var_u(t, r)] = 1.0 if take else 0.0
                if enc.conditions:
                    flags = [x_prev[a] >= c - eps for a, c in enc.conditions]
                    for j, flag in enumerate(flags, 1):
                        values[var_v(t, r, j)] = 1.0 if flag else 0.0
                    values[var_v_all(t, r)] = 1.0 if all(flags) else 0.0
                if enc.kind in ("max", "gated"):
                    picked_args = x_prev[list(enc.args)]
                    best = int(np.argmax(picked_args))
                    w = float(picked_args[best])
                    values[var_w(t, r)] = w
                    for j in range(len(enc.args)):
                        values[var_s(t, r, j + 1)] = 1.0 if j == best else 0.0
                    if enc.kind == "gated":
                        g = 1.0 if picked_args.sum() >= enc.tau - eps else 0.0
                        values[var_g(t, r)] = g
                        values[var_h(t, r)] = w * g
            for row, i, b, a in self.bridges:
                q = float(x[a]) if chosen[row, i - 1] else 0.0
                take = b not in picked and q >= x[b] - eps
                if take:
                    picked.add(b)
                values[var_q(t, row, i)] = q
                values[var_q_pick(t, row, i)] = 1.0 if take else 0.0
            x_prev = x

        for row, option in zip(self.y, choice):
            for i, name in enumerate(row, 1):
                values[name] = 1.0 if i == option else 0.0
        return values


class ConstraintSystem:
    """Variables, linear rows and an optional objective."""

    def __init__(self):
        self.variables: Dict[str, Variable] = {}
        self.constraints: List[Constraint] = []
        self.objective: Dict[str, float] = {}
        self.objective_constant = 0.0
        self.sense: Optional[str] = None
        self.unrolling: Optional[Unrolling] = None
        self._compiled = None

    def add_variable(self, name: str, lb: float = 0.0, ub: float = 1.0, binary: bool = False) -> str:
        known = self.variables.get(name)
        if known is not None:
            if (known.lb, known.ub, known.binary) != (lb, ub, binary):
                raise ValidationError(f"variable {name} declared twice with different bounds")
            return name
        if lb > ub:
            raise ValidationError(f"variable {name} has empty bounds [{lb}, {ub}]")
        self.variables[name] = Variable(name, lb, ub, binary)
        return name

    def add_constraint(self, coeffs: Mapping[str, float], sense: str, rhs: float, tag: str = "") -> Constraint:
        if sense not in SENSES:
            raise ValidationError(f"unknown constraint sense '{sense}'")
        merged = {v: float(c) for v, c in coeffs.items() if c != 0}
        if not merged:
            raise ValidationError(f"constraint {tag or len(self.constraints) + 1} has no variables")
        unknown = [v for v in merged if v not in self.variables]
        if unknown:
            raise ValidationError(f"constraint references undeclared variables {unknown[:5]}")
        row = Constraint(merged, sense, float(rhs), tag, f"c{len(self.constraints) + 1}")
        self.constraints.append(row)
        return row

    def set_objective(self, coeffs: Mapping[str, float], sense: Optional[str], constant: float = 0.0) -> None:
        if sense not in (None, "min", "max"):
            raise ValidationError(f"unknown objective sense '{sense}'")
        unknown = [v for v in coeffs if v not in self.variables]
        if unknown:
            raise ValidationError(f"objective references undeclared variables {unknown[:5]}")
        self.objective = {v: float(c) for v, c in coeffs.items() if c != 0}
        self.objective_constant = float(constant)
        self.sense = sense

    def copy(self) -> "ConstraintSystem":
        out = ConstraintSystem()
        out.variables = dict(self.variables)
        out.constraints = list(self.constraints)
        out.objective = dict(self.objective)
        out.objective_constant = self.objective_constant
        out.sense = self.sense
        out.unrolling = self.unrolling
        return out

    def tagged(self, tag: str) -> List[Constraint]:
        return [c for c in self.constraints if c.tag == tag]

    def evaluate(self, assignment: Mapping[str, float]) -> float:
        return self.objective_constant + sum(c * assignment[v] for v, c in self.objective.items())

    def violated(self, assignment: Mapping[str, float], tol: Optional[float] = None) -> List[Constraint]:
        return [c for c in self.constraints if not c.holds(assignment, tol)]

    def compiled(self) -> "_Compiled":
        key = (len(self.variables), len(self.constraints))
        if self._compiled is None or self._compiled.key != key:
            self._compiled = _Compiled(self, key)
        return self._compiled

    def __repr__(self) -> str:
        return f"ConstraintSystem(variables={len(self.variables)}, constraints={len(self.constraints)})"


class _Compiled:
    """Sparse row matrix of a constraint system."""

    def __init__(self, cs: ConstraintSystem, key):
        self.key = key
        self.names = list(cs.variables)
        self.position = {n: i for i, n in enumerate(self.names)}
        rows, cols, vals = [], [], []
        lo, hi = [], []
        for r, c in enumerate(cs.constraints):
            for v, a in c.coeffs.items():
                rows.append(r)
                cols.append(self.position[v])
                vals.append(a)
            lo.append(-np.inf if c.sense == "<=" else c.rhs)
            hi.append(np.inf if c.sense == ">=" else c.rhs)
        self.matrix = csr_matrix((vals, (rows, cols)), shape=(len(cs.constraints), len(self.names)))
        self.lo = np.array(lo, dtype=np.float64)
        self.hi = np.array(hi, dtype=np.float64)
        self.lb = np.array([cs.variables[n].lb for n in self.names], dtype=np.float64)
        self.ub = np.array([cs.variables[n].ub for n in self.names], dtype=np.float64)
        self.binary = np.array([cs.variables[n].binary for n in self.names], dtype=bool)
        self.objective = np.zeros(len(self.names))
        for v, a in cs.objective.items():
            self.objective[self.position[v]] = a


def _objective_vector(cs: ConstraintSystem, compiled: _Compiled, sense: str) -> np.ndarray:
    if sense == "feasibility":
        return np.zeros(len(compiled.names))
    c = np.zeros(len(compiled.names))
    for v, a in cs.objective.items():
        c[compiled.position[v]] = a
    return -c if sense == "max" else c


def _complete(cs: ConstraintSystem, fixed: Mapping[str, float], sense: str) -> Optional[Solution]:
    """Check a partial assignment and optimize whatever variables it leaves open."""
    comp = cs.compiled()
    tol = settings.FEAS_TOL
    fixed_mask = np.array([n in fixed for n in comp.names], dtype=bool)
    vec = np.array([fixed.get(n, 0.0) for n in comp.names], dtype=np.float64)
    if np.any(vec[fixed_mask] < comp.lb[fixed_mask] - tol) or np.any(vec[fixed_mask] > comp.ub[fixed_mask] + tol):
        return None

    free_cols = np.flatnonzero(~fixed_mask)
    if free_cols.size:
        touching = comp.matrix[:, free_cols].getnnz(axis=1) > 0
    else:
        touching = np.zeros(comp.matrix.shape[0], dtype=bool)
    activity = comp.matrix @ vec
    closed = ~touching
    if np.any(activity[closed] < comp.lo[closed] - tol) or np.any(activity[closed] > comp.hi[closed] + tol):
        return None

    if free_cols.size:
        sub = comp.matrix[touching][:, free_cols]
        offset = activity[touching]
        c = _objective_vector(cs, comp, sense)[free_cols]
        res = _run_milp(c, comp.binary[free_cols], comp.lb[free_cols], comp.ub[free_cols],
                        sub, comp.lo[touching] - offset, comp.hi[touching] - offset)
        if res is None:
            return None
        vec[free_cols] = res
    assignment = dict(zip(comp.names, vec.tolist()))
    objective = cs.evaluate(assignment) if sense != "feasibility" else None
    return Solution(OPTIMAL, assignment, objective)


def _run_milp(c, binary, lb, ub, a, lo, hi) -> Optional[np.ndarray]:
    constraints = [LinearConstraint(a, lo, hi)] if a.shape[0] else None
    res = milp(c, integrality=binary.astype(int), bounds=Bounds(lb, ub), constraints=constraints)
    if res.status == 0:
        x = res.x.copy()
        x[binary] = np.round(x[binary])
        return x
    if res.status == 2:
        return None
    raise SolverError(f"milp solver stopped with status {res.status}: {res.message}", [str(res.message)])


def solve(cs: ConstraintSystem, sense: str = "feasibility") -> Solution:
    """
    Solve a constraint system.

    Args:
        cs: The system
        sense: 'min' or 'max' of cs.objective, or 'feasibility' (first feasible point)

    Returns:
        Solution with status optimal, infeasible or cap-exceeded
    """
    if sense not in ("min", "max", "feasibility"):
        raise ValidationError(f"unknown solve sense '{sense}'")
    u = cs.unrolling
    if u is None:
        found = _complete(cs, {}, sense)
        return found if found is not None else Solution(INFEASIBLE)

    options = len(u.y[0]) if u.y else 1
    leaves = options ** len(u.y)
    if leaves > settings.BRANCH_CAP:
        log.warning("%d choice leaves exceed the branch cap %d", leaves, settings.BRANCH_CAP)
        return Solution(CAP_EXCEEDED)

    best: Optional[Solution] = None
    for choice in itertools.product(range(1, options + 1), repeat=len(u.y)):
        found = _complete(cs, u.propagate(choice), sense)
        if found is None:
            continue
        found.choice = tuple(choice)
        found.model = u.model_of(found.assignment)
        if sense == "feasibility":
            return found
        if best is None or (found.objective > best.objective if sense == "max" else found.objective < best.objective):
            best = found
    return best if best is not None else Solution(INFEASIBLE)
