# scripts/milp.py
"""
MILP encoding of strong equilibria.

build_ilc unrolls T-hat applications of the fixpoint operator into variables
x_t_<atom> and z_t_r<k>, adds the max selectors (Type 1), the rule activation
gates (Type 2), the per-vertex choice binaries (Type 3) and, at the last
iteration, the strong-equilibrium rows (Type 4).
"""
import re
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import cgap_settings as settings
from cgap_errors import NonConvergenceError, ResourceCapError, ValidationError
from cgap_model import Apply, AVar, Const, FnKind
from grounder import GroundProgram, GroundRule, as_ground
from milp_solver import (
    CAP_EXCEEDED, INFEASIBLE, ConstraintSystem, Constraint, RuleEncoding, Solution, Unrolling,
    solve, var_g, var_h, var_q, var_q_pick, var_s, var_u, var_v, var_v_all, var_w, var_z,
)

log = logging.getLogger(__name__)

ORACLE_TOL = 1e-7

_UNSAFE = re.compile(r"[^A-Za-z0-9_]+")


def sanitize(text: str) -> str:
    """LP-safe fragment of an atom or vertex name."""
    return _UNSAFE.sub("_", text).strip("_") or "_"


def atom_names(gp: GroundProgram) -> List[str]:
    """Unique LP name fragment per atom id, e.g. buyAsus^D(1) -> buyAsus_D_1."""
    names, seen = [], set()
    for atom_id, atom in enumerate(gp.index):
        name = sanitize(str(atom))
        if name in seen:
            name = f"{name}_{atom_id}"
        seen.add(name)
        names.append(name)
    return names


def _encode_rule(gp: GroundProgram, k: int, rule: GroundRule) -> RuleEncoding:
    conditions = tuple((a, c) for a, c in rule.conditions if c > 0)
    ann = rule.annotation
    bound = {var: atom for atom, var in rule.body}
    if isinstance(ann, Const):
        return RuleEncoding(k, "const", const=ann.value, conditions=conditions)
    if isinstance(ann, AVar):
        return RuleEncoding(k, "linear", weights={bound[ann.name]: 1.0}, conditions=conditions)
    if not isinstance(ann, Apply) or not all(isinstance(a, AVar) for a in ann.args):
        raise ValidationError(f"rule for {gp.index.text(rule.head)}: nested annotation expressions "
                              "have no linear encoding")
    fn = gp.functions.get(ann.fn)
    if not fn.linearizable:
        raise ValidationError(f"annotation function {fn.name} ({fn.kind.value}) has no linear encoding")
    args = [bound[a.name] for a in ann.args]
    if not args:
        return RuleEncoding(k, "const", const=0.0, conditions=conditions)
    if fn.kind in (FnKind.LINEAR, FnKind.AVERAGE):
        coeffs = fn.coeffs if fn.kind is FnKind.LINEAR else [1.0 / len(args)] * len(args)
        weights: Dict[int, float] = {}
        for atom, alpha in zip(args, coeffs):
            weights[atom] = weights.get(atom, 0.0) + alpha
        return RuleEncoding(k, "linear", weights=weights, conditions=conditions)
    if fn.kind is FnKind.MAX:
        return RuleEncoding(k, "max", args=tuple(args), conditions=conditions)
    return RuleEncoding(k, "gated", args=tuple(args), tau=fn.tau, conditions=conditions)


def build_ilc(p, t_hat: int, sn=None, *, strong: bool = True, band: Optional[float] = None) -> ConstraintSystem:
    """
    Constraint system whose feasible points are the strong equilibria of p.

    Args:
        p: Program or ground program with linearizable annotation functions
        t_hat: Number of unrolled fixpoint iterations
        sn: Network used when p still needs grounding
        strong: Add the strong-equilibrium rows at t_hat (off for the T-hat oracle)
        band: Gap below a condition constant that counts as failed. Defaults to
            CGAP_EPS_EQ, which matches the fixpoint evaluation; external solvers
            get CGAP_EPS_MILP

    Returns:
        ConstraintSystem with its Unrolling attached
    """
    if t_hat < 1:
        raise ValidationError(f"t_hat must be at least 1, got {t_hat}")
    gp = as_ground(p, sn)
    encodings = [_encode_rule(gp, k, rule) for k, rule in enumerate(gp.rules)]
    eps = settings.EPS_EQ if band is None else max(band, settings.EPS_EQ)
    cs = ConstraintSystem()

    names = atom_names(gp)
    x = [[f"x_{t}_{name}" for name in names] for t in range(t_hat + 1)]
    for t, row in enumerate(x):
        for name in row:
            cs.add_variable(name, 0.0, 0.0 if t == 0 else 1.0)
    for t in range(1, t_hat + 1):
        for enc in encodings:
            r = enc.index
            cs.add_variable(var_z(t, r))
            cs.add_variable(var_u(t, r), binary=True)
            for j in range(1, len(enc.conditions) + 1):
                cs.add_variable(var_v(t, r, j), binary=True)
            if enc.conditions:
                cs.add_variable(var_v_all(t, r), binary=True)
            if enc.kind in ("max", "gated"):
                cs.add_variable(var_w(t, r))
                for j in range(1, len(enc.args) + 1):
                    cs.add_variable(var_s(t, r, j), binary=True)
            if enc.kind == "gated":
                cs.add_variable(var_g(t, r), binary=True)
                cs.add_variable(var_h(t, r))
    y = [[f"y_{sanitize(v)}_{i}" for i in range(1, gp.size + 1)] for v in gp.vertices]
    for row in y:
        for name in row:
            cs.add_variable(name, binary=True)

    # decision atoms heading rules of their own: chosen utility joins their max as a bridge
    ruled = [(row, i, int(b), int(a))
             for row, (decisions, utilities) in enumerate(zip(gp.decision_ids, gp.utility_ids))
             for i, (b, a) in enumerate(zip(decisions, utilities), 1) if gp.rules_for(int(b))]
    bridges_into: Dict[int, List[Tuple[int, int]]] = {}
    for row, i, b, _ in ruled:
        bridges_into.setdefault(b, []).append((row, i))
        for t in range(1, t_hat + 1):
            cs.add_variable(var_q(t, row, i))
            cs.add_variable(var_q_pick(t, row, i), binary=True)

    vc_heads = set(gp.decision_ids.ravel().tolist())
    for t in range(1, t_hat + 1):
        # Type 1: x_A is the largest head value among rules(A) and bridges into A
        for atom in range(len(gp.index)):
            rules = gp.rules_for(atom)
            xa = x[t][atom]
            if not rules:
                if atom not in vc_heads:
                    cs.add_constraint({xa: 1}, "=", 0, "type1")
                continue
            candidates = [(var_z(t, r), var_u(t, r)) for r in rules]
            candidates += [(var_q(t, row, i), var_q_pick(t, row, i)) for row, i in bridges_into.get(atom, ())]
            for value, pick in candidates:
                cs.add_constraint({value: 1, xa: -1, pick: -1}, ">=", -1, "type1")
                cs.add_constraint({xa: 1, value: -1}, ">=", 0, "type1")
            cs.add_constraint({pick: 1 for _, pick in candidates}, "=", 1, "type1")

        # bridge value: the utility when its option is chosen, else 0
        for row, i, _, a in ruled:
            q, yi, xu = var_q(t, row, i), y[row][i - 1], x[t][a]
            cs.add_constraint({xu: 1, q: -1}, ">=", 0, "type1")
            cs.add_constraint({yi: 1, q: -1}, ">=", 0, "type1")
            cs.add_constraint({q: 1, xu: -1, yi: -1}, ">=", -1, "type1")

        # Type 2: z equals the head value when every condition held at t-1, else 0
        for enc in encodings:
            _type2(cs, enc, t, x[t - 1], eps)

        # Type 3: exactly one option per vertex; chosen decision copies its utility
        for row, decisions, utilities in zip(y, gp.decision_ids, gp.utility_ids):
            for yi, b, a in zip(row, decisions, utilities):
                xb, xa = x[t][int(b)], x[t][int(a)]
                cs.add_constraint({xb: 1, xa: -1, yi: -1}, ">=", -1, "type3")
                if int(b) not in bridges_into or (strong and t == t_hat):
                    cs.add_constraint({xa: 1, xb: -1, yi: -1}, ">=", -1, "type3")
                cs.add_constraint({xb: 1, yi: 1}, ">=", 0, "type3")
                cs.add_constraint({xb: -1, yi: 1}, ">=", 0, "type3")
    for row in y:
        cs.add_constraint({yi: 1 for yi in row}, "=", 1, "type3")

    # Type 4: the chosen decision is at least every utility of its vertex
    if strong:
        for decisions, utilities in zip(gp.decision_ids, gp.utility_ids):
            for a in utilities:
                coeffs = {x[t_hat][int(b)]: 1.0 for b in decisions}
                coeffs[x[t_hat][int(a)]] = coeffs.get(x[t_hat][int(a)], 0.0) - 1.0
                cs.add_constraint(coeffs, ">=", 0, "type4")

    cs.unrolling = Unrolling(gp, t_hat, strong, x, y, encodings, ruled)
    log.debug("built %r for t_hat=%d", cs, t_hat)
    return cs


def _head_value(cs: ConstraintSystem, enc: RuleEncoding, t: int, x_prev: Sequence[str], eps: float):
    """Linear form f = const + sum(coeffs) of a rule's head value at iteration t."""
    r = enc.index
    if enc.kind == "const":
        return {}, enc.const
    if enc.kind == "linear":
        return {x_prev[a]: w for a, w in enc.weights.items()}, 0.0

    w = var_w(t, r)
    selectors = [var_s(t, r, j) for j in range(1, len(enc.args) + 1)]
    for a, s in zip(enc.args, selectors):
        cs.add_constraint({w: 1, x_prev[a]: -1}, ">=", 0, "type2")
        cs.add_constraint({x_prev[a]: 1, w: -1, s: -1}, ">=", -1, "type2")
    cs.add_constraint({s: 1 for s in selectors}, "=", 1, "type2")
    if enc.kind == "max":
        return {w: 1.0}, 0.0

    g, h = var_g(t, r), var_h(t, r)
    big_m = max(len(enc.args), enc.tau) + 1
    total: Dict[str, float] = {}
    for a in enc.args:
        total[x_prev[a]] = total.get(x_prev[a], 0.0) + 1.0
    cs.add_constraint({**total, g: -big_m}, ">=", enc.tau - settings.EPS_EQ - big_m, "type2")
    cs.add_constraint({**total, g: -big_m}, "<=", enc.tau - eps, "type2")
    cs.add_constraint({h: 1, w: -1}, "<=", 0, "type2")
    cs.add_constraint({h: 1, g: -1}, "<=", 0, "type2")
    cs.add_constraint({h: 1, w: -1, g: -1}, ">=", -1, "type2")
    return {h: 1.0}, 0.0


def _type2(cs: ConstraintSystem, enc: RuleEncoding, t: int, x_prev: Sequence[str], eps: float) -> None:
    r = enc.index
    z = var_z(t, r)
    f, const = _head_value(cs, enc, t, x_prev, eps)
    if not enc.conditions:
        cs.add_constraint({z: 1, **{v: -c for v, c in f.items()}}, "=", const, "type2")
        return
    gates = [var_v(t, r, j) for j in range(1, len(enc.conditions) + 1)]
    gate = var_v_all(t, r)
    for (atom, c), v in zip(enc.conditions, gates):
        cs.add_constraint({v: 1, x_prev[atom]: -1}, ">=", eps - c, "type2")
        cs.add_constraint({x_prev[atom]: 1, v: -1}, ">=", c - settings.EPS_EQ - 1, "type2")
        cs.add_constraint({v: 1, gate: -1}, ">=", 0, "type2")
    cs.add_constraint({gate: 1, **{v: -1 for v in gates}}, ">=", 1 - len(gates), "type2")
    cs.add_constraint({z: -1, gate: 1}, ">=", 0, "type2")
    minus_f = {v: -c for v, c in f.items()}
    cs.add_constraint(_merge({z: 1, gate: -1}, minus_f), ">=", -1 + const, "type2")
    cs.add_constraint(_merge({z: -1, gate: -1}, f), ">=", -1 - const, "type2")


def _merge(a: Dict[str, float], b: Dict[str, float]) -> Dict[str, float]:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + v
    return out


def set_fixpoint_objective(cs: ConstraintSystem) -> None:
    """Objective sum_A x_A at the last iteration minus the one before."""
    u = cs.unrolling
    last, before = u.x[u.t_hat], u.x[u.t_hat - 1]
    coeffs: Dict[str, float] = {}
    for a, b in zip(last, before):
        coeffs[a] = coeffs.get(a, 0.0) + 1.0
        coeffs[b] = coeffs.get(b, 0.0) - 1.0
    cs.set_objective(coeffs, "max")


def oracle(p, t_bar: int, sn=None) -> bool:
    """True when no choice branch still changes between iterations t_bar and t_bar + 1."""
    cs = build_ilc(p, t_bar + 1, sn, strong=False)
    set_fixpoint_objective(cs)
    sol = solve(cs, "max")
    if sol.status == CAP_EXCEEDED:
        raise ResourceCapError(f"T-hat oracle at {t_bar} exceeded the branch cap {settings.BRANCH_CAP}")
    return sol.status == INFEASIBLE or sol.objective <= ORACLE_TOL


def compute_t_hat(p, delta: int = 1, sn=None) -> int:
    """
    Smallest number of iterations after which no choice branch changes.

    Steps by delta until the oracle holds, then bisects the last interval.

    Raises:
        NonConvergenceError: the cap of 10 iterations per atom was passed
    """
    if delta < 1:
        raise ValidationError(f"delta must be at least 1, got {delta}")
    gp = as_ground(p, sn)
    cap = settings.t_hat_cap(len(gp.index))
    memo: Dict[int, bool] = {}

    def holds(t: int) -> bool:
        if t not in memo:
            memo[t] = oracle(gp, t)
        return memo[t]

    t_bar = delta
    while not holds(t_bar):
        t_bar += delta
        if t_bar > cap:
            raise NonConvergenceError(f"no T-hat up to {cap}; the program looks non-finitary", t_bar, float("nan"))
    low, high = t_bar - delta, t_bar
    while low < high - 1:
        mid = (low + high) // 2
        if holds(mid):
            high = mid
        else:
            low = mid
    log.debug("T-hat = %d after %d oracle calls", high, len(memo))
    return high


def no_good_cut(cs: ConstraintSystem, sol: Solution) -> Constraint:
    """Row excluding exactly the choice binaries of sol."""
    coeffs: Dict[str, float] = {}
    ones = 0
    for name in cs.unrolling.y_names:
        if sol.assignment[name] > 0.5:
            coeffs[name] = -1.0
            ones += 1
        else:
            coeffs[name] = 1.0
    return cs.add_constraint(coeffs, ">=", 1 - ones, "cut")


def enumerate_se_milp(p, sn=None, *, t_hat: Optional[int] = None, limit: Optional[int] = None,
                      cs: Optional[ConstraintSystem] = None) -> List[Solution]:
    """
    All strong equilibria: solve, record, cut the found choice vector, repeat.

    Args:
        p: Program or ground program
        sn: Network used when p still needs grounding
        t_hat: Unrolled iterations; computed when omitted
        limit: Stop after this many solutions
        cs: Prebuilt system to extend with cuts instead of building one

    Returns:
        Solutions in discovery order, each with choice and model filled in
    """
    gp = as_ground(p, sn)
    if cs is None:
        cs = build_ilc(gp, compute_t_hat(gp) if t_hat is None else t_hat)
    found: List[Solution] = []
    while limit is None or len(found) < limit:
        sol = solve(cs, "feasibility")
        if sol.status == CAP_EXCEEDED:
            raise ResourceCapError(f"choice branching exceeded the cap {settings.BRANCH_CAP}")
        if not sol.feasible:
            break
        found.append(sol)
        no_good_cut(cs, sol)
    log.debug("%d strong equilibria by cuts", len(found))
    return found
