# scripts/lp_writer.py
"""
CPLEX LP text for constraint systems, a reader for the same subset, and a
subprocess adapter for an external MILP solver (CBC by default).
"""
import re
import shutil
import logging
import tempfile
import subprocess
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

import cgap_settings as settings
from cgap_errors import ProgramSyntaxError, SolverError, ValidationError
from milp_solver import INFEASIBLE, OPTIMAL, ConstraintSystem, Solution

log = logging.getLogger(__name__)

# LP has no objective constants; a variable fixed at 1 carries them
CONSTANT_VAR = "ONE_VAR_CONSTANT"
LINE_WIDTH = 250


def _num(value: float) -> str:
    text = format(float(value), ".12g")
    return "0" if text == "-0" else text


def _terms(coeffs: Mapping[str, float]) -> List[str]:
    out = []
    for k, (name, c) in enumerate(coeffs.items()):
        sign = "-" if c < 0 else ("+" if k else "")
        mag = abs(c)
        body = name if mag == 1 else f"{_num(mag)} {name}"
        out.append(f"{sign} {body}" if sign else body)
    return out


def _wrap(head: str, terms: List[str], tail: str = "") -> List[str]:
    lines, line = [], head
    for term in terms:
        if len(line) + len(term) + 1 > LINE_WIDTH and line.strip():
            lines.append(line)
            line = "   "
        line = f"{line} {term}" if line.strip() else f"{line}{term}"
    if tail:
        line = f"{line} {tail}"
    lines.append(line)
    return lines


def export_lp(cs: ConstraintSystem) -> str:
    """
    LP file text: objective, Subject To, Bounds, Binary, End.

    Constraint names are c1, c2, ... in insertion order and variables keep
    their declaration order.
    """
    lines = ["\\ cgap constraint system"]
    lines.append("Maximize" if cs.sense == "max" else "Minimize")
    objective = dict(cs.objective)
    if cs.objective_constant:
        objective[CONSTANT_VAR] = cs.objective_constant
    if objective:
        lines.extend(_wrap(" obj:", _terms(objective)))
    elif cs.variables:
        lines.append(f" obj: 0 {next(iter(cs.variables))}")
    else:
        lines.append(" obj:")

    if cs.constraints:
        lines.append("Subject To")
        for c in cs.constraints:
            op = "=" if c.sense == "=" else c.sense
            lines.extend(_wrap(f" {c.name}:", _terms(c.coeffs), f"{op} {_num(c.rhs)}"))

    lines.append("Bounds")
    binaries = []
    for v in cs.variables.values():
        if v.binary:
            binaries.append(v.name)
        elif v.lb == v.ub:
            lines.append(f" {v.name} = {_num(v.lb)}")
        elif np.isinf(v.lb) and np.isinf(v.ub):
            lines.append(f" {v.name} free")
        elif np.isinf(v.ub):
            lines.append(f" {v.name} >= {_num(v.lb)}")
        elif np.isinf(v.lb):
            lines.append(f" -inf <= {v.name} <= {_num(v.ub)}")
        else:
            lines.append(f" {_num(v.lb)} <= {v.name} <= {_num(v.ub)}")
    if CONSTANT_VAR in objective:
        lines.append(f" {CONSTANT_VAR} = 1")
    if binaries:
        lines.append("Binary")
        lines.extend(f" {name}" for name in binaries)
    lines.append("End")
    return "\n".join(lines) + "\n"


# Reader

_TOKEN = re.compile(r"""
    (?P<rel><=|>=|=<|=>|<|>|=)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf(?:inity)?)
  | (?P<sign>[-+])
  | (?P<colon>:)
  | (?P<name>[A-Za-z_!"#$%&()/,.;?@`'{}|~][A-Za-z0-9_!"#$%&()/,.;?@`'{}|~^\[\]]*)
""", re.VERBOSE | re.IGNORECASE)

_SECTIONS = {
    "maximize": "max", "maximum": "max", "max": "max",
    "minimize": "min", "minimum": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binary": "binary", "binaries": "binary", "bin": "binary",
    "general": "general", "generals": "general", "gen": "general",
    "end": "end",
}


def _tokens(text: str, line_no: int) -> Iterator[Tuple[str, str]]:
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ProgramSyntaxError(f"unexpected character {text[pos]!r} in LP text", line_no, pos + 1)
        kind = m.lastgroup
        yield kind, m.group(kind)
        pos = m.end()


def _number(text: str) -> float:
    low = text.lower().lstrip("+")
    if low in ("inf", "infinity"):
        return np.inf
    if low in ("-inf", "-infinity"):
        return -np.inf
    return float(text)


def _linear(tokens: List[Tuple[str, str]], line_no: int) -> Dict[str, float]:
    """Parse `[sign] [coef] name ...` into coefficients."""
    out: Dict[str, float] = {}
    sign, coef = 1.0, None
    for kind, text in tokens:
        if kind == "sign":
            sign = -1.0 if text == "-" else 1.0
        elif kind == "num":
            value = _number(text)
            coef = value if coef is None else coef * value
        elif kind == "name":
            out[text] = out.get(text, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
        else:
            raise ProgramSyntaxError(f"unexpected {text!r} in linear expression", line_no)
    return out


def _split_sections(text: str) -> List[Tuple[str, int, str]]:
    """(section, line number, line) for every nonblank line after comment removal."""
    section = None
    out = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = " ".join(line.lower().split())
        if key in _SECTIONS:
            section = _SECTIONS[key]
            continue
        if section is None:
            raise ProgramSyntaxError("LP text must open with an objective section", no)
        out.append((section, no, line))
    return out


def parse_lp(text: str) -> ConstraintSystem:
    """Read LP text in the subset export_lp writes."""
    cs = ConstraintSystem()
    sense = None
    objective: List[Tuple[str, str]] = []
    rows: List[Tuple[int, List[Tuple[str, str]]]] = []
    bounds: List[Tuple[int, List[Tuple[str, str]]]] = []
    binaries: List[str] = []
    pending: List[Tuple[str, str]] = []

    for section, no, line in _split_sections(text):
        toks = list(_tokens(line, no))
        if section in ("max", "min"):
            sense = section
            objective.extend(toks)
        elif section == "st":
            pending.extend(toks)
            # a row is complete once a relation is followed by its right-hand side
            kinds = [k for k, _ in pending]
            if "rel" in kinds and kinds.index("rel") < len(kinds) - 1:
                rows.append((no, pending))
                pending = []
        elif section == "bounds":
            bounds.append((no, toks))
        elif section == "binary":
            binaries.extend(t for k, t in toks if k == "name")
        elif section == "general":
            raise ProgramSyntaxError("general integer variables are not supported", no)
        elif section == "end":
            raise ProgramSyntaxError("text after End", no)
    if pending:
        raise ProgramSyntaxError("unterminated constraint at end of LP text")
    if sense is None:
        raise ProgramSyntaxError("LP text has no objective section")

    if objective and objective[0][0] == "name" and len(objective) > 1 and objective[1][0] == "colon":
        objective = objective[2:]
    obj = _linear(objective, 0)

    parsed_rows = []
    for no, toks in rows:
        name = ""
        if len(toks) > 1 and toks[0][0] == "name" and toks[1][0] == "colon":
            name, toks = toks[0][1], toks[2:]
        at = [k for k, _ in toks].index("rel")
        rel = toks[at][1].replace("=<", "<=").replace("=>", ">=")
        rel = {"<": "<=", ">": ">="}.get(rel, rel)
        lhs = _linear(toks[:at], no)
        if len(toks) != at + 2 or toks[at + 1][0] != "num":
            raise ProgramSyntaxError("constraint right-hand side must be a single number", no)
        rhs = _number(toks[at + 1][1])
        parsed_rows.append((name, lhs, rel, rhs))

    box: Dict[str, List[float]] = {}
    order: Dict[str, None] = {}
    for name in obj:
        order.setdefault(name, None)
    for _, lhs, _, _ in parsed_rows:
        for name in lhs:
            order.setdefault(name, None)
    for no, toks in bounds:
        _read_bound(toks, no, box, order)
    for name in binaries:
        order.setdefault(name, None)

    binary = set(binaries)
    constant = 0.0
    for name in order:
        if name == CONSTANT_VAR:
            continue
        lb, ub = box.get(name, [0.0, np.inf])
        if name in binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        cs.add_variable(name, lb, ub, name in binary)
    if CONSTANT_VAR in obj:
        constant = obj.pop(CONSTANT_VAR)
    for name, lhs, rel, rhs in parsed_rows:
        row = cs.add_constraint(lhs, rel, rhs)
        if name:
            row.name = name
    cs.set_objective(obj, sense, constant)
    return cs


def _read_bound(toks: List[Tuple[str, str]], no: int, box: Dict[str, List[float]], order: Dict[str, None]) -> None:
    # merge a leading sign into the following number
    merged: List[Tuple[str, str]] = []
    for kind, text in toks:
        if merged and merged[-1][0] == "sign" and kind == "num":
            merged[-1] = ("num", merged[-1][1] + text.lstrip("+"))
        else:
            merged.append((kind, text))
    toks, kinds = merged, [k for k, _ in merged]

    def bound_of(name: str) -> List[float]:
        order.setdefault(name, None)
        return box.setdefault(name, [0.0, np.inf])

    if kinds == ["name", "name"] and toks[1][1].lower() == "free":
        b = bound_of(toks[0][1])
        b[0], b[1] = -np.inf, np.inf
    elif kinds == ["num", "rel", "name", "rel", "num"]:
        b = bound_of(toks[2][1])
        b[0], b[1] = _number(toks[0][1]), _number(toks[4][1])
    elif kinds == ["name", "rel", "num"]:
        b = bound_of(toks[0][1])
        value, rel = _number(toks[2][1]), toks[1][1]
        if rel == "=":
            b[0] = b[1] = value
        elif rel in ("<=", "=<", "<"):
            b[1] = value
        else:
            b[0] = value
    elif kinds == ["num", "rel", "name"]:
        b = bound_of(toks[2][1])
        value, rel = _number(toks[0][1]), toks[1][1]
        if rel in ("<=", "=<", "<"):
            b[0] = value
        else:
            b[1] = value
    else:
        raise ProgramSyntaxError("unsupported bound line", no)


# External solver


def _read_cbc_solution(text: str, cs: ConstraintSystem) -> Solution:
    """CBC `solution` file: a status line, then `index name value reduced-cost` rows."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SolverError("empty solution file from external solver", text.splitlines())
    head = lines[0].lower()
    if "infeasible" in head:
        return Solution(INFEASIBLE)
    if not head.startswith("optimal"):
        raise SolverError(f"external solver reported: {lines[0].strip()}", text.splitlines())
    assignment = dict.fromkeys(cs.variables, 0.0)
    for line in lines[1:]:
        parts = line.replace("**", " ").split()
        if len(parts) >= 3 and parts[1] in assignment:
            assignment[parts[1]] = float(parts[2])
    for name, v in cs.variables.items():
        if v.binary:
            assignment[name] = float(round(assignment[name]))
    objective = cs.evaluate(assignment) if cs.sense else None
    sol = Solution(OPTIMAL, assignment, objective)
    if cs.unrolling is not None:
        sol.choice = cs.unrolling.choice_of(assignment)
        sol.model = cs.unrolling.model_of(assignment)
    return sol


def solve_external(cs: ConstraintSystem, sense: str = "feasibility", command: Optional[str] = None,
                   timeout: Optional[float] = None) -> Solution:
    """
    Solve through an external solver binary reading LP files.

    Args:
        cs: The system
        sense: 'min', 'max' or 'feasibility'
        command: Solver executable. Defaults to CGAP_LP_SOLVER
        timeout: Seconds before the solver is killed

    Raises:
        SolverError: the solver is missing, fails, or writes no solution
    """
    if sense not in ("min", "max", "feasibility"):
        raise ValidationError(f"unknown solve sense '{sense}'")
    command = command or settings.LP_SOLVER
    exe = shutil.which(command)
    if exe is None:
        raise SolverError(f"external solver '{command}' not found on PATH")
    system = cs.copy()
    if sense == "feasibility":
        system.sense = None
    else:
        system.sense = sense
    with tempfile.TemporaryDirectory(prefix="cgap-lp-") as tmp:
        model = Path(tmp) / "model.lp"
        solution = Path(tmp) / "model.sol"
        model.write_text(export_lp(system), encoding="utf-8")
        cmd = [exe, str(model), "solve", "solution", str(solution)]
        log.debug("running %s", " ".join(cmd))
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as e:
            raise SolverError(f"external solver timed out after {timeout}s", str(e.stdout or "").splitlines()) from None
        if proc.returncode != 0 or not solution.exists():
            raise SolverError(f"external solver exited with code {proc.returncode}", (proc.stdout + proc.stderr).splitlines())
        return _read_cbc_solution(solution.read_text(encoding="utf-8"), system)
