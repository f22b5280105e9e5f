# scripts/cgap_text.py
"""
Readers and writers for the cGAP text formats.

.cgap programs:
    % comment
    #function w2 2 linear(0.5,0.5)
    buyAsus^U(1):0.6 <- .
    buyAsus^U(Y):Mu <- friend(X,Y):1, buyAsus^D(X):Mu.
    choice1^U(V) : avg{ Mu | friend(U,V):1, choice1^D(U):Mu } .
    choice2^U(V) : max{ Mu | friend(U,V):1, choice2^D(U):Mu } if sum >= 0.5 .
    buyMac^D(X),buyAsus^D(X) <~ buyMac^U(X),buyAsus^U(X).

.sn.tsv networks hold V and E rows, .likes.tsv tables hold user/page/category
rows, and reports are JSON with sorted keys.
"""
import re
import json
import fnmatch
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from cgap_errors import CgapError, ProgramSyntaxError, ValidationError
from cgap_model import (
    Apply, Atom, AVar, Const, Edge, FnKind, FunctionRegistry, GapRule, Interpretation,
    AtomIndex, NeighborTemplate, Program, SocialNetwork, VCRule, Var, AnnotationFn,
    format_expr, format_number, gated_max_fn, linear_fn, social_fn,
)


_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>%[^\n]*)
  | (?P<directive>\#[A-Za-z_]+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_^]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<op><-|<~|>=|[:,.(){}|*\[\]])
""", re.VERBOSE)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind: str, text: str, line: int, col: int):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col

    def __repr__(self) -> str:
        return f"{self.kind}:{self.text!r}@{self.line}:{self.col}"


def _tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ProgramSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "newline":
            tokens.append(_Token("newline", "\n", line, pos - line_start + 1))
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    """Recursive-descent reader over a token list; newlines only matter for directives."""

    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.rules: List[GapRule] = []
        self.templates: List[NeighborTemplate] = []
        self.vc: List[Tuple[VCRule, _Token]] = []
        self.functions: List[Tuple[AnnotationFn, _Token]] = []

    # token helpers

    def peek(self, skip_newlines: bool = True) -> _Token:
        if skip_newlines:
            while self.tokens[self.pos].kind == "newline":
                self.pos += 1
        return self.tokens[self.pos]

    def next(self, skip_newlines: bool = True) -> _Token:
        tok = self.peek(skip_newlines)
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[_Token] = None) -> ProgramSyntaxError:
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return ProgramSyntaxError(f"{message}, found {found}", tok.line, tok.col)

    def expect(self, text: str, skip_newlines: bool = True) -> _Token:
        tok = self.next(skip_newlines)
        if tok.text != text or tok.kind in ("string", "eof"):
            raise self.error(f"expected '{text}'", tok)
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok.text == text and tok.kind not in ("string", "eof"):
            self.pos += 1
            return True
        return False

    # grammar

    def parse(self) -> None:
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind == "directive":
                self.directive()
            else:
                self.statement()

    def directive(self) -> None:
        start = self.next()
        if start.text != "#function":
            raise self.error("unknown directive", start)
        name = self.next(False)
        if name.kind != "ident":
            raise self.error("expected a function name", name)
        arity_tok = self.next(False)
        if arity_tok.text == "*":
            arity = None
        elif arity_tok.kind == "number" and arity_tok.text.isdigit():
            arity = int(arity_tok.text)
        else:
            raise self.error("expected an arity or '*'", arity_tok)
        kind_tok = self.next(False)
        if kind_tok.kind != "ident":
            raise self.error("expected a function kind", kind_tok)
        self.expect("(", False)
        params: List[float] = []
        if self.peek(False).text != ")":
            params.append(self.number(False))
            while self.peek(False).text == ",":
                self.next(False)
                params.append(self.number(False))
        self.expect(")", False)
        if self.peek(False).text == ".":
            self.next(False)
        end = self.peek(False)
        if end.kind not in ("newline", "eof"):
            raise self.error("expected end of line after #function", end)
        self.functions.append((self._make_function(name.text, arity, kind_tok, params), start))

    def _make_function(self, name: str, arity: Optional[int], kind_tok: _Token, params: List[float]) -> AnnotationFn:
        kind = kind_tok.text
        try:
            if kind == FnKind.LINEAR.value:
                fn = linear_fn(name, params)
            elif kind == FnKind.GATED_MAX.value:
                if len(params) != 1:
                    raise ValidationError("gatedmax takes exactly one threshold")
                fn = gated_max_fn(name, params[0])
            elif kind == FnKind.SOCIAL.value:
                if len(params) < 2:
                    raise ValidationError("social takes a threshold and at least one weight")
                fn = social_fn(name, params[0], params[1:])
            elif kind in (FnKind.MAX.value, FnKind.AVERAGE.value):
                if params:
                    raise ValidationError(f"{kind} takes no parameters")
                fn = AnnotationFn(name, None, FnKind(kind))
            else:
                raise self.error(f"unknown function kind '{kind}'", kind_tok)
        except ValidationError as e:
            raise ValidationError(f"line {kind_tok.line}: {e}") from None
        if fn.arity is not None and arity is not None and fn.arity != arity:
            raise ValidationError(f"line {kind_tok.line}: function {name} declares arity {arity} "
                                  f"but has {fn.arity} parameters")
        if fn.arity is None and arity is not None:
            fn = AnnotationFn(fn.name, arity, fn.kind, fn.params, fn.monotone)
        return fn

    def number(self, skip_newlines: bool = True) -> float:
        tok = self.next(skip_newlines)
        if tok.kind != "number":
            raise self.error("expected a number", tok)
        return float(tok.text)

    def term(self):
        tok = self.next()
        if tok.kind == "ident":
            return Var(tok.text) if tok.text[0].isupper() or tok.text[0] == "_" else tok.text
        if tok.kind == "number":
            return tok.text
        if tok.kind == "string":
            return re.sub(r"\\(.)", r"\1", tok.text[1:-1])
        raise self.error("expected a term", tok)

    def atom(self) -> Atom:
        tok = self.next()
        if tok.kind != "ident":
            raise self.error("expected a predicate", tok)
        self.expect("(")
        args = [self.term()]
        while self.accept(","):
            args.append(self.term())
        self.expect(")")
        if len(args) > 2:
            raise ProgramSyntaxError(f"atom {tok.text} has {len(args)} arguments; expected 1 or 2",
                                     tok.line, tok.col)
        return Atom(tok.text, tuple(args))

    def expr(self):
        tok = self.next()
        if tok.kind == "number":
            return Const(self._unit(float(tok.text), tok))
        if tok.kind != "ident":
            raise self.error("expected an annotation", tok)
        if self.accept("("):
            args = []
            if not self.accept(")"):
                args.append(self.expr())
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
            return Apply(tok.text, tuple(args))
        if tok.text[0].isupper() or tok.text[0] == "_":
            return AVar(tok.text)
        raise self.error("expected an annotation variable, constant or function call", tok)

    def _unit(self, value: float, tok: _Token) -> float:
        if not 0 <= value <= 1:
            raise ValidationError(f"line {tok.line}, column {tok.col}: annotation constant {value} outside [0,1]")
        return value

    def statement(self) -> None:
        start = self.peek()
        head = self.atom()
        if self.peek().text in (",", "<~"):
            self.vc_rule(head, start)
            return
        self.expect(":")
        nxt, after = self.peek(), self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
        if nxt.kind == "ident" and nxt.text in ("avg", "max") and after is not None and after.text == "{":
            self.template(head)
            return
        annotation = self.expr()
        body: List[Tuple[Atom, str]] = []
        conditions: List[Tuple[Atom, float]] = []
        if self.accept("<-"):
            if self.peek().text != ".":
                self.body_item(body, conditions)
                while self.accept(","):
                    self.body_item(body, conditions)
        elif self.peek().text != ".":
            raise self.error("expected '<-' or '.'")
        self.expect(".")
        self.rules.append(GapRule(head, annotation, tuple(body), tuple(conditions)))

    def body_item(self, body: List[Tuple[Atom, str]], conditions: List[Tuple[Atom, float]]) -> None:
        atom = self.atom()
        self.expect(":")
        tok = self.next()
        if tok.kind == "number":
            conditions.append((atom, self._unit(float(tok.text), tok)))
        elif tok.kind == "ident" and (tok.text[0].isupper() or tok.text[0] == "_"):
            body.append((atom, tok.text))
        else:
            raise self.error("expected an annotation variable or constant", tok)

    def vc_rule(self, first: Atom, start: _Token) -> None:
        heads = [first]
        while self.accept(","):
            heads.append(self.atom())
        self.expect("<~")
        bodies = [self.atom()]
        while self.accept(","):
            bodies.append(self.atom())
        self.expect(".")
        atoms = heads + bodies
        var = atoms[0].args[0]
        if any(len(a.args) != 1 or a.args[0] != var for a in atoms) or not isinstance(var, Var):
            raise ProgramSyntaxError("vertex choice atoms must share one variable", start.line, start.col)
        try:
            rule = VCRule(tuple(a.predicate for a in heads), tuple(a.predicate for a in bodies), var.name)
        except ValidationError as e:
            raise ValidationError(f"line {start.line}: {e}") from None
        self.vc.append((rule, start))

    def template(self, head: Atom) -> None:
        agg = self.next().text
        self.expect("{")
        mu = self.next()
        if mu.kind != "ident" or not (mu.text[0].isupper() or mu.text[0] == "_"):
            raise self.error("expected the aggregated annotation variable", mu)
        self.expect("|")
        items = [self._template_item()]
        self.expect(",")
        items.append(self._template_item())
        self.expect("}")
        tau = None
        if self.accept("["):
            tau = self._gate()
            self.expect("]")
        elif self.peek().text == "if":
            tau = self._gate()
        self.expect(".")
        edges = [(a, ann) for a, ann in items if len(a.args) == 2]
        nodes = [(a, ann) for a, ann in items if len(a.args) == 1]
        if len(edges) != 1 or len(nodes) != 1:
            raise self.error("template needs one edge atom and one vertex atom")
        edge, weight = edges[0]
        body, var = nodes[0]
        if not isinstance(weight, float):
            raise self.error("template edge atom needs a constant annotation")
        if var != mu.text:
            raise self.error(f"template body must carry the aggregated variable {mu.text}")
        self.templates.append(NeighborTemplate(head, agg, mu.text, edge, weight, body, tau))

    def _template_item(self):
        atom = self.atom()
        self.expect(":")
        tok = self.next()
        if tok.kind == "number":
            return atom, self._unit(float(tok.text), tok)
        if tok.kind == "ident":
            return atom, tok.text
        raise self.error("expected an annotation", tok)

    def _gate(self) -> float:
        self.expect("if")
        self.expect("sum")
        self.expect(">=")
        return self.number()


def parse_program(text: Union[str, bytes]) -> Program:
    """
    Parse and validate a .cgap program.

    Args:
        text: Program source

    Returns:
        The validated Program; neighbor templates stay unexpanded
    """
    try:
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        parser = _Parser(text)
        parser.parse()
        if not parser.vc:
            raise ValidationError("missing vertex choice rule")
        if len(parser.vc) > 1:
            second = parser.vc[1][1]
            raise ValidationError(f"line {second.line}: a program has a single vertex choice rule")
        registry = FunctionRegistry()
        for fn, tok in parser.functions:
            try:
                registry.register(fn, allow_nonmonotone=fn.kind is FnKind.SOCIAL)
            except ValidationError as e:
                raise ValidationError(f"line {tok.line}: {e}") from None
        return Program(tuple(parser.rules), parser.vc[0][0], tuple(parser.templates), registry)
    except CgapError:
        raise
    except UnicodeDecodeError as e:
        raise ProgramSyntaxError(f"input is not UTF-8: {e}") from None
    except (ValueError, TypeError, IndexError, RecursionError) as e:
        raise ProgramSyntaxError(f"unreadable program: {e}") from None


def format_rule(rule: GapRule) -> str:
    items = [f"{atom}:{format_number(c)}" for atom, c in rule.conditions]
    items += [f"{atom}:{var}" for atom, var in rule.body]
    return f"{rule.head}:{format_expr(rule.annotation)} <- {', '.join(items)}."


def format_template(t: NeighborTemplate) -> str:
    gate = f" if sum >= {format_number(t.tau)}" if t.tau is not None else ""
    return (f"{t.head} : {t.aggregate}{{ {t.mu} | {t.edge}:{format_number(t.edge_weight)}, "
            f"{t.body}:{t.mu} }}{gate} .")


def format_vc(vc: VCRule) -> str:
    heads = ",".join(f"{b}({vc.var})" for b in vc.heads)
    bodies = ",".join(f"{a}({vc.var})" for a in vc.bodies)
    return f"{heads} <~ {bodies}."


def serialize_program(program: Program) -> str:
    lines = [fn.declaration() for fn in program.functions.declared()]
    lines += [format_rule(r) for r in program.rules]
    lines += [format_template(t) for t in program.templates]
    lines.append(format_vc(program.vc))
    return "\n".join(lines) + "\n"


# Networks and likes


def _split_rows(text: str) -> Iterable[Tuple[int, List[str]]]:
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith(("#", "%")):
            continue
        yield number, line.split("\t")


def _weight(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ProgramSyntaxError(f"bad value {text!r}", line) from None
    if not 0 <= value <= 1:
        raise ValidationError(f"line {line}: value {value} outside [0,1]")
    return value


def parse_network(text: str) -> SocialNetwork:
    """
    Read a .sn.tsv network.

    Rows are `V<TAB>vertex[<TAB>pred<TAB>value]` and
    `E<TAB>src<TAB>dst<TAB>pred<TAB>weight`; edge endpoints must be declared.
    """
    vertices: List[str] = []
    labels: List[Tuple[str, str, float]] = []
    edges: List[Tuple[int, Edge]] = []
    for line, fields in _split_rows(text):
        kind = fields[0]
        if kind == "V" and len(fields) == 2:
            vertices.append(fields[1])
        elif kind == "V" and len(fields) == 4:
            vertices.append(fields[1])
            labels.append((fields[1], fields[2], _weight(fields[3], line)))
        elif kind == "E" and len(fields) == 5:
            edges.append((line, Edge(fields[1], fields[2], fields[3], _weight(fields[4], line))))
        else:
            raise ProgramSyntaxError(f"malformed network row {fields!r}", line)
    known = set(vertices)
    for line, edge in edges:
        for end in (edge.source, edge.target):
            if end not in known:
                raise ValidationError(f"line {line}: dangling edge endpoint {end}")
    return SocialNetwork(tuple(vertices), tuple(e for _, e in edges), tuple(labels))


def serialize_network(sn: SocialNetwork) -> str:
    labelled = {v for v, _, _ in sn.labels}
    lines = [f"V\t{v}" for v in sn.vertices if v not in labelled]
    lines += [f"V\t{v}\t{pred}\t{format_number(value)}" for v, pred, value in sn.labels]
    lines += [f"E\t{e.source}\t{e.target}\t{e.label}\t{format_number(e.weight)}" for e in sn.edges]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_likes(text: str) -> List[Tuple[str, str, str]]:
    """Read `user<TAB>page_id<TAB>category` rows."""
    rows = []
    for line, fields in _split_rows(text):
        if len(fields) != 3:
            raise ProgramSyntaxError(f"malformed likes row {fields!r}", line)
        rows.append((fields[0], fields[1], fields[2]))
    return rows


def serialize_likes(rows: Sequence[Tuple[str, str, str]]) -> str:
    return "".join(f"{user}\t{page}\t{category}\n" for user, page, category in rows)


# Reports


def _round_floats(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.9g}")
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dump_report(obj: Any) -> str:
    """JSON with sorted keys and floats cut to 9 significant digits."""
    return json.dumps(_round_floats(obj), sort_keys=True, indent=2)


def interpretation_dict(i: Interpretation, pattern: Optional[str] = None) -> dict:
    out = {}
    for atom_id in range(len(i)):
        name = i.index.text(atom_id)
        if not pattern or fnmatch.fnmatchcase(name, pattern):
            out[name] = float(i.values[atom_id])
    return out


def serialize_interpretation(i: Interpretation, pattern: Optional[str] = None) -> str:
    """
    Report an interpretation as JSON sorted by atom name.

    Args:
        i: Interpretation to report
        pattern: Shell-style atom filter; empty or None keeps every atom
    """
    return dump_report(interpretation_dict(i, pattern))


def parse_interpretation(text: str, index: AtomIndex) -> Interpretation:
    """Read a JSON object of atom -> value; unlisted atoms are 0."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProgramSyntaxError(f"bad interpretation JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(data, dict):
        raise ValidationError("interpretation file must hold a JSON object")
    return Interpretation.from_mapping(index, data)
