# scripts/game.py
"""
Game-theoretic view of a cGAP: states, induced programs, utilities, Nash
checks, and compilers from normal-form games and social-network threshold
games into cGAPs.
"""
import json
import math
import logging
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import cgap_settings as settings
from cgap_errors import ProgramSyntaxError, ValidationError
from cgap_model import (
    Apply, Atom, AVar, Const, FunctionRegistry, GapRule, Interpretation, Program, VCRule, social_fn,
)
from grounder import GroundProgram
from semantics import GroundGap, least_model, with_bridges

log = logging.getLogger(__name__)


class State:
    """One 1-based action per vertex of a ground program."""

    __slots__ = ("vertices", "actions")

    def __init__(self, vertices: Sequence[str], actions: Sequence[int]):
        self.vertices = tuple(vertices)
        self.actions = np.asarray(actions, dtype=np.int64).copy()
        if self.actions.shape != (len(self.vertices),):
            raise ValidationError("a state needs exactly one action per vertex")
        if self.actions.size and self.actions.min() < 1:
            raise ValidationError("actions are numbered from 1")

    @classmethod
    def uniform(cls, gp: GroundProgram, action: int) -> "State":
        if not 1 <= action <= gp.size:
            raise ValidationError(f"action {action} outside 1..{gp.size}")
        return cls(gp.vertices, np.full(len(gp.vc), action))

    @classmethod
    def from_mapping(cls, gp: GroundProgram, mapping: Mapping[str, int]) -> "State":
        missing = [v for v in gp.vertices if v not in mapping]
        if missing:
            raise ValidationError(f"state is not total: no action for {missing[:5]}")
        unknown = [v for v in mapping if v not in gp.vertex_position]
        if unknown:
            raise ValidationError(f"state mentions unknown vertices {unknown[:5]}")
        return cls(gp.vertices, [int(mapping[v]) for v in gp.vertices])

    def __getitem__(self, vertex: str) -> int:
        return int(self.actions[self.vertices.index(vertex)])

    def with_action(self, vertex: str, action: int) -> "State":
        actions = self.actions.copy()
        actions[self.vertices.index(vertex)] = action
        return State(self.vertices, actions)

    def as_dict(self) -> Dict[str, int]:
        return {v: int(a) for v, a in zip(self.vertices, self.actions)}

    def key(self) -> Tuple[int, ...]:
        return tuple(int(a) for a in self.actions)

    def __eq__(self, other) -> bool:
        return isinstance(other, State) and self.vertices == other.vertices and self.key() == other.key()

    def __hash__(self) -> int:
        return hash((self.vertices, self.key()))

    def __repr__(self) -> str:
        return f"State({self.as_dict()})"


def aligned_actions(gp: GroundProgram, s: State) -> np.ndarray:
    if s.vertices == gp.vertices:
        actions = s.actions
    else:
        actions = State.from_mapping(gp, s.as_dict()).actions
    if actions.size and actions.max() > gp.size:
        raise ValidationError(f"action above {gp.size} in state")
    return actions


def induced_program(gp: GroundProgram, s: State) -> GroundGap:
    """Ground GAP with each VC instance replaced by the bridge of its chosen option."""
    return with_bridges(gp, aligned_actions(gp, s))


def utilities(gp: GroundProgram, s: State) -> Tuple[Interpretation, np.ndarray]:
    """Minimal model of the induced program and its (vertices x options) utility matrix."""
    model = least_model(induced_program(gp, s))
    return model, model.values[gp.utility_ids]


def utility(gp: GroundProgram, s: State, v: str, i: int) -> float:
    """Value of the i-th utility atom of v in the minimal model induced by s."""
    if not 1 <= i <= gp.size:
        raise ValidationError(f"action {i} outside 1..{gp.size}")
    model = least_model(induced_program(gp, s))
    return float(model.values[gp.utility_ids[gp.vertex_position[v], i - 1]])


def is_nash_state(gp: GroundProgram, s: State, jobs: Optional[int] = None) -> bool:
    """
    No player gains by a unilateral deviation.

    Args:
        gp: Ground program
        s: State to test
        jobs: Worker threads for the deviation fixpoints. Defaults to CGAP_JOBS
    """
    actions = aligned_actions(gp, s)
    _, current = utilities(gp, State(gp.vertices, actions))
    rows = np.arange(len(actions))
    own = current[rows, actions - 1]

    deviations = [(k, a) for k in range(len(actions)) for a in range(1, gp.size + 1) if a != actions[k]]

    def gain(item: Tuple[int, int]) -> bool:
        k, a = item
        changed = actions.copy()
        changed[k] = a
        model = least_model(with_bridges(gp, changed))
        return model.values[gp.utility_ids[k, a - 1]] > own[k] + settings.EPS_EQ

    jobs = settings.JOBS if jobs is None else jobs
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return not any(pool.map(gain, deviations))
    return not any(gain(item) for item in deviations)


# Normal-form games


@dataclass(frozen=True, eq=False)
class GenericGame:
    """utilities[p][a_1]...[a_n] is player p's payoff for the 0-based action profile."""

    players: Tuple[str, ...]
    actions: Tuple[str, ...]
    utilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        object.__setattr__(self, "actions", tuple(self.actions))
        table = np.asarray(self.utilities, dtype=np.float64)
        object.__setattr__(self, "utilities", table)
        expected = (len(self.players),) + (len(self.actions),) * len(self.players)
        if not self.players or len(self.actions) < 2:
            raise ValidationError("a game needs at least one player and two actions")
        if table.shape != expected:
            raise ValidationError(f"utility tensor has shape {table.shape}, expected {expected}")
        if not np.all(np.isfinite(table)):
            raise ValidationError("utility tensor must be finite")

    def payoff(self, player: int, profile: Sequence[int]) -> float:
        return float(self.utilities[(player,) + tuple(profile)])

    def profiles(self):
        return itertools.product(range(len(self.actions)), repeat=len(self.players))


def pure_nash_equilibria(g: GenericGame) -> List[Tuple[int, ...]]:
    """Pure Nash profiles (0-based) found by scanning the payoff tensor."""
    found = []
    for profile in g.profiles():
        stable = True
        for p in range(len(g.players)):
            own = g.payoff(p, profile)
            for a in range(len(g.actions)):
                deviation = profile[:p] + (a,) + profile[p + 1:]
                if g.payoff(p, deviation) > own + settings.EPS_EQ:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            found.append(profile)
    return found


def _scaled(g: GenericGame, epsilon: float, decimals: Optional[int]) -> np.ndarray:
    lo, hi = float(g.utilities.min()), float(g.utilities.max())
    if hi == lo:
        return np.zeros_like(g.utilities)
    scaled = (g.utilities - lo) / (hi - lo) * (1 - epsilon)
    if decimals is not None:
        factor = 10 ** decimals
        rounded_up = np.vectorize(lambda x: math.ceil(round(x * factor, 9)) / factor)
        scaled = np.minimum(rounded_up(scaled), 1 - epsilon)
    return scaled


def compile_generic_game(g: GenericGame, epsilon: Optional[float] = None,
                         decimals: Optional[int] = None) -> Program:
    """
    Encode a normal-form game as a cGAP whose strong equilibria are its Nash equilibria.

    Args:
        g: The game
        epsilon: Base utility and decision threshold, in (0,1). Defaults to CGAP_GAME_EPSILON
        decimals: Round scaled payoffs up to this many decimals (None keeps them exact)

    Returns:
        Program with predicates <action>^U / <action>^D over player constants
    """
    epsilon = settings.GAME_EPSILON if epsilon is None else epsilon
    if not 0 < epsilon < 1:
        raise ValidationError(f"epsilon {epsilon} outside (0,1)")
    scaled = _scaled(g, epsilon, decimals)
    utility = [f"{a}^U" for a in g.actions]
    decision = [f"{a}^D" for a in g.actions]
    m, n = len(g.actions), len(g.players)

    rules: List[GapRule] = []
    for player in g.players:
        for u in utility:
            rules.append(GapRule(Atom(u, (player,)), Const(epsilon)))
    for p, player in enumerate(g.players):
        opponents = [o for o in range(n) if o != p]
        for a in range(m):
            for others in itertools.product(range(m), repeat=n - 1):
                profile = list(others)
                profile.insert(p, a)
                value = round(float(scaled[(p,) + tuple(profile)]) + epsilon, 12)
                conditions = tuple((Atom(decision[profile[o]], (g.players[o],)), epsilon) for o in opponents)
                rules.append(GapRule(Atom(utility[a], (player,)), Const(min(value, 1.0)), (), conditions))
    log.debug("compiled %d-player game into %d rules", n, len(rules))
    return Program(tuple(rules), VCRule(tuple(decision), tuple(utility)))


def state_for_profile(gp: GroundProgram, g: GenericGame, profile: Sequence[int]) -> State:
    """State of a compiled game's ground program for a 0-based action profile."""
    return State.from_mapping(gp, {player: a + 1 for player, a in zip(g.players, profile)})


def load_game(text: str) -> GenericGame:
    """Read a .game.json file: {players, actions, utilities}."""
    data = _load_json(text)
    try:
        return GenericGame(tuple(str(p) for p in data["players"]), tuple(str(a) for a in data["actions"]),
                           np.asarray(data["utilities"], dtype=np.float64))
    except KeyError as e:
        raise ValidationError(f"game file lacks field {e}") from None
    except (TypeError, ValueError) as e:
        raise ValidationError(f"bad game file: {e}") from None


def _load_json(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProgramSyntaxError(f"bad JSON: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(data, dict):
        raise ValidationError("expected a JSON object")
    return data


# Social-network threshold games


@dataclass(frozen=True, eq=False)
class AptSimonGame:
    """
    Vertices pick one available product; an edge (i, v) with weight w makes i
    a neighbor of v, and v's payoff grows with neighbors that agree with it.
    """

    vertices: Tuple[str, ...]
    edges: Dict[Tuple[str, str], float]
    products: Tuple[str, ...]
    availability: Dict[str, Tuple[str, ...]]
    thresholds: Dict[Tuple[str, str], float]
    c0: float = 0.5
    _neighbors: Dict[str, List[Tuple[str, float]]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        known = set(self.vertices)
        if len(self.products) < 2:
            raise ValidationError("a threshold game needs at least two products")
        if not 0 < self.c0 <= 1:
            raise ValidationError(f"c0 {self.c0} outside (0,1]")
        for (i, v), w in self.edges.items():
            if i not in known or v not in known or i == v:
                raise ValidationError(f"bad edge {i}->{v}")
            if not 0 < w <= 1:
                raise ValidationError(f"edge {i}->{v} weight {w} outside (0,1]")
            self._neighbors.setdefault(v, []).append((i, w))
        for v in self.vertices:
            offered = self.availability.get(v, ())
            if not offered or any(q not in self.products for q in offered):
                raise ValidationError(f"vertex {v} needs a nonempty set of known products")
            for q in offered:
                theta = self.thresholds.get((v, q))
                if theta is None or not 0 < theta <= 1:
                    raise ValidationError(f"threshold for {v}/{q} missing or outside (0,1]")

    def neighbors(self, v: str) -> List[Tuple[str, float]]:
        return self._neighbors.get(v, [])


def apt_simon_utility(g: AptSimonGame, strategy: Mapping[str, str], v: str) -> float:
    """Payoff of v under a product assignment."""
    chosen = strategy[v]
    if chosen not in g.availability[v]:
        return 0.0
    nbrs = g.neighbors(v)
    if not nbrs:
        return g.c0
    theta = g.thresholds[(v, chosen)]
    agreeing = sum(w - theta for i, w in nbrs if strategy[i] == chosen)
    return 0.5 + agreeing / (2 * len(nbrs))


def is_apt_simon_nash(g: AptSimonGame, strategy: Mapping[str, str]) -> bool:
    for v in g.vertices:
        own = apt_simon_utility(g, strategy, v)
        for q in g.availability[v]:
            if q == strategy[v]:
                continue
            if apt_simon_utility(g, {**strategy, v: q}, v) > own + settings.EPS_EQ:
                return False
    return True


def compile_apt_simon(g: AptSimonGame) -> Program:
    """
    Encode a threshold game as a cGAP: one utility rule per vertex and
    available product, reading the neighbors' decisions for that product.
    """
    utility = {q: f"{q}^U" for q in g.products}
    decision = {q: f"{q}^D" for q in g.products}
    functions = FunctionRegistry()
    rules: List[GapRule] = []
    counter = itertools.count(1)
    for v in g.vertices:
        nbrs = g.neighbors(v)
        for q in g.availability[v]:
            head = Atom(utility[q], (v,))
            if not nbrs:
                rules.append(GapRule(head, Const(g.c0)))
                continue
            fn = social_fn(f"agree{next(counter)}", g.thresholds[(v, q)], [w for _, w in nbrs])
            functions.register(fn, allow_nonmonotone=True)
            names = [f"M{k}" for k in range(1, len(nbrs) + 1)]
            body = tuple((Atom(decision[q], (i,)), name) for (i, _), name in zip(nbrs, names))
            rules.append(GapRule(head, Apply(fn.name, tuple(AVar(n) for n in names)), body))
    vc = VCRule(tuple(decision[q] for q in g.products), tuple(utility[q] for q in g.products))
    return Program(tuple(rules), vc, (), functions)


def strategy_for_state(g: AptSimonGame, s: State) -> Dict[str, str]:
    return {v: g.products[a - 1] for v, a in s.as_dict().items()}


def load_apt_simon(text: str) -> AptSimonGame:
    """
    Read a .asg.json file:
    {vertices, edges: [[i, v, w]...], products, availability: {v: [...]},
     thresholds: {v: {product: theta}}, c0}
    """
    data = _load_json(text)
    try:
        return AptSimonGame(
            tuple(str(v) for v in data["vertices"]),
            {(str(i), str(v)): float(w) for i, v, w in data.get("edges", [])},
            tuple(str(q) for q in data["products"]),
            {str(v): tuple(str(q) for q in qs) for v, qs in data["availability"].items()},
            {(str(v), str(q)): float(t) for v, per in data["thresholds"].items() for q, t in per.items()},
            float(data.get("c0", 0.5)),
        )
    except KeyError as e:
        raise ValidationError(f"threshold game file lacks field {e}") from None
    except (TypeError, ValueError, AttributeError) as e:
        raise ValidationError(f"bad threshold game file: {e}") from None
