# scripts/experiments.py
"""
Political-preference diffusion experiments.

Likes become preference coefficients, training users get utility facts for the
two sides of a competition, the scenario program is solved for its extremal
equilibria, and the bound midpoints of each validation user score a
threshold classifier evaluated by AUROC.
"""
import time
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

import cgap_settings as settings
from cgap_errors import ValidationError
from cgap_model import Atom, Const, GapRule, NeighborTemplate, Program, SocialNetwork, Var, choice_gap_from_models
from grounder import ground
from roc import auc, roc_curve
from synthetic import FRIEND, PARTIES, network_from_graph, undirected
from vic import extremal_models

log = logging.getLogger(__name__)

OPTIONS = ("choice1", "choice2")
DELTAS = (20, 30, 40, 50, 60, 70, 80)
PERTURBATION_LEVELS = (0.25, 0.5, 0.75, 1.0)


# Preferences


@dataclass(frozen=True, eq=False)
class PreferenceTable:
    """Political like counts and preference coefficients of users with at least one political like."""

    parties: Tuple[str, ...]
    users: Tuple[str, ...]
    likes: np.ndarray  # users x parties counts
    rho: np.ndarray

    @property
    def supporter(self) -> np.ndarray:
        """Party index with the largest coefficient per user; ties go to the lowest index."""
        return np.argmax(self.rho, axis=1)

    def row(self, user: str) -> int:
        return self.users.index(user)

    def supporters(self) -> Dict[str, str]:
        return {u: self.parties[k] for u, k in zip(self.users, self.supporter)}


def compute_rho(rows: Sequence[Tuple[str, str, str]], parties: Sequence[str] = PARTIES,
                classification: Optional[Mapping[str, str]] = None) -> PreferenceTable:
    """
    Preference coefficients from likes rows.

    Args:
        rows: (user, page, category) likes
        parties: Party labels, in coefficient order
        classification: Page to party map; without it the category column names the party

    Returns:
        Table over the users with at least one political like
    """
    position = {p: k for k, p in enumerate(parties)}
    counts: Dict[str, np.ndarray] = {}
    for user, page, category in rows:
        party = classification.get(page) if classification is not None else category
        k = position.get(party)
        if k is None:
            continue
        counts.setdefault(user, np.zeros(len(parties), dtype=np.int64))[k] += 1
    users = tuple(counts)
    likes = np.array([counts[u] for u in users], dtype=np.int64).reshape(len(users), len(parties))
    rho = likes / likes.sum(axis=1, keepdims=True) if users else np.zeros((0, len(parties)))
    return PreferenceTable(tuple(parties), users, likes, rho)


@dataclass(frozen=True)
class Competition:
    label: str
    side1: Tuple[str, ...]
    side2: Tuple[str, ...]

    def __post_init__(self):
        if not self.side1 or not self.side2 or set(self.side1) & set(self.side2):
            raise ValidationError(f"competition {self.label} needs two disjoint nonempty sides")

    def utilities(self, prefs: PreferenceTable) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Side utilities as shares of the preference mass on either side.

        Returns:
            (mask of users taking part, u1, u2), with u1 + u2 = 1 on the mask
        """
        cols1 = [prefs.parties.index(p) for p in self.side1]
        cols2 = [prefs.parties.index(p) for p in self.side2]
        mass1 = prefs.rho[:, cols1].sum(axis=1)
        mass2 = prefs.rho[:, cols2].sum(axis=1)
        total = mass1 + mass2
        taking_part = np.isin(prefs.supporter, cols1 + cols2) & (total > 0)
        safe = np.where(total > 0, total, 1.0)
        return taking_part, mass1 / safe, mass2 / safe

    def labels(self, prefs: PreferenceTable) -> np.ndarray:
        """1 where the user supports a side-1 party, else 0."""
        return np.isin(prefs.supporter, [prefs.parties.index(p) for p in self.side1]).astype(np.int64)


COMPETITIONS: Dict[int, Competition] = {
    1: Competition("p2 vs p3", ("p2",), ("p3",)),
    2: Competition("p2+p3 vs p1", ("p2", "p3"), ("p1",)),
    3: Competition("p2 vs p1", ("p2",), ("p1",)),
    4: Competition("p3 vs p1", ("p3",), ("p1",)),
}


# Scenarios


@dataclass(frozen=True)
class ScenarioConfig:
    mod1: int = 1
    mod2: int = 1
    delta: float = 50
    competition: int = 3
    tau: float = field(default_factory=lambda: settings.TAU)
    seed: int = 0
    perturb: Optional[Tuple[str, float]] = None

    def __post_init__(self):
        if self.mod1 not in (1, 2, 3) or self.mod2 not in (1, 2, 3):
            raise ValidationError(f"diffusion models must be 1, 2 or 3, got {self.mod1},{self.mod2}")
        if not 0 <= self.delta <= 100:
            raise ValidationError(f"training share {self.delta} outside [0,100]")
        if self.competition not in COMPETITIONS:
            raise ValidationError(f"unknown competition {self.competition}")
        if self.perturb is not None:
            kind, p = self.perturb
            if kind not in ("node", "edge") or not 0 <= p <= 1:
                raise ValidationError(f"bad perturbation {kind}:{p}")


def parse_perturb(text: Optional[str]) -> Optional[Tuple[str, float]]:
    """'node:0.25' or 'edge:1' to a perturbation spec; empty means none."""
    if not text:
        return None
    kind, sep, value = text.partition(":")
    try:
        p = float(value)
    except ValueError:
        raise ValidationError(f"bad perturbation '{text}'; expected node:p or edge:p") from None
    if not sep or kind not in ("node", "edge") or not 0 <= p <= 1:
        raise ValidationError(f"bad perturbation '{text}'; expected node:p or edge:p")
    return kind, p


def split(users: Sequence[str], delta: float, seed: Optional[int]) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Seeded uniform (training, validation) split with round(delta% of users) for training."""
    if not 0 <= delta <= 100:
        raise ValidationError(f"training share {delta} outside [0,100]")
    users = list(users)
    size = int(np.floor(delta * len(users) / 100 + 0.5))
    order = np.random.default_rng(seed).permutation(len(users))
    train = tuple(users[k] for k in sorted(order[:size]))
    validation = tuple(users[k] for k in sorted(order[size:]))
    return train, validation


def perturb_nodes(utilities: Mapping[str, Tuple[float, float]], p: float,
                  seed: Optional[int]) -> Dict[str, Tuple[float, float]]:
    """Swap the two utilities of each training user with probability p."""
    if not 0 <= p <= 1:
        raise ValidationError(f"perturbation probability {p} outside [0,1]")
    users = list(utilities)
    swap = np.random.default_rng(seed).random(len(users)) < p
    return {u: (utilities[u][::-1] if s else utilities[u]) for u, s in zip(users, swap)}


def perturb_edges(sn: SocialNetwork, p: float, seed: Optional[int], label: Optional[str] = None) -> SocialNetwork:
    """
    Flip the membership of round(p * |E|) distinct vertex pairs drawn uniformly.

    Present friendships are removed, absent ones inserted with weight 1.
    """
    if not 0 <= p <= 1:
        raise ValidationError(f"perturbation probability {p} outside [0,1]")
    label = label or _edge_label(sn)
    graph = undirected(sn, label)
    vertices = list(graph.nodes)
    n = len(vertices)
    k = int(np.floor(p * graph.number_of_edges() + 0.5))
    if k > n * (n - 1) // 2:
        raise ValidationError(f"cannot draw {k} distinct pairs from {n} vertices")
    rng = np.random.default_rng(seed)
    guessed = set()
    while len(guessed) < k:
        a, b = rng.integers(n, size=2)
        if a != b:
            guessed.add((min(a, b), max(a, b)))
    for a, b in sorted(guessed):
        u, v = vertices[a], vertices[b]
        if graph.has_edge(u, v):
            graph.remove_edge(u, v)
        else:
            graph.add_edge(u, v)
    log.debug("edge perturbation flipped %d pairs", k)
    return network_from_graph(graph, label)


def _edge_label(sn: SocialNetwork) -> str:
    counts = Counter(e.label for e in sn.edges)
    return counts.most_common(1)[0][0] if counts else FRIEND


def _spread_rule(option: str, model: int, tau: float, edge: str) -> NeighborTemplate:
    v, u = Var("V"), Var("U")
    return NeighborTemplate(Atom(option, (v,)), "avg" if model == 1 else "max", "Mu",
                            Atom(edge, (u, v)), 1.0, Atom(option, (u,)), tau if model == 3 else None)


@dataclass(eq=False)
class Scenario:
    """A scenario program with the network it is grounded against and its user split."""

    config: ScenarioConfig
    program: Program
    network: SocialNetwork
    train: Tuple[str, ...]
    validation: Tuple[str, ...]
    labels: Dict[str, int]


def prepare_scenario(cfg: ScenarioConfig, sn: SocialNetwork, prefs: PreferenceTable) -> Scenario:
    """Apply the perturbation, split the users and build the two-option program."""
    split_seed, perturb_seed = (int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(2))
    competition = COMPETITIONS[cfg.competition]
    taking_part, u1, u2 = competition.utilities(prefs)
    known = set(sn.vertices)
    users = [u for u, keep in zip(prefs.users, taking_part) if keep and u in known]
    if len(users) < int(taking_part.sum()):
        log.warning("%d users with likes are not network vertices", int(taking_part.sum()) - len(users))
    train, validation = split(users, cfg.delta, split_seed)

    utilities = {u: (float(u1[prefs.row(u)]), float(u2[prefs.row(u)])) for u in train}
    network = sn
    if cfg.perturb is not None:
        kind, p = cfg.perturb
        if kind == "node":
            utilities = perturb_nodes(utilities, p, perturb_seed)
        else:
            network = perturb_edges(sn, p, perturb_seed)

    edge = _edge_label(network)
    models = []
    for k, (option, model) in enumerate(zip(OPTIONS, (cfg.mod1, cfg.mod2))):
        facts = [GapRule(Atom(option, (u,)), Const(values[k])) for u, values in utilities.items() if values[k] > 0]
        models.append((option, [_spread_rule(option, model, cfg.tau, edge)] + facts))
    program = choice_gap_from_models(models)

    labels = competition.labels(prefs)
    return Scenario(cfg, program, network, train, validation, {u: int(labels[prefs.row(u)]) for u in validation})


def build_scenario(cfg: ScenarioConfig, sn: SocialNetwork, prefs: PreferenceTable) -> Program:
    return prepare_scenario(cfg, sn, prefs).program


@dataclass
class RocResult:
    fpr: Tuple[float, ...]
    tpr: Tuple[float, ...]
    auroc: float
    scores: Dict[str, float]
    time_ms: float = field(default=0.0, compare=False)

    def row(self, cfg: ScenarioConfig) -> dict:
        """Result row in the per-scenario table layout."""
        out = {"mod1": cfg.mod1, "mod2": cfg.mod2, "training": cfg.delta, "comp": cfg.competition,
               "auroc": self.auroc, "time_ms": self.time_ms, "seed": cfg.seed, "tau": cfg.tau}
        if cfg.perturb is not None:
            out["perturb"] = cfg.perturb[0]
            out["p"] = cfg.perturb[1]
        return out


def bound_scores(scenario: Scenario) -> Dict[str, float]:
    """(L1+U1)/2 - (L2+U2)/2 per validation user, from the two extremal equilibria."""
    gp = ground(scenario.program, scenario.network)
    ext = extremal_models(gp)
    rows = [gp.vertex_position[u] for u in scenario.validation]
    ids = gp.utility_ids[rows]
    high, low = ext.max_model.values[ids], ext.min_model.values[ids]
    lower, upper = np.minimum(high, low), np.maximum(high, low)
    mid = (lower + upper) / 2
    return dict(zip(scenario.validation, (mid[:, 0] - mid[:, 1]).tolist()))


def run_scenario(cfg: ScenarioConfig, sn: SocialNetwork, prefs: PreferenceTable) -> RocResult:
    """
    Build, solve and score one scenario.

    Raises:
        ValidationError: the validation users lack a positive or a negative label
        NotVicError: the scenario program is not VIC with two options
    """
    start = time.perf_counter()
    scenario = prepare_scenario(cfg, sn, prefs)
    scores = bound_scores(scenario)
    users = list(scenario.validation)
    fpr, tpr, _ = roc_curve([scores[u] for u in users], [scenario.labels[u] for u in users])
    elapsed = (time.perf_counter() - start) * 1000
    result = RocResult(tuple(fpr.tolist()), tuple(tpr.tolist()), auc(fpr, tpr), scores, elapsed)
    log.debug("scenario %s: AUROC %.4f in %.0f ms", cfg, result.auroc, elapsed)
    return result


# Experiment matrices


def run_matrix(configs: Sequence[ScenarioConfig], sn: SocialNetwork, prefs: PreferenceTable,
               jobs: Optional[int] = None) -> List[dict]:
    """Run independent scenarios on a worker pool; rows come back in config order."""
    jobs = settings.JOBS if jobs is None else jobs

    def one(cfg: ScenarioConfig) -> dict:
        return run_scenario(cfg, sn, prefs).row(cfg)

    if jobs <= 1 or len(configs) <= 1:
        return [one(cfg) for cfg in configs]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, configs))


def scenario_grid(models: Sequence[Tuple[int, int]] = tuple((a, b) for a in (1, 2, 3) for b in (1, 2, 3)),
                  deltas: Sequence[float] = DELTAS, competitions: Sequence[int] = tuple(COMPETITIONS),
                  seeds: Sequence[int] = tuple(range(20)), tau: Optional[float] = None) -> List[ScenarioConfig]:
    tau = settings.TAU if tau is None else tau
    return [ScenarioConfig(a, b, d, c, tau, s) for (a, b) in models for d in deltas for c in competitions for s in seeds]


def summarize_by_delta(rows: Sequence[dict]) -> Dict[float, Dict[str, float]]:
    """Mean and standard deviation of AUROC per training share."""
    groups: Dict[float, List[float]] = {}
    for row in rows:
        groups.setdefault(row["training"], []).append(row["auroc"])
    return {d: {"mean": float(np.mean(v)), "std": float(np.std(v)), "runs": len(v)} for d, v in sorted(groups.items())}


def best_scenarios(rows: Sequence[dict]) -> List[dict]:
    """Best AUROC per competition and training share, with its models and mean runtime."""
    groups: Dict[Tuple, List[dict]] = {}
    for row in rows:
        groups.setdefault((row["comp"], row["training"], row["mod1"], row["mod2"]), []).append(row)
    best: Dict[Tuple, dict] = {}
    for (comp, delta, mod1, mod2), runs in groups.items():
        mean = float(np.mean([r["auroc"] for r in runs]))
        entry = {"comp": comp, "training": delta, "mod1": mod1, "mod2": mod2, "auroc": mean,
                 "time_ms": float(np.mean([r["time_ms"] for r in runs]))}
        key = (comp, delta)
        if key not in best or mean > best[key]["auroc"]:
            best[key] = entry
    return [best[k] for k in sorted(best)]


def perturbation_sweep(cfg: ScenarioConfig, sn: SocialNetwork, prefs: PreferenceTable, kind: str = "node",
                       levels: Sequence[float] = PERTURBATION_LEVELS, jobs: Optional[int] = None) -> List[dict]:
    """Rows for the unperturbed scenario followed by one per perturbation level."""
    configs = [replace(cfg, perturb=None)] + [replace(cfg, perturb=(kind, p)) for p in levels]
    return run_matrix(configs, sn, prefs, jobs)


def label_assortativity(sn: SocialNetwork, prefs: PreferenceTable) -> float:
    """Share of friendships between users with likes whose supporters agree."""
    supporters = prefs.supporters()
    graph: nx.Graph = undirected(sn)
    pairs = [(supporters[u], supporters[v]) for u, v in graph.edges if u in supporters and v in supporters]
    return sum(a == b for a, b in pairs) / len(pairs) if pairs else 0.0
