# scripts/equilibria.py
"""
Exhaustive enumeration of coherent models and strong equilibria.

Every choice vector (one option per vertex, lexicographic order) is turned
into a plain GAP by bridging the chosen option; its minimal model is kept when
it satisfies every vertex choice instance.
"""
import logging
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

import cgap_settings as settings
from cgap_errors import ResourceCapError
from cgap_model import Interpretation, vc_rows_satisfied
from game import State
from grounder import GroundProgram, as_ground
from semantics import least_model, sum_max_rows, with_bridges

log = logging.getLogger(__name__)

BATCH = 256


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """A choice vector (1-based option per vertex) and the model it induces."""

    choice: Tuple[int, ...]
    model: Interpretation

    def state(self, gp: GroundProgram) -> State:
        return State(gp.vertices, self.choice)


def _check_cap(gp: GroundProgram, cap: Optional[int]) -> None:
    cap = settings.ENUM_CAP if cap is None else cap
    total = gp.size ** len(gp.vc)
    if total > cap:
        raise ResourceCapError(f"{gp.size}^{len(gp.vc)} = {total} choice vectors exceed the enumeration cap {cap}")


def _evaluate(gp: GroundProgram, choice: Tuple[int, ...]) -> Optional[Equilibrium]:
    model = least_model(with_bridges(gp, np.array(choice)))
    values = model.values
    if np.all(vc_rows_satisfied(values[gp.decision_ids], values[gp.utility_ids])):
        return Equilibrium(choice, model)
    return None


def _coherent(gp: GroundProgram, jobs: int) -> Iterator[Equilibrium]:
    choices = itertools.product(range(1, gp.size + 1), repeat=len(gp.vc))
    if jobs <= 1:
        for choice in choices:
            found = _evaluate(gp, choice)
            if found is not None:
                yield found
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        while True:
            batch = list(itertools.islice(choices, BATCH))
            if not batch:
                return
            for found in pool.map(lambda c: _evaluate(gp, c), batch):
                if found is not None:
                    yield found


def _take(items: Iterable[Equilibrium], limit: Optional[int]) -> List[Equilibrium]:
    return list(items if limit is None else itertools.islice(items, limit))


def enumerate_coherent(p, sn=None, *, cap: Optional[int] = None, jobs: Optional[int] = None,
                       limit: Optional[int] = None) -> List[Equilibrium]:
    """
    All coherent models, one per accepted choice vector.

    Args:
        p: Program or ground program
        sn: Network used when p still needs grounding
        cap: Largest number of choice vectors to scan. Defaults to CGAP_ENUM_CAP
        jobs: Worker threads. Defaults to CGAP_JOBS
        limit: Stop after this many results

    Returns:
        Equilibrium list in lexicographic choice order
    """
    gp = as_ground(p, sn)
    _check_cap(gp, cap)
    found = _take(_coherent(gp, settings.JOBS if jobs is None else jobs), limit)
    log.debug("%d coherent models over %d choice vectors", len(found), gp.size ** len(gp.vc))
    return found


def enumerate_strong_equilibria(p, sn=None, *, cap: Optional[int] = None, jobs: Optional[int] = None,
                                limit: Optional[int] = None) -> List[Equilibrium]:
    """Coherent models whose decision atoms carry the largest utility at every vertex."""
    gp = as_ground(p, sn)
    _check_cap(gp, cap)
    coherent = _coherent(gp, settings.JOBS if jobs is None else jobs)
    found = _take((eq for eq in coherent if np.all(sum_max_rows(gp, eq.model.values))), limit)
    log.debug("%d strong equilibria", len(found))
    return found


def distinct_models(equilibria: Sequence[Equilibrium]) -> List[Equilibrium]:
    """First equilibrium of each group whose models agree after rounding to 1e-9."""
    seen = set()
    out = []
    for eq in equilibria:
        key = np.round(eq.model.values, 9).tobytes()
        if key not in seen:
            seen.add(key)
            out.append(eq)
    return out
