# scripts/synthetic.py
"""
Synthetic stand-in for a friendship network with political page likes.

The network is a planted partition: each community leans towards one party,
and homophily is the expected share of edges that stay inside a community.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from cgap_errors import ValidationError
from cgap_model import Edge, SocialNetwork

log = logging.getLogger(__name__)

FRIEND = "friend"
PARTIES = ("p1", "p2", "p3")


def _community_sizes(n: int, communities: int) -> List[int]:
    base, extra = divmod(n, communities)
    return [base + (1 if k < extra else 0) for k in range(communities)]


def planted_partition(n: int, e: int, communities: int = 2, homophily: float = 0.9,
                      seed: Optional[int] = None) -> nx.Graph:
    """
    Undirected planted-partition graph with about e edges.

    Raises:
        ValidationError: when no edge probabilities in [0,1] give e edges
    """
    if n < 1 or not 1 <= communities <= n:
        raise ValidationError(f"need 1 <= communities <= n, got n={n}, communities={communities}")
    if not 0 <= homophily <= 1:
        raise ValidationError(f"homophily {homophily} outside [0,1]")
    pairs = n * (n - 1) // 2
    if e < n - 1 or e > pairs:
        raise ValidationError(f"{e} edges is infeasible for {n} vertices (need {n - 1}..{pairs})")

    sizes = _community_sizes(n, communities)
    inside = sum(s * (s - 1) // 2 for s in sizes)
    between = pairs - inside
    p_in = homophily * e / inside if inside else 0.0
    p_out = (1 - homophily) * e / between if between else 0.0
    if (inside == 0 and homophily > 0) or (between == 0 and homophily < 1) or p_in > 1 or p_out > 1:
        raise ValidationError(f"homophily {homophily} cannot place {e} edges over communities of sizes {sizes}")
    graph = nx.random_partition_graph(sizes, p_in, p_out, seed=seed)
    log.debug("planted partition: %d vertices, %d edges (p_in=%.3g, p_out=%.3g)",
              graph.number_of_nodes(), graph.number_of_edges(), p_in, p_out)
    return graph


def network_from_graph(graph: nx.Graph, label: str = FRIEND) -> SocialNetwork:
    """Each undirected friendship becomes two directed edge facts of weight 1."""
    vertices = tuple(str(v) for v in graph.nodes)
    edges = []
    for u, v in graph.edges:
        edges.append(Edge(str(u), str(v), label))
        edges.append(Edge(str(v), str(u), label))
    return SocialNetwork(vertices, tuple(edges))


def undirected(sn: SocialNetwork, label: Optional[str] = None) -> nx.Graph:
    """Friendship graph of a network, ignoring direction and self-loops."""
    graph = nx.Graph()
    graph.add_nodes_from(sn.vertices)
    graph.add_edges_from((e.source, e.target) for e in sn.edges
                         if e.source != e.target and (label is None or e.label == label))
    return graph


def synth_likes(graph: nx.Graph, parties: Sequence[str] = PARTIES, active: float = 0.5, bias: float = 0.8,
                mean_likes: float = 2.0, seed: Optional[int] = None) -> List[Tuple[str, str, str]]:
    """
    Political page likes for a planted-partition graph.

    A share `active` of users like at least one page; each like goes to the
    community's party with probability `bias`, otherwise to a uniform other party.
    """
    if not 0 <= active <= 1 or not 0 <= bias <= 1:
        raise ValidationError("active and bias must lie in [0,1]")
    rng = np.random.default_rng(seed)
    block = nx.get_node_attributes(graph, "block")
    m = len(parties)
    rows: List[Tuple[str, str, str]] = []
    for v in graph.nodes:
        if rng.random() >= active:
            continue
        home = block.get(v, 0) % m
        for _ in range(1 + rng.poisson(mean_likes)):
            if m == 1 or rng.random() < bias:
                party = home
            else:
                party = (home + 1 + int(rng.integers(m - 1))) % m
            page = int(rng.integers(5))
            rows.append((str(v), f"{parties[party]}_page{page}", parties[party]))
    return rows


def synth_network(n: int, e: int, communities: int = 2, homophily: float = 0.9, seed: Optional[int] = None,
                  **likes_options) -> Tuple[SocialNetwork, List[Tuple[str, str, str]]]:
    """
    Seeded synthetic network and likes table.

    Args:
        n: Vertices
        e: Expected undirected edges
        communities: Planted communities; community k leans towards party k mod 3
        homophily: Expected share of edges inside communities
        seed: Seed for both the graph and the likes

    Returns:
        (network with two directed edge facts per friendship, likes rows)
    """
    seeds = np.random.SeedSequence(seed).generate_state(2)
    graph = planted_partition(n, e, communities, homophily, seed=int(seeds[0]))
    return network_from_graph(graph), synth_likes(graph, seed=int(seeds[1]), **likes_options)


def network_stats(sn: SocialNetwork, diameter: bool = False) -> Dict[str, float]:
    """
    Summary statistics of the undirected friendship graph.

    Args:
        sn: Network
        diameter: Also compute the diameter of the largest component (slow on big graphs)
    """
    graph = undirected(sn)
    n, m = graph.number_of_nodes(), graph.number_of_edges()
    stats: Dict[str, float] = {
        "vertices": n,
        "edges": m,
        "average_degree": 2 * m / n if n else 0.0,
        "density": nx.density(graph) if n > 1 else 0.0,
        "average_clustering": nx.average_clustering(graph) if n else 0.0,
        "triangles": sum(nx.triangles(graph).values()) // 3,
    }
    if n:
        largest = graph.subgraph(max(nx.connected_components(graph), key=len))
        stats["largest_component_vertices"] = largest.number_of_nodes()
        stats["largest_component_edges"] = largest.number_of_edges()
        stats["largest_component_vertex_share"] = largest.number_of_nodes() / n
        stats["largest_component_edge_share"] = largest.number_of_edges() / m if m else 1.0
        if diameter:
            stats["diameter"] = nx.diameter(largest)
    return stats
