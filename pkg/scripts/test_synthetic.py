# scripts/test_synthetic.py
import pytest

from cgap_errors import ValidationError
from cgap_model import Edge, SocialNetwork
from synthetic import (
    FRIEND, network_from_graph, network_stats, planted_partition, synth_likes, synth_network, undirected,
)


def test_planted_partition_is_seeded():
    a = planted_partition(20, 40, seed=1)
    b = planted_partition(20, 40, seed=1)
    assert a.number_of_nodes() == 20
    assert sorted(a.edges) == sorted(b.edges)
    assert set(a.nodes[0]) >= {"block"}


@pytest.mark.parametrize("n, e, communities, homophily", [
    (10, 5, 2, 0.9),
    (10, 50, 2, 0.9),
    (10, 20, 2, 1.5),
    (10, 20, 11, 0.9),
    (4, 6, 4, 0.9),
])
def test_planted_partition_rejects_impossible_shapes(n, e, communities, homophily):
    with pytest.raises(ValidationError):
        planted_partition(n, e, communities, homophily)


def test_friendships_become_two_directed_edges():
    graph = planted_partition(12, 20, seed=3)
    sn = network_from_graph(graph)
    assert len(sn.edges) == 2 * graph.number_of_edges()
    assert all(e.label == FRIEND and e.weight == 1.0 for e in sn.edges)
    assert undirected(sn).number_of_edges() == graph.number_of_edges()


def test_likes_follow_the_home_community():
    graph = planted_partition(20, 40, seed=5)
    rows = synth_likes(graph, active=1.0, bias=1.0, seed=5)
    assert {user for user, _, _ in rows} == {str(v) for v in graph.nodes}
    for user, page, party in rows:
        assert party == ("p1" if graph.nodes[int(user)]["block"] == 0 else "p2")
        assert page.startswith(party + "_page")
    assert synth_likes(graph, active=0.0, seed=5) == []
    with pytest.raises(ValidationError):
        synth_likes(graph, bias=2.0)


def test_synth_network_is_reproducible():
    first = synth_network(30, 60, seed=7)
    again = synth_network(30, 60, seed=7)
    assert first[0] == again[0]
    assert first[1] == again[1]


def test_stats_of_a_triangle():
    sn = SocialNetwork(("a", "b", "c"), (Edge("a", "b", FRIEND), Edge("b", "c", FRIEND), Edge("c", "a", FRIEND)))
    stats = network_stats(sn, diameter=True)
    assert stats["vertices"] == 3 and stats["edges"] == 3
    assert stats["triangles"] == 1
    assert stats["average_clustering"] == pytest.approx(1.0)
    assert stats["density"] == pytest.approx(1.0)
    assert stats["largest_component_vertex_share"] == 1.0
    assert stats["diameter"] == 1
