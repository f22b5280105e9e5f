# scripts/test_grounder.py
import pytest

import cgap_settings as settings
from cgap_errors import ResourceCapError, UnknownAtomError, ValidationError
from cgap_model import Edge, SocialNetwork
from cgap_text import parse_program
from conftest import load_program
from grounder import as_ground, ground, intern

SPREAD = (
    "buyAsus^U(Y):Mu <- friend(X,Y):1, buyAsus^D(X):Mu.\n"
    "buyMac^U(Y):Mu <- friend(X,Y):1, buyMac^D(X):Mu.\n"
    "buyMac^D(X),buyAsus^D(X) <~ buyMac^U(X),buyAsus^U(X).\n"
)


def _chain(n):
    edges = tuple(Edge(str(k), str(k + 1), "friend") for k in range(1, n))
    return SocialNetwork(tuple(str(k) for k in range(1, n + 1)), edges)


def test_domain_and_vc_instances(asus_mac):
    assert asus_mac.vertices == ("1", "2")
    assert asus_mac.size == 2
    assert asus_mac.decision_ids.shape == (2, 2)
    assert asus_mac.index.text(int(asus_mac.decision_ids[0, 1])) == "buyAsus^D(1)"
    assert asus_mac.index.text(int(asus_mac.utility_ids[1, 0])) == "buyMac^U(2)"


def test_relevance_grounding_follows_edge_facts(asus_mac):
    # one fact, two base facts and one spread rule per option over the single edge
    assert len(asus_mac.rules) == 5
    heads = sorted(asus_mac.index.text(r.head) for r in asus_mac.rules)
    assert heads == ["buyAsus^U(1)", "buyAsus^U(2)", "buyMac^U(1)", "buyMac^U(2)", "friend(1,2)"]


def test_naive_grounding_covers_the_full_domain():
    p = load_program("asus_mac.cgap")
    naive = ground(p, naive=True)
    # every (X, Y) pair of the two-vertex domain, per spread rule
    assert len(naive.rules) == 3 + 2 * 4


def test_network_vertices_join_the_domain():
    p = parse_program(SPREAD)
    gp = ground(p, _chain(4))
    assert gp.vertices == ("1", "2", "3", "4")
    assert len(gp.rules) == 3 + 2 * 3
    assert gp.rules_for("buyAsus^U(2)")
    assert gp.rules_for("buyAsus^U(1)") == ()


def test_empty_domain_is_rejected():
    p = parse_program("buyMac^D(X),buyAsus^D(X) <~ buyMac^U(X),buyAsus^U(X).\n")
    with pytest.raises(ValidationError, match="empty"):
        ground(p)


def test_ground_cap():
    p = parse_program("a(Y):Mu <- b(X):Mu, c(Z):Mu2.\nb1(X),b2(X) <~ a(X),b(X).\n")
    settings.apply_overrides({"ground_cap": 5})
    with pytest.raises(ResourceCapError):
        ground(p, _chain(3))


def test_templates_expand_per_vertex():
    p = parse_program(
        "c1^U(V) : avg{ Mu | friend(U,V):1, c1^D(U):Mu } .\n"
        "c2^U(V) : max{ Mu | friend(U,V):1, c2^D(U):Mu } if sum >= 0.5 .\n"
        "c1^D(X),c2^D(X) <~ c1^U(X),c2^U(X).\n"
    )
    sn = SocialNetwork(("1", "2", "3"), (Edge("1", "3", "friend"), Edge("2", "3", "friend"),
                                         Edge("3", "1", "friend", 0.5)))
    gp = ground(p, sn)
    avg = [r for r in gp.rules if gp.index.text(r.head) == "c1^U(3)"]
    assert len(avg) == 1
    assert sorted(gp.index.text(a) for a, _ in avg[0].body) == ["c1^D(1)", "c1^D(2)"]
    # the 0.5 edge is below the template's edge constant
    assert gp.rules_for("c1^U(1)") == ()
    gated = [r for r in gp.rules if gp.index.text(r.head) == "c2^U(3)"][0]
    fn = gp.functions.get(gated.annotation.fn)
    assert fn.tau == 0.5


def test_intern_and_as_ground(asus_mac):
    assert intern(asus_mac, "friend(1,2)") == asus_mac.index.id_of("friend(1,2)")
    with pytest.raises(UnknownAtomError):
        intern(asus_mac, "friend(2,1)")
    assert as_ground(asus_mac) is asus_mac
