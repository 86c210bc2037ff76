"""Residual bookkeeping and claim application."""

import pytest

from flmesh.network import ClaimSet, NetworkState, route_claims
from flmesh.topology import builtin_topology, link_key, shortest_physical_route


def fresh():
    g = builtin_topology("medium")
    return g, NetworkState(g)


def test_initial_residuals_equal_capacity():
    g, st = fresh()
    for i, n in g.nodes.items():
        assert st.node_residual(i) == n.capacity
    for lk, l in g.links.items():
        assert st.link_residual(lk) == l.capacity


def test_apply_and_release_are_inverse():
    g, st = fresh()
    cs = ClaimSet(request_id=0)
    cs.add_node(0, 5.0)
    cs.add_link(link_key(0, 1), 30.0)
    st.apply(cs)
    assert st.node_residual(0) == g.nodes[0].capacity - 5.0
    assert st.link_residual(link_key(0, 1)) == g.links[link_key(0, 1)].capacity - 30.0
    st.release(cs)
    assert st.node_residual(0) == g.nodes[0].capacity
    assert st.link_residual(link_key(0, 1)) == g.links[link_key(0, 1)].capacity


def test_claims_stack_per_flow():
    cs = ClaimSet(request_id=1)
    cs.add_link(link_key(0, 1), 20.0)
    cs.add_link(link_key(0, 1), 20.0)
    assert cs.link_mbps[link_key(0, 1)] == 40.0


def test_fits_respects_pending_claims():
    g, st = fresh()
    lk = link_key(0, 1)
    cap = g.links[lk].capacity
    big = ClaimSet(request_id=0)
    big.add_link(lk, cap)
    st.apply(big)
    assert not st.link_fits(lk, 0.001)
    assert st.link_fits(lk, 0.0)


def test_overshoot_raises():
    g, st = fresh()
    lk = link_key(0, 1)
    bad = ClaimSet(request_id=0)
    bad.add_link(lk, g.links[lk].capacity + 1.0)
    with pytest.raises(Exception):
        st.apply(bad)


def test_release_without_apply_raises():
    g, st = fresh()
    cs = ClaimSet(request_id=0)
    cs.add_node(0, 5.0)
    with pytest.raises(Exception):
        st.release(cs)


def test_clock_integrates_usage():
    g, st = fresh()
    cs = ClaimSet(request_id=0)
    cs.add_node(0, 10.0)
    st.advance_clock(100.0)
    st.apply(cs)
    st.advance_clock(300.0)  # 200 ms at 10 units
    st.release(cs)
    st.advance_clock(400.0)
    node_int, _ = st.utilization_integrals()
    assert node_int[0] == pytest.approx(10.0 * 200.0)


def test_route_claims_cover_every_hop():
    g, st = fresh()
    r = shortest_physical_route(g, 0, 5, demand=10.0, used={})
    cs = ClaimSet(request_id=0)
    route_claims(cs, r.nodes, 10.0)
    assert set(cs.link_mbps) == set(r.links)
    assert all(v == 10.0 for v in cs.link_mbps.values())
