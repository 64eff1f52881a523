"""Network construction and size-bounded clustering tests."""

import itertools
import math

import numpy as np
import pytest

from sfcsim.topology import (TopologyError, build_network, cluster_adjacency,
                             make_clusters)


def two_dc_config():
    return {"dcs": [{"position": [0.0, 0.0]}, {"position": [300.0, 0.0]}],
            "links": [{"a": 0, "b": 1, "bandwidth_mbps": 1000.0}]}


def test_smallest_connected_graph():
    g = build_network(two_dc_config())
    assert g.dc_count == 2
    assert len(g.links) == 1
    assert g.links[0].bandwidth_cap == 1000.0
    assert g.links[0].distance == 300.0


def test_default_capacities():
    g = build_network({"dc_count": 6, "seed": 3})
    for dc in g.dcs:
        assert dc.storage_cap == 2048.0
        assert dc.ram_cap == 256.0
        assert dc.compute_cap == 40.0
    for link in g.links:
        assert link.bandwidth_cap == 1000.0


def test_generated_graph_deterministic_and_connected():
    a = build_network({"dc_count": 40, "seed": 7})
    b = build_network({"dc_count": 40, "seed": 7})
    assert [dc.position for dc in a.dcs] == [dc.position for dc in b.dcs]
    assert [l.key for l in a.links] == [l.key for l in b.links]
    # connectivity via reachability scan
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, _ in a.neighbors(u):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    assert len(seen) == 40


def test_rejects_bad_configs():
    with pytest.raises(TopologyError):
        build_network({"dc_count": 1})
    with pytest.raises(TopologyError):
        build_network({"dcs": [{"position": [0, 0]}, {"position": [1, 0]},
                               {"position": [2, 0]}],
                       "links": [{"a": 0, "b": 1}]})  # DC 2 unreachable
    with pytest.raises(TopologyError):
        build_network({"dcs": [{"position": [0, 0], "vcpu": -1},
                               {"position": [1, 0]}],
                       "links": [{"a": 0, "b": 1}]})


def square_corner_graph():
    return build_network({
        "dcs": [{"position": [0.0, 0.0]}, {"position": [10.0, 0.0]},
                {"position": [0.0, 100.0]}, {"position": [10.0, 100.0]}],
        "links": [{"a": 0, "b": 1}, {"a": 2, "b": 3},
                  {"a": 0, "b": 2}, {"a": 1, "b": 3}]})


def test_square_corners_pair_nearest():
    """Oracle: exhaustive scan of all 2|2 partitions for the one minimizing
    within-cluster distance; the greedy assignment must find it."""
    g = square_corner_graph()
    pts = [g.dc(i).position for i in range(4)]

    def within_cost(groups):
        cost = 0.0
        for grp in groups:
            cx = sum(pts[i][0] for i in grp) / len(grp)
            cy = sum(pts[i][1] for i in grp) / len(grp)
            cost += sum(math.hypot(pts[i][0] - cx, pts[i][1] - cy) for i in grp)
        return cost

    best = min(((a, tuple(sorted(set(range(4)) - set(a))))
                for a in itertools.combinations(range(4), 2) if 0 in a),
               key=within_cost)
    for seed in range(5):
        part = make_clusters(g, 2, seed)
        got = tuple(sorted(tuple(m) for m in part.clusters.values()))
        assert got == tuple(sorted(best))


def test_single_cluster_when_limit_covers_all():
    g = build_network({"dc_count": 8, "seed": 1})
    part = make_clusters(g, 8, 0)
    assert part.cluster_count == 1
    assert part.clusters[0] == list(range(8))
    assert part.inter_links == []


def test_forty_dcs_limit_four():
    g = build_network({"dc_count": 40, "seed": 7})
    part = make_clusters(g, 4, 0)
    assert part.cluster_count == 10
    assert all(len(m) <= 4 for m in part.clusters.values())


def test_partition_invariants_random_instances():
    rng = np.random.default_rng(42)
    for trial in range(30):
        n = int(rng.integers(2, 25))
        limit = int(rng.integers(1, n + 1))
        g = build_network({"dc_count": n, "seed": int(rng.integers(2 ** 31))})
        part = make_clusters(g, limit, int(rng.integers(2 ** 31)))
        covered = sorted(d for m in part.clusters.values() for d in m)
        assert covered == list(range(n))
        assert all(len(m) <= limit for m in part.clusters.values())
        assert part.cluster_count >= math.ceil(n / limit)
        # link classification matches an independent pass
        intra = {c: [] for c in part.clusters}
        inter = []
        for link in g.links:
            if part.assignment[link.a] == part.assignment[link.b]:
                intra[part.assignment[link.a]].append(link)
            else:
                inter.append(link)
        assert part.inter_links == inter
        assert part.intra_links == intra


def test_partition_stability_at_termination():
    """No single DC strictly prefers another non-full cluster's centroid."""
    rng = np.random.default_rng(7)
    for trial in range(20):
        n = int(rng.integers(4, 30))
        limit = int(rng.integers(2, 6))
        g = build_network({"dc_count": n, "seed": int(rng.integers(2 ** 31))})
        part = make_clusters(g, limit, int(rng.integers(2 ** 31)))
        for i in range(n):
            own = part.assignment[i]
            p = g.dc(i).position
            d_own = math.hypot(p[0] - part.centroids[own][0],
                               p[1] - part.centroids[own][1])
            for c, members in part.clusters.items():
                if c == own or len(members) >= limit:
                    continue
                d_c = math.hypot(p[0] - part.centroids[c][0],
                                 p[1] - part.centroids[c][1])
                assert d_c >= d_own - 1e-9


def test_clustering_deterministic():
    g = build_network({"dc_count": 30, "seed": 5})
    p1 = make_clusters(g, 5, 11)
    p2 = make_clusters(g, 5, 11)
    assert p1.assignment == p2.assignment
    assert p1.clusters == p2.clusters


def test_cluster_adjacency_trivial_cases():
    g = build_network({"dc_count": 4, "seed": 0})
    one = make_clusters(g, 4, 0)
    assert cluster_adjacency(one) == {0: []}

    g2 = build_network({
        "dcs": [{"position": [0, 0]}, {"position": [1, 0]},
                {"position": [100, 0]}, {"position": [101, 0]}],
        "links": [{"a": 0, "b": 1}, {"a": 2, "b": 3}, {"a": 1, "b": 2}]})
    part = make_clusters(g2, 2, 0)
    adj = cluster_adjacency(part)
    assert len(adj) == 2
    assert adj[0] == [1] and adj[1] == [0]


def test_cluster_adjacency_matches_brute_force():
    g = build_network({"dc_count": 20, "seed": 13})
    part = make_clusters(g, 5, 1)
    adj = cluster_adjacency(part)
    expect = {c: set() for c in part.clusters}
    for link in g.links:
        ca, cb = part.assignment[link.a], part.assignment[link.b]
        if ca != cb:
            expect[ca].add(cb)
            expect[cb].add(ca)
    assert adj == {c: sorted(s) for c, s in expect.items()}
