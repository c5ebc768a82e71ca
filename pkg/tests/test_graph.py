import math

import numpy as np
import pytest

from pgdepth.errors import EmptyInput, NoGeometry, ZeroVector
from pgdepth.geometry import CameraModel, project_point
from pgdepth.graph import (
    FusionConfig, GatedEdge, InstanceNode, PropagationGraph, build_graph, class_similarity,
    distance_score, fuse_global, fusion_weight_stats, geometric_depth, propagate,
)

CAM = CameraModel(f=721.5377, c_u=609.5593, c_v=172.854)


def node(id, u=0.0, v_prime=200.0, d_l=20.0, s_d=1.0, cls=(1.0, 0.0, 0.0), h=1.5, center=None, alpha=0.0):
    return InstanceNode(
        id=id, u_prime=u, v_prime=v_prime, v=v_prime - CAM.c_v, d_l=d_l, depth_score=s_d,
        cls_vec=np.array(cls, dtype=float), h3d=h, center3d=None if center is None else np.array(center),
        alpha=alpha,
    )


def random_nodes(rng, n):
    out = []
    for i in range(n):
        cls = rng.dirichlet(np.ones(3))
        out.append(node(
            i, u=rng.uniform(0, 1242), v_prime=rng.uniform(185, 375), d_l=rng.uniform(5, 60),
            s_d=rng.uniform(0, 1), cls=cls, h=rng.uniform(0.5, 3),
        ))
    return out


def shared_ground_nodes(rng, n, ground=1.65):
    nodes, truth = [], {}
    for i in range(n):
        h = rng.uniform(1.2, 2.0)
        p = (rng.uniform(-10, 10), ground - h / 2, rng.uniform(5, 50))
        pc, d = project_point(CAM, p)
        nodes.append(node(i, u=pc.u_prime, v_prime=pc.v_prime, d_l=d, s_d=rng.uniform(0.2, 1), h=h))
        truth[i] = d
    return nodes, truth


# ---- scores

def test_distance_score_examples():
    cfg = FusionConfig(t2d_max=1000)
    a = node(0, u=0, v_prime=0)
    assert distance_score(a, a, cfg) == 1
    assert distance_score(a, node(1, u=300, v_prime=400), cfg) == pytest.approx(0.5)
    corner = FusionConfig(t2d_max=math.hypot(1242, 375))
    assert distance_score(a, node(1, u=1242, v_prime=375), corner) == pytest.approx(0, abs=1e-12)
    assert distance_score(a, node(1, u=5000, v_prime=0), cfg) == 0


def test_distance_score_3d_variants():
    a = node(0, center=(0, 1, 10), h=1.0)
    b = node(1, center=(3, 1.5, 14), h=2.0)
    c3 = FusionConfig(distance_variant="centers3d", d_max=70)
    assert distance_score(a, b, c3) == pytest.approx(1 - math.sqrt(9 + 0.25 + 16) / (70 * math.sqrt(2)))
    b3 = FusionConfig(distance_variant="bottoms3d")
    # bottoms: 1.5 and 2.5
    assert distance_score(a, b, b3) == pytest.approx(math.exp(-1.0))


def test_class_similarity_examples():
    assert class_similarity([0.2, 0.5, 0.3], [0.2, 0.5, 0.3]) == pytest.approx(1)
    assert class_similarity([1, 0, 0], [0, 1, 0]) == 0
    assert class_similarity([1, 1, 0], [1, 0, 0]) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ZeroVector):
        class_similarity([0, 0, 0], [1, 0, 0])


# ---- graph structure

def test_two_nodes_single_edge_each():
    g = build_graph([node(0, u=100, v_prime=250), node(1, u=300, v_prime=220)], CAM)
    for i in (0, 1):
        (e,) = g.edges_into(i)
        assert e.s_e == 1.0


def brute_top_k(nodes, i, k, t2d_max):
    cands = []
    for j in nodes:
        if j.id == i.id:
            continue
        s2 = max(0.0, 1 - math.hypot(i.u_prime - j.u_prime, i.v_prime - j.v_prime) / t2d_max)
        fi, fj = i.cls_vec, j.cls_vec
        cos = sum(a * b for a, b in zip(fi, fj)) / math.sqrt(sum(a * a for a in fi) * sum(b * b for b in fj))
        w = j.depth_score * s2 * max(cos, 0.0)
        if w > 0:
            cands.append((-w, j.id))
    return [jid for _, jid in sorted(cands)[:k]]


@pytest.mark.parametrize("seed", range(20))
def test_pruning_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 13))
    nodes = random_nodes(rng, n)
    cfg = FusionConfig(k=5)
    g = build_graph(nodes, CAM, cfg)
    for i in nodes:
        edges = g.edges_into(i.id)
        assert [e.src for e in edges] == brute_top_k(nodes, i, 5, cfg.t2d_max)
        if edges:
            assert math.fsum(e.s_e for e in edges) == pytest.approx(1, abs=1e-9)


def test_seven_nodes_five_edges():
    rng = np.random.default_rng(7)
    nodes = random_nodes(rng, 7)
    for n in nodes:
        n.cls_vec = np.array([1.0, 0.0, 0.0])
        n.depth_score = rng.uniform(0.1, 1)
    g = build_graph(nodes, CAM, FusionConfig(k=5))
    assert all(len(g.edges_into(n.id)) == 5 for n in nodes)


def test_tie_break_by_source_id():
    nodes = [node(i, u=100.0, v_prime=250.0) for i in range(4)]
    g = build_graph(nodes, CAM, FusionConfig(k=2))
    assert [e.src for e in g.edges_into(3)] == [0, 1]
    assert [e.src for e in g.edges_into(0)] == [1, 2]


def test_singular_destination_has_no_geometry():
    nodes = [node(0, v_prime=CAM.c_v + 0.5), node(1, v_prime=250), node(2, v_prime=260)]
    res = propagate(nodes, CAM, FusionConfig())
    assert res.graph.edges_into(0) == []
    assert 0 in res.no_geometry
    assert res.d[0] == nodes[0].d_l and res.d_g[0] is None


def test_single_node_falls_back_to_local():
    res = propagate([node(0, d_l=12.5)], CAM)
    assert res.no_geometry == {0}
    assert res.d[0] == 12.5


def test_zero_gates_dropped():
    nodes = [node(0, cls=(1, 0, 0)), node(1, cls=(0, 1, 0), u=50)]
    g = build_graph(nodes, CAM)
    assert g.no_geometry == {0, 1}


def test_gating_off_keeps_every_candidate_uniformly():
    rng = np.random.default_rng(3)
    nodes = random_nodes(rng, 9)
    g = build_graph(nodes, CAM, FusionConfig(k=5, gating=False))
    for n in nodes:
        edges = g.edges_into(n.id)
        assert len(edges) == 8
        assert all(e.s_e == pytest.approx(1 / 8) for e in edges)


def test_empty_graph_rejected():
    with pytest.raises(EmptyInput):
        build_graph([], CAM)


# ---- geometric depth and fusion

@pytest.mark.parametrize("seed", range(5))
def test_exact_recovery_on_shared_ground(seed):
    rng = np.random.default_rng(seed)
    nodes, truth = shared_ground_nodes(rng, 8)
    res = propagate(nodes, CAM, FusionConfig(k=5))
    for i, d in truth.items():
        assert res.d_g[i] == pytest.approx(d, abs=1e-9)


def test_geometric_depth_weighted_mean():
    g = PropagationGraph(nodes=[], in_edges={
        0: [GatedEdge(1, 0, 1, 1, 3, 0.75, 10.0), GatedEdge(2, 0, 1, 1, 1, 0.25, 20.0)],
        1: [GatedEdge(0, 1, 1, 1, 1, 1.0, 7.5)],
        2: [],
    })
    assert geometric_depth(g, 0) == 12.5
    assert geometric_depth(g, 1) == 7.5
    with pytest.raises(NoGeometry):
        geometric_depth(g, 2)


def test_noise_contraction():
    rng = np.random.default_rng(11)
    nodes, truth = shared_ground_nodes(rng, 6)
    sigma = 1.0
    cfg = FusionConfig(k=5)
    dst = 0
    samples = []
    for _ in range(2000):
        noisy = [InstanceNode(**{**n.__dict__, "d_l": truth[n.id] + sigma * rng.standard_normal()}) for n in nodes]
        samples.append(propagate(noisy, CAM, cfg).d_g[dst])
    # each transfer scales the source noise by v_j / v_i
    v = {n.id: n.v for n in nodes}
    worst = max((v[j] / v[dst]) ** 2 for j in v if j != dst) * sigma**2
    assert np.var(samples) <= worst


def test_fuse_global():
    assert fuse_global(10, 14, 0.0) == 12
    assert fuse_global(10, 14, 800) == pytest.approx(10)
    alpha = 0.7
    w = 1 / (1 + math.exp(-alpha))
    assert fuse_global(10, 14, alpha) == pytest.approx(w * 10 + (1 - w) * 14, abs=1e-12)
    out = fuse_global(np.array([10.0, 30.0]), np.array([14.0, 20.0]), np.array([-1.0, 2.0]))
    assert np.all((out >= np.minimum([10, 30], [14, 20])) & (out <= np.maximum([10, 30], [14, 20])))


def test_propagate_uses_alpha():
    rng = np.random.default_rng(2)
    nodes, truth = shared_ground_nodes(rng, 4)
    nodes[0].d_l += 3.0
    nodes[0].alpha = 0.4
    res = propagate(nodes, CAM)
    w = 1 / (1 + math.exp(-0.4))
    assert res.d[0] == pytest.approx(w * nodes[0].d_l + (1 - w) * res.d_g[0], abs=1e-12)


def test_propagate_deterministic():
    rng = np.random.default_rng(5)
    nodes = random_nodes(rng, 10)
    a = propagate(nodes, CAM)
    b = propagate(nodes, CAM)
    assert a.d == b.d and a.graph.all_edges() == b.graph.all_edges()


# ---- weight statistics

def test_weight_stats():
    st = fusion_weight_stats([0.5] * 6, [10] * 6, [0] * 6)
    assert st.counts.sum() == 6 and np.count_nonzero(st.counts) == 1
    assert len(st.bin_edges) == 21

    rng = np.random.default_rng(0)
    w = rng.uniform(0, 1, 500)
    st = fusion_weight_stats(w, rng.uniform(5, 50, 500), rng.integers(0, 3, 500))
    brute = [sum(1 for x in w if lo <= x < lo + 0.05 or (lo == 0.95 and x == 1.0)) for lo in np.arange(20) * 0.05]
    assert list(st.counts) == brute

    one = fusion_weight_stats([0.3], [12.0], [1])
    assert one.scatter == [(12.0, 0.3, 1)]
    with pytest.raises(EmptyInput):
        fusion_weight_stats([], [], [])
