"""Depth propagation graph over the instances of one image.

Every ordered pair ``j -> i`` (``j != i``) is a candidate edge carrying the
same-ground depth transfer from ``j`` to ``i``. Its unnormalized gate is
``s_d[j] * s_dist(i, j) * max(s_cls(i, j), 0)``; per destination only the
top ``k`` gates survive and are renormalized to sum to one. The geometric
depth of ``i`` is the gate-weighted mean of its surviving transfers, and the
final depth blends it with the local depth through ``sigmoid(alpha)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import EmptyInput, HorizonSingular, NoGeometry, ZeroVector
from .geometry import V_MIN, CameraModel, pairwise_depth_approx

BOTTOM_SCALE = 1.0  # meters, decay length of the bottom-height score
N_WEIGHT_BINS = 20


class DistanceVariant(str, enum.Enum):
    CENTERS_2D = "centers2d"
    CENTERS_3D = "centers3d"
    BOTTOMS_3D = "bottoms3d"


@dataclass
class InstanceNode:
    id: int
    u_prime: float
    v_prime: float
    v: float
    d_l: float
    depth_score: float
    cls_vec: np.ndarray
    h3d: float
    center3d: np.ndarray | None = None
    category: int = 0
    alpha: float = 0.0

    @property
    def bottom(self) -> float:
        if self.center3d is None:
            raise ValueError(f"node {self.id} has no 3D center")
        return float(self.center3d[1]) + 0.5 * self.h3d


@dataclass
class FusionConfig:
    k: int = 5
    t2d_max: float = math.hypot(1242.0, 375.0)
    distance_variant: DistanceVariant = DistanceVariant.CENTERS_2D
    d_max: float = 70.0
    gating: bool = True
    v_min: float = V_MIN

    def __post_init__(self):
        self.distance_variant = DistanceVariant(self.distance_variant)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.t2d_max > 0:
            raise ValueError("t2d_max must be positive")


@dataclass(frozen=True)
class GatedEdge:
    src: int
    dst: int
    s_2d: float
    s_cls: float
    weight: float
    s_e: float
    d_transfer: float


@dataclass
class PropagationGraph:
    nodes: list[InstanceNode]
    in_edges: dict[int, list[GatedEdge]] = field(default_factory=dict)
    singular: set[int] = field(default_factory=set)

    def edges_into(self, i: int) -> list[GatedEdge]:
        return self.in_edges.get(i, [])

    @property
    def no_geometry(self) -> set[int]:
        return {n.id for n in self.nodes if not self.in_edges.get(n.id)}

    def all_edges(self) -> list[GatedEdge]:
        return [e for n in self.nodes for e in self.in_edges.get(n.id, [])]


def distance_score(i: InstanceNode, j: InstanceNode, cfg: FusionConfig) -> float:
    variant = cfg.distance_variant
    if variant is DistanceVariant.CENTERS_2D:
        t = math.hypot(i.u_prime - j.u_prime, i.v_prime - j.v_prime)
        s = 1.0 - t / cfg.t2d_max
    elif variant is DistanceVariant.CENTERS_3D:
        t = float(np.linalg.norm(np.asarray(i.center3d) - np.asarray(j.center3d)))
        s = 1.0 - t / (cfg.d_max * math.sqrt(2.0))
    else:
        s = math.exp(-abs(i.bottom - j.bottom) / BOTTOM_SCALE)
    return min(1.0, max(0.0, s))


def class_similarity(f_i, f_j) -> float:
    f_i = np.asarray(f_i, dtype=float)
    f_j = np.asarray(f_j, dtype=float)
    if f_i.shape != f_j.shape:
        raise ValueError(f"class vectors differ in length: {f_i.shape} vs {f_j.shape}")
    ni, nj = np.linalg.norm(f_i), np.linalg.norm(f_j)
    if ni == 0 or nj == 0:
        raise ZeroVector("class vector has zero norm")
    return float(np.clip(f_i @ f_j / (ni * nj), -1.0, 1.0))


def build_graph(nodes: list[InstanceNode], cam: CameraModel, cfg: FusionConfig | None = None) -> PropagationGraph:
    """Build the pruned, gated graph.

    Candidates with a zero gate are dropped before pruning; the remaining
    ones are ranked by (gate desc, source id asc). With ``cfg.gating`` off,
    every non-singular candidate is kept with a uniform weight.
    """
    cfg = cfg or FusionConfig()
    if not nodes:
        raise EmptyInput("graph needs at least one node")
    graph = PropagationGraph(nodes=list(nodes))
    for i in nodes:
        if not abs(i.v) > cfg.v_min:
            graph.singular.add(i.id)
            graph.in_edges[i.id] = []
            continue
        cands = []
        for j in nodes:
            if j.id == i.id:
                continue
            try:
                d_t = pairwise_depth_approx(cam, j.v, j.d_l, j.h3d, i.v, i.h3d, v_min=cfg.v_min)
            except (HorizonSingular, ValueError):
                continue
            s_2d = distance_score(i, j, cfg)
            s_cls = class_similarity(i.cls_vec, j.cls_vec)
            w = j.depth_score * s_2d * max(s_cls, 0.0)
            cands.append((j.id, s_2d, s_cls, w, d_t))
        if cfg.gating:
            cands = [c for c in cands if c[3] > 0]
            cands.sort(key=lambda c: (-c[3], c[0]))
            cands = cands[: cfg.k]
            total = math.fsum(c[3] for c in cands)
            edges = [GatedEdge(j, i.id, s2, sc, w, w / total, dt) for j, s2, sc, w, dt in cands]
        else:
            n = len(cands)
            edges = [GatedEdge(j, i.id, s2, sc, w, 1.0 / n, dt) for j, s2, sc, w, dt in cands]
        graph.in_edges[i.id] = edges
    return graph


def geometric_depth(graph: PropagationGraph, i: int) -> float:
    edges = graph.edges_into(i)
    if not edges:
        raise NoGeometry(f"node {i} has no usable in-edges")
    return math.fsum(e.s_e * e.d_transfer for e in edges)


def fuse_global(d_l, d_g, alpha):
    """Location-aware blend: ``sigmoid(alpha) * d_l + (1 - sigmoid(alpha)) * d_g``."""
    w = expit(alpha)
    out = w * np.asarray(d_l, dtype=float) + (1.0 - w) * np.asarray(d_g, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite fused depth")
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class PropagationResult:
    graph: PropagationGraph
    d_g: dict[int, float | None]
    d: dict[int, float]
    no_geometry: set[int]


def propagate(nodes: list[InstanceNode], cam: CameraModel, cfg: FusionConfig | None = None) -> PropagationResult:
    """Run graph construction, geometric depth and the final fusion for one image."""
    graph = build_graph(nodes, cam, cfg)
    d_g: dict[int, float | None] = {}
    d: dict[int, float] = {}
    for n in nodes:
        try:
            g = geometric_depth(graph, n.id)
        except NoGeometry:
            d_g[n.id] = None
            d[n.id] = n.d_l
            continue
        d_g[n.id] = g
        d[n.id] = fuse_global(n.d_l, g, n.alpha)
    return PropagationResult(graph, d_g, d, graph.no_geometry)


@dataclass
class WeightStats:
    bin_edges: np.ndarray
    counts: np.ndarray
    scatter: list[tuple[float, float, int]]


def fusion_weight_stats(weights, depths, categories) -> WeightStats:
    """Histogram of ``sigmoid(alpha)`` over [0, 1] plus (depth, weight, category) triples."""
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0:
        raise EmptyInput("no fusion weights")
    depths = np.asarray(depths, dtype=float)
    categories = list(categories)
    if not (len(depths) == len(categories) == len(weights)):
        raise ValueError("weights, depths and categories differ in length")
    counts, edges = np.histogram(weights, bins=N_WEIGHT_BINS, range=(0.0, 1.0))
    scatter = [(float(d), float(w), int(c)) for d, w, c in zip(depths, weights, categories)]
    return WeightStats(edges, counts, scatter)
