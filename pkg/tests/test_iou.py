import math

import numpy as np
import pytest

from pgdepth.errors import DegenerateBox
from pgdepth.geometry import Box3D
from pgdepth.iou import ScoredDetection, bev_iou, iou_3d, rotated_nms


def inside(box, x, z):
    # R_y(yaw) sends the box's length axis to (cos yaw, -sin yaw) in (x, z)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx, dz = x - box.x, z - box.z
    along = dx * c - dz * s
    across = dx * s + dz * c
    return (np.abs(along) <= box.l / 2) & (np.abs(across) <= box.w / 2)


def mc_bev_iou(a, b, n, rng):
    r = max(math.hypot(a.w, a.l), math.hypot(b.w, b.l))
    lo_x, hi_x = min(a.x, b.x) - r, max(a.x, b.x) + r
    lo_z, hi_z = min(a.z, b.z) - r, max(a.z, b.z) + r
    x = rng.uniform(lo_x, hi_x, n)
    z = rng.uniform(lo_z, hi_z, n)
    ia, ib = inside(a, x, z), inside(b, x, z)
    union = np.count_nonzero(ia | ib)
    return np.count_nonzero(ia & ib) / union if union else 0.0


def random_pair(rng):
    a = Box3D(rng.uniform(-2, 2), 0, rng.uniform(8, 12), rng.uniform(0.5, 3), rng.uniform(0.5, 5),
              1.5, rng.uniform(-math.pi, math.pi))
    b = Box3D(a.x + rng.normal(0, 1), 0, a.z + rng.normal(0, 1), rng.uniform(0.5, 3), rng.uniform(0.5, 5),
              1.5, rng.uniform(-math.pi, math.pi))
    return a, b


def test_identical_and_disjoint():
    a = Box3D(0, 0, 10, 1.6, 3.9, 1.5, 0.3)
    assert bev_iou(a, a) == pytest.approx(1)
    assert iou_3d(a, a) == pytest.approx(1)
    far = Box3D(20, 0, 10, 1.6, 3.9, 1.5, 0.3)
    assert bev_iou(a, far) == 0 and iou_3d(a, far) == 0


def test_unit_squares_offset():
    a = Box3D(0, 0, 10, 1, 1, 1)
    b = Box3D(0.5, 0, 10, 1, 1, 1)
    assert bev_iou(a, b) == pytest.approx(1 / 3, abs=1e-12)


def test_3d_hand_case():
    a = Box3D(0, 0, 10, 2, 2, 2)
    b = Box3D(1, 1, 10, 2, 2, 2)
    # bev overlap 1 x 2, vertical overlap 1 -> 2 / (8 + 8 - 2)
    assert iou_3d(a, b) == pytest.approx(1 / 7, abs=1e-12)
    stacked = Box3D(0, 2.5, 10, 2, 2, 2)
    assert iou_3d(a, stacked) == 0


def test_yaw_period():
    a = Box3D(0, 0, 10, 1.6, 3.9, 1.5, 0.4)
    b = Box3D(0, 0, 10, 1.6, 3.9, 1.5, 0.4 + math.pi)
    assert bev_iou(a, b) == pytest.approx(1, abs=1e-9)


def test_degenerate_rejected():
    ok = Box3D(0, 0, 10, 1, 1, 1)
    bad = Box3D.__new__(Box3D)
    object.__setattr__(bad, "__dict__", {**ok.__dict__, "w": 0.0})
    with pytest.raises(DegenerateBox):
        bev_iou(ok, bad)


@pytest.mark.parametrize("seed", range(5))
def test_symmetry_and_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        a, b = random_pair(rng)
        iou = bev_iou(a, b)
        assert 0 <= iou <= 1
        assert bev_iou(b, a) == pytest.approx(iou, abs=1e-12)
        t, dx, dz = rng.uniform(-math.pi, math.pi), rng.normal(0, 5), rng.normal(0, 5)
        c, s = math.cos(t), math.sin(t)

        def move(box):
            x, z = box.x * c + box.z * s, -box.x * s + box.z * c
            return Box3D(x + dx, box.y, z + dz, box.w, box.l, box.h, box.yaw + t)

        assert bev_iou(move(a), move(b)) == pytest.approx(iou, abs=1e-6)


def test_monte_carlo_agreement_small():
    rng = np.random.default_rng(123)
    for _ in range(25):
        a, b = random_pair(rng)
        assert abs(bev_iou(a, b) - mc_bev_iou(a, b, 200_000, rng)) <= 0.01


# ---- NMS

def det(id, score, x, category=0, yaw=0.0):
    return ScoredDetection(Box3D(x, 0, 10, 1.6, 3.9, 1.5, yaw, category=category), cls_score=score, id=id)


def test_nms_identical_keeps_best():
    kept = rotated_nms([det(0, 0.8, 0), det(1, 0.9, 0)], 0.5)
    assert [d.id for d in kept] == [1]


def test_nms_disjoint_keeps_all():
    kept = rotated_nms([det(i, 0.5 + 0.1 * i, 10 * i) for i in range(4)], 0.5)
    assert sorted(d.id for d in kept) == [0, 1, 2, 3]


def test_nms_chain():
    # a overlaps b, b overlaps c, a and c apart
    dets = [det(0, 0.9, 0.0), det(1, 0.8, 1.2), det(2, 0.7, 2.4)]
    assert bev_iou(dets[0].box, dets[1].box) > 0.5
    assert bev_iou(dets[0].box, dets[2].box) < 0.5
    assert [d.id for d in rotated_nms(dets, 0.5)] == [0, 2]


def test_nms_class_aware():
    dets = [det(0, 0.9, 0, category=0), det(1, 0.8, 0, category=1)]
    assert len(rotated_nms(dets, 0.5)) == 2
    assert len(rotated_nms(dets, 0.5, class_aware=False)) == 1


def greedy_oracle(dets, thr):
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].final_score, dets[i].id))
    alive = set(order)
    keep = []
    for i in order:
        if i not in alive:
            continue
        keep.append(dets[i].id)
        for j in list(alive):
            if j != i and dets[j].box.category == dets[i].box.category and bev_iou(dets[i].box, dets[j].box) > thr:
                alive.discard(j)
        alive.discard(i)
    return keep


@pytest.mark.parametrize("seed", range(10))
def test_nms_matches_oracle_and_is_antichain(seed):
    rng = np.random.default_rng(seed)
    dets = [
        ScoredDetection(
            Box3D(rng.uniform(-3, 3), 0, rng.uniform(8, 14), 1.6, 3.9, 1.5, rng.uniform(-math.pi, math.pi),
                  category=int(rng.integers(0, 2))),
            cls_score=float(rng.uniform()), centerness=float(rng.uniform()), depth_score=float(rng.uniform()), id=i,
        )
        for i in range(15)
    ]
    kept = rotated_nms(dets, 0.3)
    assert [d.id for d in kept] == greedy_oracle(dets, 0.3)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            if a.box.category == b.box.category:
                assert bev_iou(a.box, b.box) <= 0.3


def test_final_score_product():
    d = ScoredDetection(Box3D(0, 0, 10, 1, 1, 1), cls_score=0.8, centerness=0.5, depth_score=0.25)
    assert d.final_score == pytest.approx(0.1)
