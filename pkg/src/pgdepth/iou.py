"""Rotated BEV / 3D IoU and greedy rotated NMS.

BEV overlap is exact: the two rotated rectangles are clipped against each
other (Sutherland-Hodgman on convex polygons) and the shoelace formula gives
the intersection area.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBox
from .geometry import Box3D


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _ccw(poly: np.ndarray) -> np.ndarray:
    return poly if _signed_area(poly) >= 0 else poly[::-1]


def clip_convex(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Intersection of two counter-clockwise convex polygons."""
    out = list(subject)
    n = len(clipper)
    for k in range(n):
        if not out:
            break
        a, b = clipper[k], clipper[(k + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]
        inp, out = out, []

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        prev = inp[-1]
        s_prev = side(prev)
        for cur in inp:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    t = s_prev / (s_prev - s_cur)
                    out.append(prev + t * (cur - prev))
                out.append(cur)
            elif s_prev >= 0:
                t = s_prev / (s_prev - s_cur)
                out.append(prev + t * (cur - prev))
            prev, s_prev = cur, s_cur
    return np.array(out).reshape(-1, 2)


def _check(box: Box3D) -> None:
    if not (box.w > 0 and box.l > 0 and box.h > 0):
        raise DegenerateBox(f"degenerate box {box}")


def bev_intersection(a: Box3D, b: Box3D) -> float:
    pa, pb = _ccw(a.bev_corners()), _ccw(b.bev_corners())
    # cheap reject on bounding circles
    ra = 0.5 * np.hypot(a.w, a.l)
    rb = 0.5 * np.hypot(b.w, b.l)
    if np.hypot(a.x - b.x, a.z - b.z) >= ra + rb:
        return 0.0
    inter = clip_convex(pa, pb)
    if len(inter) < 3:
        return 0.0
    return max(0.0, _signed_area(inter))


def bev_iou(a: Box3D, b: Box3D) -> float:
    _check(a)
    _check(b)
    inter = bev_intersection(a, b)
    union = a.w * a.l + b.w * b.l - inter
    return float(min(1.0, max(0.0, inter / union)))


def iou_3d(a: Box3D, b: Box3D) -> float:
    _check(a)
    _check(b)
    top = max(a.y - 0.5 * a.h, b.y - 0.5 * b.h)
    bot = min(a.y + 0.5 * a.h, b.y + 0.5 * b.h)
    dy = bot - top
    if dy <= 0:
        return 0.0
    inter = bev_intersection(a, b) * dy
    union = a.w * a.l * a.h + b.w * b.l * b.h - inter
    return float(min(1.0, max(0.0, inter / union)))


@dataclass(frozen=True)
class ScoredDetection:
    """A decoded detection and the three factors of its ranking score."""

    box: Box3D
    cls_score: float = 1.0
    centerness: float = 1.0
    depth_score: float = 1.0
    id: int = 0
    gt_id: int | None = None
    depth: float | None = None

    @property
    def final_score(self) -> float:
        return self.cls_score * self.centerness * self.depth_score


def rotated_nms(dets: list[ScoredDetection], iou_thresh: float, *, class_aware: bool = True) -> list[ScoredDetection]:
    """Greedy BEV NMS in descending ``final_score`` (ties broken by id).

    A detection is suppressed when its BEV IoU with an already kept one
    exceeds ``iou_thresh``. With ``class_aware`` only same-category boxes
    suppress each other.
    """
    order = sorted(dets, key=lambda d: (-d.final_score, d.id))
    kept: list[ScoredDetection] = []
    for d in order:
        if all(
            (class_aware and k.box.category != d.box.category) or bev_iou(k.box, d.box) <= iou_thresh
            for k in kept
        ):
            kept.append(d)
    return kept
