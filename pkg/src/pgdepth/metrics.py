"""Detection metrics: KITTI-style IoU AP, nuScenes-style distance mAP,
true-positive errors, NDS, PR curves and depth-error statistics.

Inputs are per-frame sequences: ``gt_frames[f]`` holds the ground-truth
``Box3D`` objects of frame ``f`` and ``det_frames[f]`` the matching
``ScoredDetection`` list. Matching is greedy and one-to-one: detections are
visited in descending score (ties by frame then id) and each takes the best
still-unmatched ground truth of its frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyInput, NoGroundTruth
from .geometry import Box3D, wrap_angle
from .iou import ScoredDetection, bev_iou, iou_3d

KITTI_RECALL_POINTS = np.linspace(1.0 / 40, 1.0, 40)
NUS_DIST_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
NUS_TP_THRESHOLD = 2.0
MIN_RECALL = 0.1
MIN_PRECISION = 0.1
DIFFICULTY_NAMES = ("easy", "moderate", "hard")
TP_NAMES = ("mATE", "mASE", "mAOE", "mAVE", "mAAE")


def center_distance(a: Box3D, b: Box3D) -> float:
    """BEV (x, z) distance between box centers."""
    return math.hypot(a.x - b.x, a.z - b.z)


_CRITERIA = {
    "iou3d": (iou_3d, True),
    "bev": (bev_iou, True),
    "center": (center_distance, False),
}


@dataclass
class MatchResult:
    scores: np.ndarray
    tp: np.ndarray
    n_gt: int
    pairs: list[tuple[ScoredDetection, Box3D]] = field(default_factory=list)


def match_detections(
    gt_frames: Sequence[Sequence[Box3D]],
    det_frames: Sequence[Sequence[ScoredDetection]],
    category: int | None,
    criterion: str,
    thresh: float,
    difficulty: int | None = None,
) -> MatchResult:
    """Greedy matching for one class.

    Ground truth harder than ``difficulty`` is ignored: it is not counted and
    a detection matched to it is dropped from the curve instead of becoming
    a false positive.
    """
    if len(gt_frames) != len(det_frames):
        raise ValueError("gt and detection frame counts differ")
    sim, higher_better = _CRITERIA[criterion]
    gts, valid = [], []
    n_gt = 0
    for frame in gt_frames:
        g = [b for b in frame if category is None or b.category == category]
        v = [difficulty is None or b.difficulty is None or b.difficulty <= difficulty for b in g]
        gts.append(g)
        valid.append(v)
        n_gt += sum(v)
    order = [
        (f, d)
        for f, frame in enumerate(det_frames)
        for d in frame
        if category is None or d.box.category == category
    ]
    order.sort(key=lambda fd: (-fd[1].final_score, fd[0], fd[1].id))
    taken = [np.zeros(len(g), dtype=bool) for g in gts]
    scores, tps, pairs = [], [], []
    for f, det in order:
        best, best_val = -1, None
        for gi, g in enumerate(gts[f]):
            if taken[f][gi]:
                continue
            val = sim(det.box, g)
            if best_val is None or (val > best_val if higher_better else val < best_val):
                best, best_val = gi, val
        hit = best >= 0 and (best_val >= thresh if higher_better else best_val <= thresh)
        if hit:
            taken[f][best] = True
            if not valid[f][best]:
                continue
            pairs.append((det, gts[f][best]))
        scores.append(det.final_score)
        tps.append(hit)
    return MatchResult(np.array(scores, dtype=float), np.array(tps, dtype=bool), n_gt, pairs)


def precision_recall(m: MatchResult) -> tuple[np.ndarray, np.ndarray]:
    if m.n_gt == 0:
        raise NoGroundTruth("no ground truth for this class")
    tp = np.cumsum(m.tp)
    fp = np.cumsum(~m.tp)
    if len(tp) == 0:
        return np.zeros(0), np.zeros(0)
    return tp / m.n_gt, tp / (tp + fp)


def ap_interpolated(recall: np.ndarray, precision: np.ndarray, points=KITTI_RECALL_POINTS) -> float:
    """Mean over ``points`` of the best precision reached at recall >= point."""
    if len(recall) == 0:
        return 0.0
    # running max from the right gives the precision envelope
    env = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, points, side="left")
    vals = np.where(idx < len(env), env[np.minimum(idx, len(env) - 1)], 0.0)
    return float(np.mean(vals))


def kitti_ap(gt_frames, det_frames, iou_thresh: float, difficulty: int | None = None, *,
             category: int | None = None, metric: str = "iou3d") -> float:
    """40-point interpolated AP with IoU matching (``metric`` = iou3d or bev)."""
    m = match_detections(gt_frames, det_frames, category, metric, iou_thresh, difficulty)
    rec, prec = precision_recall(m)
    return ap_interpolated(rec, prec)


def nuscenes_ap(gt_frames, det_frames, dist_thresh: float, *, category: int | None = None,
                pr_clip: bool = True) -> float:
    """Distance-matched AP on a 101-point recall grid.

    With ``pr_clip`` the part of the curve below recall 0.1 is dropped and
    precision is offset by 0.1 and renormalized.
    """
    m = match_detections(gt_frames, det_frames, category, "center", dist_thresh)
    rec, prec = precision_recall(m)
    if len(rec) == 0:
        return 0.0
    grid = np.linspace(0.0, 1.0, 101)
    p = np.interp(grid, rec, prec, right=0.0)
    min_recall, min_precision = (MIN_RECALL, MIN_PRECISION) if pr_clip else (0.0, 0.0)
    p = p[round(100 * min_recall) + 1:]
    p = np.clip(p - min_precision, 0.0, None)
    return min(1.0, float(np.mean(p)) / (1.0 - min_precision))


def _categories(gt_frames) -> list[int]:
    return sorted({b.category for frame in gt_frames for b in frame})


def nuscenes_map(gt_frames, det_frames, *, thresholds=NUS_DIST_THRESHOLDS, pr_clip: bool = True):
    """Mean of distance AP over ground-truth classes and thresholds.

    Returns ``(mAP, per_class_ap)`` with ``per_class_ap[(category, thr)]``.
    """
    cats = _categories(gt_frames)
    if not cats:
        raise NoGroundTruth("no ground truth at all")
    per = {
        (c, t): nuscenes_ap(gt_frames, det_frames, t, category=c, pr_clip=pr_clip)
        for c in cats
        for t in thresholds
    }
    return float(np.mean(list(per.values()))), per


def pr_curve(gt_frames, det_frames, *, category: int | None = None, criterion: str = "center",
             thresh: float = 2.0, difficulty: int | None = None) -> list[tuple[float, float]]:
    """Cumulative (recall, precision) after each detection in descending score."""
    m = match_detections(gt_frames, det_frames, category, criterion, thresh, difficulty)
    rec, prec = precision_recall(m)
    return [(float(r), float(p)) for r, p in zip(rec, prec)]


def precision_at_recall(curve, recall: float) -> float:
    """Interpolated precision: the best precision at any recall >= ``recall``."""
    ps = [p for r, p in curve if r >= recall - 1e-12]
    return max(ps) if ps else 0.0


class TPErrors(NamedTuple):
    ate: float
    ase: float
    aoe: float
    ave: float
    aae: float


def scale_error(a: Box3D, b: Box3D) -> float:
    """1 - IoU of the two boxes after aligning centers and orientation."""
    inter = min(a.w, b.w) * min(a.l, b.l) * min(a.h, b.h)
    union = a.w * a.l * a.h + b.w * b.l * b.h - inter
    return 1.0 - inter / union


def yaw_error(a: float, b: float) -> float:
    return abs(wrap_angle(a - b))


def tp_metrics(pairs: Sequence[tuple[ScoredDetection, Box3D]]) -> TPErrors:
    """Mean true-positive errors of one class.

    A metric with no contributing pair is 1, the worst value NDS counts.
    Velocity and attribute errors skip pairs that lack those fields.
    """
    if not pairs:
        return TPErrors(1.0, 1.0, 1.0, 1.0, 1.0)
    ate = np.mean([center_distance(d.box, g) for d, g in pairs])
    ase = np.mean([scale_error(d.box, g) for d, g in pairs])
    aoe = np.mean([yaw_error(d.box.yaw, g.yaw) for d, g in pairs])
    vel = [
        math.hypot(d.box.velocity[0] - g.velocity[0], d.box.velocity[1] - g.velocity[1])
        for d, g in pairs
        if d.box.velocity is not None and g.velocity is not None
    ]
    att = [d.box.attribute != g.attribute for d, g in pairs if g.attribute is not None]
    ave = float(np.mean(vel)) if vel else 1.0
    aae = float(np.mean(att)) if att else 1.0
    return TPErrors(float(ate), float(ase), float(aoe), ave, aae)


def nds(mAP: float, mATE: float, mASE: float, mAOE: float, mAVE: float, mAAE: float) -> float:
    tp = (mATE, mASE, mAOE, mAVE, mAAE)
    return (5.0 * mAP + sum(1.0 - min(1.0, e) for e in tp)) / 10.0


def depth_error_stats(pred_depths, gt_depths) -> tuple[float, float]:
    """Mean absolute (m) and mean relative depth error over matched pairs."""
    pred = np.asarray(pred_depths, dtype=float)
    gt = np.asarray(gt_depths, dtype=float)
    if pred.size == 0:
        raise EmptyInput("no matched pairs")
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground-truth depths differ in shape")
    err = np.abs(pred - gt)
    return float(err.mean()), float((err / gt).mean())


@dataclass
class EvalReport:
    kitti: dict[str, float] = field(default_factory=dict)
    nus_ap: dict[str, float] = field(default_factory=dict)
    mAP: float | None = None
    tp: dict[str, float] = field(default_factory=dict)
    nds: float | None = None
    depth_mean_abs: float | None = None
    depth_mean_rel: float | None = None
    pr: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    header: dict[str, str] = field(default_factory=dict)

    def flat(self) -> dict[str, float]:
        out: dict[str, float] = {}
        out.update({f"kitti/{k}": v for k, v in self.kitti.items()})
        out.update({f"nus/AP/{k}": v for k, v in self.nus_ap.items()})
        if self.mAP is not None:
            out["nus/mAP"] = self.mAP
        out.update({f"nus/{k}": v for k, v in self.tp.items()})
        if self.nds is not None:
            out["nus/NDS"] = self.nds
        if self.depth_mean_abs is not None:
            out["depth/mean_abs_m"] = self.depth_mean_abs
            out["depth/mean_rel"] = self.depth_mean_rel
        return out

    def to_text(self) -> str:
        lines = [f"# {k} = {v}" for k, v in self.header.items()]
        lines += [f"{k} = {v:.6f}" for k, v in self.flat().items()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "header": dict(self.header),
            "metrics": self.flat(),
            "pr": {k: [list(p) for p in v] for k, v in self.pr.items()},
        }


def evaluate(
    gt_frames,
    det_frames,
    *,
    mode: str = "both",
    pr_clip: bool = True,
    iou_thresholds=(0.7, 0.5),
    dist_thresholds=NUS_DIST_THRESHOLDS,
    depth_pairs: tuple[Sequence[float], Sequence[float]] | None = None,
    category_names: dict[int, str] | None = None,
) -> EvalReport:
    """Assemble an :class:`EvalReport`. ``mode`` is kitti, nuscenes or both."""
    if mode not in ("kitti", "nuscenes", "both"):
        raise ValueError(f"unknown eval mode {mode!r}")
    names = category_names or {}
    cname = lambda c: names.get(c, f"c{c}")  # noqa: E731
    rep = EvalReport(header={
        "kitti_ap": "40-point interpolated, greedy one-to-one IoU matching",
        "nus_ap": f"101-point, pr_clip={'on' if pr_clip else 'off'}",
        "aoe_period": "2pi",
    })
    cats = _categories(gt_frames)
    if mode in ("kitti", "both"):
        diffs = sorted({b.difficulty for f in gt_frames for b in f if b.difficulty is not None})
        levels = [(DIFFICULTY_NAMES[d] if d < 3 else str(d), d) for d in diffs] or [("all", None)]
        for metric, tag in (("iou3d", "3d"), ("bev", "bev")):
            for thr in iou_thresholds:
                for lname, lvl in levels:
                    vals = []
                    for c in cats:
                        try:
                            ap = kitti_ap(gt_frames, det_frames, thr, lvl, category=c, metric=metric)
                        except NoGroundTruth:
                            continue
                        rep.kitti[f"AP{tag}@{thr:.2f}/{lname}/{cname(c)}"] = ap
                        vals.append(ap)
                    if vals:
                        rep.kitti[f"AP{tag}@{thr:.2f}/{lname}/mean"] = float(np.mean(vals))
    if mode in ("nuscenes", "both") and cats:
        mAP, per = nuscenes_map(gt_frames, det_frames, thresholds=dist_thresholds, pr_clip=pr_clip)
        rep.mAP = mAP
        rep.nus_ap = {f"{cname(c)}@{t:g}": v for (c, t), v in per.items()}
        errs = []
        for c in cats:
            m = match_detections(gt_frames, det_frames, c, "center", NUS_TP_THRESHOLD)
            errs.append(tp_metrics(m.pairs))
        means = np.mean(np.array(errs), axis=0)
        rep.tp = dict(zip(TP_NAMES, (float(x) for x in means)))
        rep.nds = nds(mAP, *means)
        for t in dist_thresholds:
            rep.pr[f"all@{t:g}"] = pr_curve(gt_frames, det_frames, thresh=t)
    if depth_pairs is not None and len(depth_pairs[0]):
        rep.depth_mean_abs, rep.depth_mean_rel = depth_error_stats(*depth_pairs)
    return rep
