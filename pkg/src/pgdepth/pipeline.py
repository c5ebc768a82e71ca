"""Record-level orchestration: decode -> propagate -> NMS -> evaluate."""
from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import CameraModel, back_project
from .graph import DistanceVariant, FusionConfig, GatedEdge, InstanceNode, propagate
from .iou import ScoredDetection, rotated_nms
from .metrics import EvalReport, evaluate
from .probdepth import (
    DEFAULT_LAMBDA, DivisionMethod, DepthQuantizer, ScoreVariant, build_quantizer,
    decode_expectation, depth_score, fuse_local,
)
from .records import DetectionRecord, RecordFile

EVAL_MODES = ("kitti", "nuscenes", "both")
FUSION_MODES = ("pgd", "local")


@dataclass
class RunConfig:
    method: str = "uniform"
    unit: float = 10.0
    d_max: float = 70.0
    lam: float = DEFAULT_LAMBDA
    k: int = 5
    t2d_max: float | None = None
    distance_variant: str = "centers2d"
    gating: bool = True
    depth_score_variant: str = "top2"
    use_depth_score: bool = True
    fusion: str = "pgd"
    nms_iou: float = 0.5
    eval_mode: str = "both"
    pr_clip: bool = True
    seed: int = 0
    v_min: float = 1.0

    def __post_init__(self):
        try:
            DivisionMethod(self.method)
            DistanceVariant(self.distance_variant)
            ScoreVariant(self.depth_score_variant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.eval_mode not in EVAL_MODES:
            raise ConfigError(f"eval_mode must be one of {EVAL_MODES}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not (self.unit > 0 and self.d_max > self.unit):
            raise ConfigError("need d_max > unit > 0")
        if self.t2d_max is not None and not self.t2d_max > 0:
            raise ConfigError("t2d_max must be positive")
        if not 0 <= self.nms_iou <= 1:
            raise ConfigError("nms_iou must lie in [0, 1]")

    def quantizer(self) -> DepthQuantizer:
        return build_quantizer(self.d_max, self.unit, self.method)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def fusion_config(cfg: RunConfig, diagonal: float | None) -> FusionConfig:
    t2d_max = cfg.t2d_max if cfg.t2d_max is not None else diagonal
    if t2d_max is None:
        raise ConfigError("t2d_max is needed when the header carries no image_size")
    return FusionConfig(
        k=cfg.k, t2d_max=t2d_max, distance_variant=cfg.distance_variant,
        d_max=cfg.d_max, gating=cfg.gating, v_min=cfg.v_min,
    )


def decode_records(records: list[DetectionRecord], q: DepthQuantizer, cfg: RunConfig) -> None:
    """Fill ``d_p``, ``depth_score`` and ``d_l`` of every prediction in place."""
    preds = [r for r in records if r.kind == "pred" and r.logits is not None]
    if not preds:
        return
    logits = np.array([r.logits for r in preds], dtype=float)
    d_p = np.atleast_1d(decode_expectation(q, logits))
    s_d = np.atleast_1d(depth_score(logits, cfg.depth_score_variant, q))
    for r, dp, sd in zip(preds, d_p, s_d):
        r.d_p = float(dp)
        r.depth_score = float(sd)
        r.d_l = float(fuse_local(r.d_r, dp, cfg.lam)) if r.d_r is not None else float(dp)
        if r.cls_vec is not None:
            r.category = int(np.argmax(r.cls_vec))


def _by_frame(records):
    groups = defaultdict(list)
    for r in records:
        groups[r.frame].append(r)
    return dict(sorted(groups.items()))


def propagate_records(
    records: list[DetectionRecord], cam: CameraModel, cfg: RunConfig, diagonal: float | None = None
) -> list[tuple[int, GatedEdge]]:
    """Fill ``d_g``, ``d``, ``no_geometry`` and the decoded box center in place.

    Graphs never span frames. Returns every kept edge as ``(frame, edge)``.
    """
    fcfg = fusion_config(cfg, diagonal)
    edges: list[tuple[int, GatedEdge]] = []
    for frame, group in _by_frame(r for r in records if r.kind == "pred").items():
        nodes = []
        for r in group:
            if r.d_l is None or r.u_prime is None or r.v_prime is None or r.h is None:
                raise ValueError(f"record {r.id} is not decoded (run decode first)")
            nodes.append(InstanceNode(
                id=r.id, u_prime=r.u_prime, v_prime=r.v_prime, v=r.v_prime - cam.c_v,
                d_l=r.d_l, depth_score=r.depth_score if r.depth_score is not None else 1.0,
                cls_vec=np.asarray(r.cls_vec if r.cls_vec is not None else [1.0]),
                h3d=r.h, center3d=back_project(cam, r.u_prime, r.v_prime, r.d_l),
                category=r.category, alpha=r.alpha if r.alpha is not None else 0.0,
            ))
        res = propagate(nodes, cam, fcfg)
        edges.extend((frame, e) for e in res.graph.all_edges())
        for r in group:
            g = res.d_g[r.id]
            r.d_g = g
            r.no_geometry = g is None
            r.d = r.d_l if cfg.fusion == "local" else res.d[r.id]
            r.x, r.y, r.z = (float(c) for c in back_project(cam, r.u_prime, r.v_prime, r.d))
    return edges


def run_pipeline(rf: RecordFile, cfg: RunConfig) -> list[tuple[int, GatedEdge]]:
    """Decode and propagate every prediction of ``rf`` in place."""
    q = rf.header.quantizer or cfg.quantizer()
    decode_records(rf.records, q, cfg)
    return propagate_records(rf.records, rf.header.camera, cfg, rf.header.diagonal)


def to_detection(r: DetectionRecord, cfg: RunConfig) -> ScoredDetection:
    cls_score = float(max(r.cls_vec)) if r.cls_vec else 1.0
    s_d = r.depth_score if (cfg.use_depth_score and r.depth_score is not None) else 1.0
    return ScoredDetection(
        box=r.box(), cls_score=cls_score,
        centerness=r.centerness if r.centerness is not None else 1.0,
        depth_score=s_d, id=r.id, gt_id=r.gt_id, depth=r.d,
    )


def frames_for_eval(gt: list[DetectionRecord], preds: list[DetectionRecord], cfg: RunConfig):
    """Per-frame ground-truth boxes and NMS-filtered detections."""
    gt_by, pr_by = _by_frame(gt), _by_frame(preds)
    frames = sorted(set(gt_by) | set(pr_by))
    gt_frames, det_frames = [], []
    for f in frames:
        gt_frames.append([r.box() for r in gt_by.get(f, [])])
        dets = [to_detection(r, cfg) for r in pr_by.get(f, [])]
        det_frames.append(rotated_nms(dets, cfg.nms_iou))
    return gt_frames, det_frames


def depth_pairs(gt: list[DetectionRecord], preds: list[DetectionRecord], cam: CameraModel):
    """(predicted, true) projective depths for predictions carrying a ``gt_id``, before NMS."""
    by_id = {(r.frame, r.id): r for r in gt}
    pred_d, true_d = [], []
    for r in preds:
        if r.gt_id is None or r.d is None:
            continue
        g = by_id.get((r.frame, r.gt_id))
        if g is None:
            continue
        pred_d.append(r.d)
        true_d.append(g.z - cam.f * cam.b_z)
    return pred_d, true_d


def evaluate_records(gt: list[DetectionRecord], preds: list[DetectionRecord], cam: CameraModel,
                     cfg: RunConfig, category_names=None) -> EvalReport:
    gt_frames, det_frames = frames_for_eval(gt, preds, cfg)
    return evaluate(
        gt_frames, det_frames, mode=cfg.eval_mode, pr_clip=cfg.pr_clip,
        depth_pairs=depth_pairs(gt, preds, cam), category_names=category_names,
    )


def ensure_pipeline(rf: RecordFile, cfg: RunConfig) -> None:
    """Run decode/propagate unless every prediction already has a final depth."""
    preds = rf.preds
    if preds and any(r.d is None for r in preds):
        run_pipeline(rf, cfg)

