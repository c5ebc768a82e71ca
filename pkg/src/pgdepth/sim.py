"""Synthetic ground-plane scenes, a noise model standing in for a trained
detection head, and the oracle-replacement harness.

Everything is a pure function of its inputs and an integer seed.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logit, softmax

from .errors import IdMismatch, InfeasibleSpec
from .geometry import Box3D, CameraModel, V_MIN, project_point, wrap_angle
from .iou import bev_iou
from .metrics import EvalReport, depth_error_stats
from .pipeline import RunConfig, decode_records, evaluate_records, propagate_records
from .probdepth import DepthQuantizer
from .records import DetectionRecord, Header, RecordFile

MAX_ATTEMPTS = 1000
ORACLE_ALPHA = 50.0  # sigmoid(50) == 1.0 in double precision
ALPHA_CLIP = 12.0

KITTI_CAMERA = CameraModel(f=721.5377, c_u=609.5593, c_v=172.854)
KITTI_IMAGE_SIZE = (1242, 375)


@dataclass(frozen=True)
class CategoryPrior:
    name: str
    id: int
    size_mean: tuple[float, float, float]  # (w, l, h)
    size_std: tuple[float, float, float]
    weight: float
    attributes: tuple[int, ...]
    moving_attribute: int | None = None


DEFAULT_CATEGORIES = (
    CategoryPrior("car", 0, (1.62, 3.88, 1.53), (0.10, 0.40, 0.12), 0.6, (0, 1), 0),
    CategoryPrior("pedestrian", 1, (0.66, 0.84, 1.76), (0.08, 0.15, 0.10), 0.25, (2, 3), 3),
    CategoryPrior("cyclist", 2, (0.60, 1.76, 1.74), (0.08, 0.20, 0.10), 0.15, (4, 5), 4),
)
CATEGORY_NAMES = {c.id: c.name for c in DEFAULT_CATEGORIES}


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    camera: CameraModel = KITTI_CAMERA
    image_size: tuple[int, int] = KITTI_IMAGE_SIZE
    n_objects: tuple[int, int] = (4, 10)
    categories: tuple[CategoryPrior, ...] = DEFAULT_CATEGORIES
    depth_range: tuple[float, float] = (5.0, 45.0)
    ground_y: float = 1.65
    bottom_noise_std: float = 0.05
    bottom_corr_length: float = 0.0  # > 0: offsets vary smoothly over (x, z)
    bottom_category_share: float = 0.0  # variance fraction shared by all objects of a category
    lateral_extent: float = 15.0
    min_gap: float = 0.5
    difficulty_depths: tuple[float, float] = (20.0, 35.0)
    d_max: float = 70.0

    def __post_init__(self):
        lo, hi = self.depth_range
        if not (0 < lo < hi <= self.d_max):
            raise ValueError(f"depth range {self.depth_range} must lie within (0, d_max]")
        if self.bottom_noise_std < 0:
            raise ValueError("bottom_noise_std must be non-negative")
        if self.bottom_corr_length < 0:
            raise ValueError("bottom_corr_length must be non-negative")
        if not 0 <= self.bottom_category_share <= 1:
            raise ValueError("bottom_category_share must lie in [0, 1]")
        if not (1 <= self.n_objects[0] <= self.n_objects[1]):
            raise ValueError("bad n_objects range")
        if not self.categories:
            raise ValueError("need at least one category")

    @property
    def n_classes(self) -> int:
        return max(c.id for c in self.categories) + 1

    @property
    def pair_bottom_std(self) -> float:
        """Std of the bottom-height difference of two same-category objects far apart."""
        return self.bottom_noise_std * math.sqrt(2.0 * (1.0 - self.bottom_category_share))


@dataclass(frozen=True)
class NoiseModel:
    depth_noise_a: float = 0.5
    depth_noise_b: float = 0.04
    anchor_fraction: float = 0.25
    anchor_noise_scale: float = 0.1
    logits_temperature: float = 6.0
    logits_min_width: float = 0.5
    logits_corruption: float = 0.0
    class_confusion: float = 0.02
    cls_score_spread: float = 0.4
    center_jitter_px: float = 1.0
    size_noise_std: float = 0.03
    yaw_noise_std: float = 0.1
    velocity_noise_std: float = 0.5
    attribute_flip_rate: float = 0.05
    alpha_noise_std: float = 0.2
    duplicate_rate: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")
        for name in ("anchor_fraction", "logits_corruption", "class_confusion",
                     "attribute_flip_rate", "duplicate_rate"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} is a rate and must be <= 1")
        if self.cls_score_spread >= 1:
            raise ValueError("cls_score_spread must be < 1")

    @classmethod
    def zero(cls) -> "NoiseModel":
        # the bump width floor shapes the logits, it is not a noise source
        return cls(**{f.name: 0.0 for f in dataclasses.fields(cls) if f.name != "logits_min_width"})

    def depth_std(self, d, anchor: bool = False):
        s = self.depth_noise_a + self.depth_noise_b * d
        return s * self.anchor_noise_scale if anchor else s


class Oracle(str, enum.Enum):
    SCORE = "score"
    OFFSET = "offset"
    DEPTH = "depth"
    SIZE = "size"
    ROTATION = "rotation"
    VELOCITY = "velocity"
    ATTRIBUTE = "attribute"


ALL_ORACLES = frozenset(Oracle)


def _category_by_id(spec: SceneSpec) -> dict[int, CategoryPrior]:
    return {c.id: c for c in spec.categories}


def _ground_field(rng, corr_length: float, n_features: int = 128):
    """Unit-variance smooth random field over (x, z), or None for i.i.d. offsets.

    Random Fourier features of a squared-exponential kernel with length
    scale ``corr_length``.
    """
    if corr_length <= 0:
        return None
    freqs = rng.standard_normal((n_features, 2)) / corr_length
    phases = rng.uniform(0.0, 2 * math.pi, n_features)
    amp = math.sqrt(2.0 / n_features)

    def field(x, z):
        return amp * float(np.cos(freqs @ np.array([x, z]) + phases).sum())

    return field


def generate_scene(spec: SceneSpec) -> tuple[list[Box3D], CameraModel]:
    """Place objects on a (noisy) ground plane in front of the camera."""
    rng = np.random.default_rng(spec.seed)
    cam = spec.camera
    W, H = spec.image_size
    weights = np.array([c.weight for c in spec.categories], dtype=float)
    weights /= weights.sum()
    n = int(rng.integers(spec.n_objects[0], spec.n_objects[1] + 1))
    ground = _ground_field(rng, spec.bottom_corr_length)
    shared = {c.id: rng.standard_normal() for c in spec.categories}
    rho = spec.bottom_category_share
    boxes: list[Box3D] = []
    for _ in range(n):
        for _attempt in range(MAX_ATTEMPTS):
            cat = spec.categories[int(rng.choice(len(weights), p=weights))]
            mean, std = np.array(cat.size_mean), np.array(cat.size_std)
            w, l, h = np.maximum(mean + std * rng.standard_normal(3), 0.3 * mean)
            z = rng.uniform(*spec.depth_range)
            x = rng.uniform(-spec.lateral_extent, spec.lateral_extent)
            own = rng.standard_normal() if ground is None else ground(x, z)
            offset = math.sqrt(rho) * shared[cat.id] + math.sqrt(1.0 - rho) * own
            bottom = spec.ground_y + spec.bottom_noise_std * offset
            y = bottom - 0.5 * h
            yaw = wrap_angle(rng.uniform(-math.pi, math.pi))
            attribute = int(rng.choice(cat.attributes))
            if attribute == cat.moving_attribute:
                speed = rng.uniform(1.0, 8.0)
                vel = (speed * math.cos(yaw), -speed * math.sin(yaw))
            else:
                vel = (0.0, 0.0)
            near, far = spec.difficulty_depths
            difficulty = 0 if z < near else (1 if z < far else 2)
            try:
                pc, d = project_point(cam, (x, y, z))
            except ValueError:
                continue
            if not (0 <= pc.u_prime < W and 0 <= pc.v_prime < H) or abs(pc.v) <= 2 * V_MIN:
                continue
            box = Box3D(float(x), float(y), float(z), float(w), float(l), float(h), yaw,
                        category=cat.id, velocity=vel, attribute=attribute, difficulty=difficulty)
            grown = dataclasses.replace(box, w=w + spec.min_gap, l=l + spec.min_gap)
            if any(bev_iou(grown, b) > 0 for b in boxes):
                continue
            boxes.append(box)
            break
        else:
            raise InfeasibleSpec(f"could not place object {len(boxes)} after {MAX_ATTEMPTS} attempts")
    return boxes, cam


def bump_logits(q: DepthQuantizer, target: float, width: float) -> np.ndarray:
    """Gaussian bump over the split points whose softmax expectation decodes to ``target``.

    ``width`` (m) sets the spread; the bump center is solved for so the
    decode is exact up to root-finding precision.
    """
    support = q.support
    if q.log_space:
        t = math.log(target)
        s = width / target
    else:
        t, s = target, width
    span = support[-1] - support[0]
    eps = 1e-9 * span
    t = min(max(t, support[0] + eps), support[-1] - eps)

    def logits_at(c):
        return -0.5 * ((support - c) / s) ** 2

    def excess(c):
        return float(softmax(logits_at(c)) @ support) - t

    reach = span + 20.0 * s
    c = brentq(excess, support[0] - reach, support[-1] + reach, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
    return logits_at(c)


def _alpha_for(noise: NoiseModel, cam: CameraModel, d: float, v: float, h: float,
               local_std: float, pair_bottom_std: float) -> float:
    """Inverse-variance fusion weight a well-trained weight branch would approximate."""
    f_over_v = cam.f / abs(v)
    geo_geom = f_over_v * math.sqrt(pair_bottom_std**2 + 0.5 * (noise.size_noise_std * h) ** 2)
    geo_jitter = d * noise.center_jitter_px * math.sqrt(2.0) / abs(v)
    geo_src = noise.depth_std(d, anchor=True)
    geo_var = geo_geom**2 + geo_jitter**2 + geo_src**2
    loc_var = local_std**2
    if geo_var + loc_var == 0:
        w = 0.5
    else:
        w = geo_var / (geo_var + loc_var)
    return float(np.clip(logit(w), -ALPHA_CLIP, ALPHA_CLIP))


def corrupt_to_predictions(
    gt: list[Box3D],
    cam: CameraModel,
    noise: NoiseModel,
    q: DepthQuantizer,
    *,
    seed: int = 0,
    frame: int = 0,
    n_classes: int = 3,
    pair_bottom_std: float = 0.0,
    categories: tuple[CategoryPrior, ...] = DEFAULT_CATEGORIES,
) -> list[DetectionRecord]:
    """Raw head outputs for each ground-truth box (ids follow the gt order).

    Returns prediction records with ``gt_id`` set to the index of the source
    box. Duplicates, when enabled, get ids past ``len(gt)``.
    """
    rng = np.random.default_rng(seed)
    attributes = sorted({a for c in categories for a in c.attributes})
    out: list[DetectionRecord] = []
    dup_id = len(gt)
    for k, box in enumerate(gt):
        pc, d = project_point(cam, (box.x, box.y, box.z))
        anchor = rng.random() < noise.anchor_fraction
        sigma = noise.depth_std(d, anchor)
        d_noisy = max(d + sigma * rng.standard_normal(), 0.5)
        corrupted = rng.random() < noise.logits_corruption
        corrupt_draw = rng.standard_normal(q.n_bins)
        if corrupted:
            logits = 0.1 * corrupt_draw
            local_std = (q.omega[-1] - q.omega[0]) / math.sqrt(12.0)
        else:
            width = max(noise.logits_temperature * sigma, noise.logits_min_width)
            logits = bump_logits(q, d_noisy, width)
            local_std = sigma
        jitter = noise.center_jitter_px * rng.standard_normal(2)
        u_p, v_p = pc.u_prime + jitter[0], pc.v_prime + jitter[1]
        centerness = math.exp(-float(jitter @ jitter) / (2 * 4.0**2))

        label = box.category
        if rng.random() < noise.class_confusion and n_classes > 1:
            label = int(rng.choice([c for c in range(n_classes) if c != box.category]))
        p_top = 1.0 - noise.cls_score_spread * rng.random()
        cls_vec = np.full(n_classes, (1.0 - p_top) / max(n_classes - 1, 1))
        cls_vec[label] = p_top

        w, l, h = (max(s * (1 + noise.size_noise_std * rng.standard_normal()), 0.1) for s in (box.w, box.l, box.h))
        yaw = wrap_angle(box.yaw + noise.yaw_noise_std * rng.standard_normal())
        vel_noise = noise.velocity_noise_std * rng.standard_normal(2)
        velocity = [box.velocity[0] + vel_noise[0], box.velocity[1] + vel_noise[1]] if box.velocity else None
        attribute = box.attribute
        if attribute is not None and rng.random() < noise.attribute_flip_rate:
            attribute = int(rng.choice([a for a in attributes if a != attribute]))
        alpha = _alpha_for(noise, cam, d, pc.v, box.h, local_std, pair_bottom_std)
        alpha += noise.alpha_noise_std * rng.standard_normal()

        rec = DetectionRecord(
            id=k, frame=frame, kind="pred", category=label,
            w=float(w), l=float(l), h=float(h), yaw=float(yaw), velocity=velocity, attribute=attribute,
            u_prime=float(u_p), v_prime=float(v_p), d_r=float(d_noisy), logits=[float(x) for x in logits],
            cls_vec=[float(x) for x in cls_vec], centerness=float(centerness), alpha=float(alpha), gt_id=k,
        )
        out.append(rec)
        if rng.random() < noise.duplicate_rate:
            extra = rng.standard_normal(3)
            out.append(dataclasses.replace(
                rec, id=dup_id, u_prime=rec.u_prime + 5 * extra[0], v_prime=rec.v_prime + 5 * extra[1],
                d_r=max(rec.d_r + sigma * extra[2], 0.5), centerness=0.5 * rec.centerness,
            ))
            dup_id += 1
    return out


def gt_records(gt: list[Box3D], cam: CameraModel, frame: int = 0) -> list[DetectionRecord]:
    out = []
    for k, b in enumerate(gt):
        pc, _ = project_point(cam, (b.x, b.y, b.z))
        out.append(DetectionRecord.from_box(b, id=k, frame=frame, u_prime=pc.u_prime, v_prime=pc.v_prime))
    return out


def apply_oracles(records: list[DetectionRecord], gt: list[DetectionRecord], oracles,
                  cam: CameraModel, q: DepthQuantizer, n_classes: int | None = None) -> list[DetectionRecord]:
    """Replace the flagged raw prediction fields by their ground-truth values.

    Works on raw head outputs (projected center, depth logits and
    regression, size, yaw, class scores, ...), so the returned records must
    be decoded again. Predictions without ``gt_id`` are left untouched.
    """
    oracles = {Oracle(o) for o in oracles}
    by_id = {(g.frame, g.id): g for g in gt}
    out = []
    for r in records:
        if r.kind != "pred" or r.gt_id is None or not oracles:
            out.append(r)
            continue
        g = by_id.get((r.frame, r.gt_id))
        if g is None:
            raise IdMismatch(f"prediction {r.id} (frame {r.frame}) refers to missing gt {r.gt_id}")
        kw: dict = dict(d_p=None, depth_score=None, d_l=None, d_g=None, d=None, no_geometry=None,
                        x=None, y=None, z=None)
        pc, depth = project_point(cam, (g.x, g.y, g.z))
        if Oracle.OFFSET in oracles:
            kw.update(u_prime=pc.u_prime, v_prime=pc.v_prime)
        if Oracle.DEPTH in oracles:
            kw.update(d_r=depth, logits=[float(x) for x in bump_logits(q, depth, 0.5)], alpha=ORACLE_ALPHA)
        if Oracle.SIZE in oracles:
            kw.update(w=g.w, l=g.l, h=g.h)
        if Oracle.ROTATION in oracles:
            kw.update(yaw=g.yaw)
        if Oracle.VELOCITY in oracles:
            kw.update(velocity=list(g.velocity) if g.velocity is not None else None)
        if Oracle.ATTRIBUTE in oracles:
            kw.update(attribute=g.attribute)
        if Oracle.SCORE in oracles:
            n = n_classes or (len(r.cls_vec) if r.cls_vec else g.category + 1)
            vec = [0.0] * n
            vec[g.category] = 1.0
            kw.update(cls_vec=vec, category=g.category)
        out.append(dataclasses.replace(r, extra=dict(r.extra), **kw))
    return out


@dataclass
class SceneBatch:
    header: Header
    gt: list[DetectionRecord] = field(default_factory=list)
    preds: list[DetectionRecord] = field(default_factory=list)

    def gt_file(self) -> RecordFile:
        return RecordFile(self.header, list(self.gt))

    def pred_file(self) -> RecordFile:
        return RecordFile(self.header, list(self.preds))


def simulate_batch(spec: SceneSpec, noise: NoiseModel, cfg: RunConfig, n_scenes: int) -> SceneBatch:
    """Scenes ``spec.seed + i`` for ``i < n_scenes``; frame ids are ``i``."""
    q = cfg.quantizer()
    header = Header(spec.camera, q, spec.image_size)
    batch = SceneBatch(header)
    for i in range(n_scenes):
        boxes, cam = generate_scene(dataclasses.replace(spec, seed=spec.seed + i))
        batch.gt.extend(gt_records(boxes, cam, frame=i))
        batch.preds.extend(corrupt_to_predictions(
            boxes, cam, noise, q, seed=(spec.seed + i) * 7919 + 1, frame=i,
            n_classes=spec.n_classes, pair_bottom_std=spec.pair_bottom_std, categories=spec.categories,
        ))
    return batch


def run_records(batch: SceneBatch, preds: list[DetectionRecord], cfg: RunConfig) -> tuple[list[DetectionRecord], EvalReport]:
    """Decode, propagate and evaluate a copy of ``preds`` against the batch's ground truth."""
    preds = [dataclasses.replace(r, extra=dict(r.extra)) for r in preds]
    q = batch.header.quantizer
    decode_records(preds, q, cfg)
    propagate_records(preds, batch.header.camera, cfg, batch.header.diagonal)
    report = evaluate_records(batch.gt, preds, batch.header.camera, cfg, CATEGORY_NAMES)
    return preds, report


@dataclass
class ExperimentResult:
    local: EvalReport
    fused: EvalReport
    local_preds: list[DetectionRecord]
    fused_preds: list[DetectionRecord]

    @property
    def abs_delta(self) -> float:
        return self.fused.depth_mean_abs / self.local.depth_mean_abs - 1.0

    @property
    def rel_delta(self) -> float:
        return self.fused.depth_mean_rel / self.local.depth_mean_rel - 1.0


def run_experiment(spec: SceneSpec, noise: NoiseModel, cfg: RunConfig, n_scenes: int = 100,
                   batch: SceneBatch | None = None) -> ExperimentResult:
    """Local-only (D = D_L) versus full fusion on the same simulated batch."""
    batch = batch or simulate_batch(spec, noise, cfg, n_scenes)
    lp, local = run_records(batch, batch.preds, cfg.replace(fusion="local"))
    fp, fused = run_records(batch, batch.preds, cfg.replace(fusion="pgd"))
    return ExperimentResult(local, fused, lp, fp)


def oracle_table(batch: SceneBatch, subsets, cfg: RunConfig) -> list[tuple[frozenset, EvalReport]]:
    """Evaluate the full pipeline with each oracle subset substituted in."""
    rows = []
    q = batch.header.quantizer
    for subset in subsets:
        subset = frozenset(Oracle(o) for o in subset)
        preds = apply_oracles(batch.preds, batch.gt, subset, batch.header.camera, q)
        _, rep = run_records(batch, preds, cfg)
        rows.append((subset, rep))
    return rows


def matched_depth_errors(preds: list[DetectionRecord], gt: list[DetectionRecord], cam: CameraModel):
    by_id = {(g.frame, g.id): g for g in gt}
    pairs = [(r.d, by_id[(r.frame, r.gt_id)].z - cam.f * cam.b_z) for r in preds if r.gt_id is not None]
    p, t = zip(*pairs)
    return depth_error_stats(p, t)
