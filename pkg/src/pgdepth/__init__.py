"""Probabilistic and geometric depth for monocular 3D detection.

Depth decoding from discretized distributions, depth propagation over an
instance graph under the shared-ground assumption, detection metrics and a
synthetic scene simulator to exercise them.
"""
from .errors import (
    BadRange, ConfigError, DegenerateBox, DimensionMismatch, EmptyInput, HorizonSingular, IdMismatch,
    InfeasibleSpec, NoGeometry, NoGroundTruth, NonFiniteLogit, NonPositiveDepth, ParseError, PGDError,
    ZeroVector,
)
from .geometry import (
    Box3D, CameraModel, ProjectedCenter, back_project, pairwise_depth_approx, pairwise_depth_strict,
    project_point, propagation_error_bound,
)
from .graph import (
    DistanceVariant, FusionConfig, InstanceNode, build_graph, class_similarity, distance_score,
    fuse_global, fusion_weight_stats, geometric_depth, propagate,
)
from .iou import ScoredDetection, bev_iou, iou_3d, rotated_nms
from .metrics import EvalReport, evaluate, kitti_ap, nds, nuscenes_ap, nuscenes_map, pr_curve
from .pipeline import RunConfig, run_pipeline
from .probdepth import (
    DepthDistribution, DepthQuantizer, DivisionMethod, ScoreVariant, build_quantizer,
    decode_expectation, depth_score, fuse_local,
)
from .records import DetectionRecord, Header, RecordFile, read_records, write_records
from .sim import (
    NoiseModel, Oracle, SceneSpec, apply_oracles, corrupt_to_predictions, generate_scene, oracle_table,
    run_experiment, simulate_batch,
)

__version__ = "0.1.0"
