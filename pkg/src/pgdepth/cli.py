"""Command-line entry point: ``pgdepth <command> ...``.

Exit status is 0 on success, 2 for unreadable input or a bad configuration
and 3 for numerical/domain failures.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import sys

import numpy as np
from scipy.special import expit

from .errors import ConfigError, ParseError, PGDError
from .geometry import CameraModel
from .graph import fusion_weight_stats
from .metrics import match_detections
from .pipeline import (
    RunConfig, decode_records, depth_pairs, ensure_pipeline, evaluate_records, frames_for_eval,
    run_pipeline,
)
from .records import Header, RecordFile, dumps_records, read_records
from .sim import (
    NoiseModel, Oracle, SceneBatch, SceneSpec, oracle_table, simulate_batch,
)

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN = 0, 2, 3
PLOT_KINDS = ("pr", "weights-hist", "weights-scatter", "depth-error-vs-depth")

# RunConfig field -> (flag type, help)
_RUN_FLAGS = {
    "method": (str, "depth division: uniform, sid, lid or uniform_log"),
    "unit": (float, "bin unit U in meters"),
    "d_max": (float, "largest depth split point"),
    "lam": (float, "local fusion logit (direct-regression share is sigmoid(lam))"),
    "k": (int, "in-edges kept per node"),
    "t2d_max": (float, "2D distance normalizer; defaults to the image diagonal"),
    "distance_variant": (str, "centers2d, centers3d or bottoms3d"),
    "gating": (bool, "gate and prune edges (off: uniform weights over all edges)"),
    "depth_score_variant": (str, "top2, entropy or std"),
    "use_depth_score": (bool, "multiply the depth score into the ranking score"),
    "fusion": (str, "pgd (local + geometric) or local"),
    "nms_iou": (float, "BEV IoU threshold of the rotated NMS"),
    "eval_mode": (str, "kitti, nuscenes or both"),
    "pr_clip": (bool, "clip nuScenes PR curves at recall/precision 0.1"),
    "seed": (int, "random seed"),
    "v_min": (float, "horizon cutoff in pixels for depth transfers"),
}


# ---------------------------------------------------------------- config

def _parse_value(name: str, default, text: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, tuple):
            parts = [p for p in text.replace(" ", "").split(",") if p]
            if len(parts) != len(default):
                raise ValueError(f"expected {len(default)} comma-separated values")
            return tuple(int(p) if isinstance(d, int) else float(p) for d, p in zip(default, parts))
        if isinstance(default, int):
            return int(text)
        if default is None or isinstance(default, float):
            if default is None and text.lower() in ("", "none"):
                return None
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {exc}") from None


def _section_kwargs(cp: configparser.ConfigParser, section: str, cls, skip=()) -> dict:
    if not cp.has_section(section):
        return {}
    defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls) if f.name not in skip}
    out = {}
    for key, text in cp.items(section):
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        out[key] = _parse_value(key, defaults[key], text)
    return out


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {"run", "scene", "noise", "camera", "simulate"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
    return cp


def run_config(args) -> RunConfig:
    kw = {}
    if args.config:
        kw.update(_section_kwargs(load_config(args.config), "run", RunConfig))
    for name in _RUN_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    return RunConfig(**kw)


def scene_from_config(cp: configparser.ConfigParser, cfg: RunConfig, seed: int | None):
    try:
        scene = _section_kwargs(cp, "scene", SceneSpec, skip=("camera", "categories"))
        noise = NoiseModel(**_section_kwargs(cp, "noise", NoiseModel))
        if cp.has_section("camera"):
            cam = {k: _parse_value(k, 0.0, v) for k, v in cp.items("camera")}
            scene["camera"] = CameraModel(**cam)
        if seed is not None:
            scene["seed"] = seed
        else:
            scene.setdefault("seed", cfg.seed)
        scene.setdefault("d_max", cfg.d_max)
        spec = SceneSpec(**scene)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    n_scenes = 1
    if cp.has_section("simulate"):
        for key, text in cp.items("simulate"):
            if key != "n_scenes":
                raise ConfigError(f"unknown key {key!r} in [simulate]")
            n_scenes = _parse_value(key, 1, text)
    return spec, noise, n_scenes


# ---------------------------------------------------------------- helpers

def _emit(text: str, dest: str | None) -> None:
    if dest in (None, "-"):
        sys.stdout.write(text)
        return
    with open(dest, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read(path: str) -> RecordFile:
    if path == "-":
        return read_records(sys.stdin)
    try:
        return read_records(path)
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _category_names(header: Header) -> dict[int, str]:
    names = header.extra.get("categories")
    if isinstance(names, dict):
        return {int(k): str(v) for k, v in names.items()}
    return {}


def _ensure_quantizer(rf: RecordFile, cfg: RunConfig) -> None:
    if rf.header.quantizer is None:
        rf.header.quantizer = cfg.quantizer()


# ---------------------------------------------------------------- commands

def cmd_decode(args) -> int:
    cfg = run_config(args)
    rf = _read(args.input)
    _ensure_quantizer(rf, cfg)
    decode_records(rf.records, rf.header.quantizer, cfg)
    _emit(dumps_records(rf), args.output)
    return EXIT_OK


def cmd_propagate(args) -> int:
    cfg = run_config(args)
    rf = _read(args.input)
    _ensure_quantizer(rf, cfg)
    edges = run_pipeline(rf, cfg)
    _emit(dumps_records(rf), args.output)
    if args.edges:
        rows = [(fr, e.src, e.dst, e.s_2d, e.s_cls, e.weight, e.s_e, e.d_transfer) for fr, e in edges]
        _emit(_csv(["frame", "src", "dst", "s_2d", "s_cls", "weight", "s_e", "d_transfer"], rows), args.edges)
    return EXIT_OK


def _load_pair(args, cfg: RunConfig):
    gt_file = _read(args.gt)
    pred_file = _read(args.pred) if args.pred != args.gt else gt_file
    _ensure_quantizer(pred_file, cfg)
    return gt_file, pred_file


def cmd_evaluate(args) -> int:
    cfg = run_config(args)
    gt_file, pred_file = _load_pair(args, cfg)
    ensure_pipeline(pred_file, cfg)
    names = _category_names(gt_file.header)
    report = evaluate_records(gt_file.gt, pred_file.preds, pred_file.header.camera, cfg, names)
    _emit(report.to_text(), args.output)
    if args.json:
        _emit(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n", args.json)
    return EXIT_OK


def _oracle_subsets(names: list[str]) -> list[tuple[Oracle, ...]]:
    chosen = [Oracle(n) for n in names]
    subsets = [()] + [(o,) for o in chosen]
    subsets += [tuple(chosen[:i]) for i in range(2, len(chosen) + 1)]
    seen, out = set(), []
    for s in subsets:
        key = frozenset(s)
        if key not in seen:
            seen.add(key)
            out.append(s)
    return out


def cmd_oracle(args) -> int:
    cfg = run_config(args)
    try:
        names = [n for n in args.oracles.split(",") if n] if args.oracles else [o.value for o in Oracle]
        subsets = _oracle_subsets(names)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    gt_file, pred_file = _load_pair(args, cfg)
    batch = SceneBatch(pred_file.header, gt_file.gt, pred_file.preds)
    rows = []
    for subset, rep in oracle_table(batch, subsets, cfg):
        label = "+".join(o.value for o in Oracle if o in subset) or "none"
        flat = rep.flat()
        rows.append([
            label,
            flat.get("nus/mAP", ""), flat.get("nus/NDS", ""),
            flat.get("kitti/AP3d@0.70/moderate/mean", ""), flat.get("depth/mean_abs_m", ""),
        ])
    _emit(_csv(["oracles", "mAP", "NDS", "AP3d_0.70_moderate", "depth_mean_abs_m"], rows), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = run_config(args)
    cp = load_config(args.config) if args.config else configparser.ConfigParser()
    spec, noise, n_scenes = scene_from_config(cp, cfg, args.seed)
    if args.n_scenes is not None:
        n_scenes = args.n_scenes
    if n_scenes < 1:
        raise ConfigError("n_scenes must be >= 1")
    batch = simulate_batch(spec, noise, cfg, n_scenes)
    names = {str(c.id): c.name for c in spec.categories}
    header = dataclasses.replace(batch.header, extra={"categories": names})
    _emit(dumps_records(RecordFile(header, batch.gt)), args.out_gt)
    _emit(dumps_records(RecordFile(header, batch.preds)), args.out_pred)
    return EXIT_OK


def _plot_pr(args, cfg, gt_file, pred_file) -> str:
    cols = ["rank", "score", "tp", "recall", "precision"]
    gt, preds = gt_file.gt, pred_file.preds
    if not preds or not gt:
        return _csv(cols, [])
    gt_frames, det_frames = frames_for_eval(gt, preds, cfg)
    m = match_detections(gt_frames, det_frames, args.category, args.criterion, args.thresh)
    if m.n_gt == 0:
        return _csv(cols, [])
    tp = np.cumsum(m.tp)
    rows = [
        (i + 1, float(s), int(t), float(tp[i] / m.n_gt), float(tp[i] / (i + 1)))
        for i, (s, t) in enumerate(zip(m.scores, m.tp))
    ]
    return _csv(cols, rows)


def cmd_plotdata(args) -> int:
    cfg = run_config(args)
    need_gt = args.kind in ("pr", "depth-error-vs-depth")
    pred_file = _read(args.pred)
    gt_file = _read(args.gt) if args.gt else pred_file
    _ensure_quantizer(pred_file, cfg)
    ensure_pipeline(pred_file, cfg)
    preds = pred_file.preds
    if args.kind == "pr":
        text = _plot_pr(args, cfg, gt_file, pred_file)
    elif args.kind == "depth-error-vs-depth":
        cols = ["gt_depth", "pred_depth", "abs_error", "rel_error"]
        p, t = depth_pairs(gt_file.gt, preds, pred_file.header.camera) if need_gt else ([], [])
        rows = sorted(((g, d, abs(d - g), abs(d - g) / g) for d, g in zip(p, t)))
        text = _csv(cols, rows)
    else:
        sel = [r for r in preds if r.alpha is not None and r.d is not None]
        weights = [float(expit(r.alpha)) for r in sel]
        if args.kind == "weights-hist":
            cols = ["bin_lo", "bin_hi", "count"]
            rows = []
            if sel:
                st = fusion_weight_stats(weights, [r.d for r in sel], [r.category for r in sel])
                rows = [(float(lo), float(hi), int(c)) for lo, hi, c in zip(st.bin_edges[:-1], st.bin_edges[1:], st.counts)]
            text = _csv(cols, rows)
        else:
            rows = [(r.frame, r.id, r.d, w, r.category) for r, w in zip(sel, weights)]
            text = _csv(["frame", "id", "depth", "weight", "category"], rows)
    _emit(text, args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (overrides the [run] section of --config)")
    g.add_argument("--config", help="INI file with [run], [scene], [noise], [camera] and [simulate] sections")
    for name, (typ, help_) in _RUN_FLAGS.items():
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            g.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None, help=help_)
        else:
            g.add_argument(flag, dest=name, type=typ, default=None, help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgdepth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="fill d_p, depth_score and d_l of every prediction")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("propagate", help="decode, then fill d_g, the fused depth d and the box center")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--edges", help="write the kept graph edges as CSV to this file")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("evaluate", help="KITTI / nuScenes style metrics")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("-o", "--output", help="text report (default: stdout)")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="metrics with ground truth substituted for prediction parts")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("--oracles", help="comma-separated subset of: " + ", ".join(o.value for o in Oracle))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="write synthetic ground truth and raw predictions")
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-pred", required=True)
    p.add_argument("--n-scenes", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot-data", help="CSV tables behind the diagnostic plots")
    p.add_argument("kind", choices=PLOT_KINDS)
    p.add_argument("pred")
    p.add_argument("--gt", help="ground-truth file (default: the gt records of PRED)")
    p.add_argument("--criterion", default="center", choices=("center", "bev", "iou3d"))
    p.add_argument("--thresh", type=float, default=0.5)
    p.add_argument("--category", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_plotdata)

    for sp in sub.choices.values():
        _add_run_flags(sp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ConfigError) as exc:
        print(f"pgdepth: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PGDError, ValueError, ArithmeticError) as exc:
        print(f"pgdepth: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
