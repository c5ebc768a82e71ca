"""Line-delimited JSON record files.

The first line is a header::

    {"type": "header", "format_version": 1, "camera": {...},
     "quantizer": {...}, "image_size": [W, H]}

and every following line is one object (``"type"`` is ``gt`` or ``pred``).
Coordinates follow the camera frame with y pointing *down*. Floats are
written with Python's shortest round-trip repr, so ``parse(write(x)) == x``
holds exactly. Keys this module does not know are kept in ``extra`` and
written back unchanged.
"""
from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import ParseError
from .geometry import Box3D, CameraModel
from .probdepth import DepthQuantizer

FORMAT_VERSION = 1

# serialized field order; "type" is written from ``kind``
_FIELDS = (
    "id", "frame", "category",
    "x", "y", "z", "w", "l", "h", "yaw", "velocity", "attribute", "difficulty",
    "u_prime", "v_prime", "d_r", "logits", "cls_vec", "centerness", "alpha", "gt_id",
    "d_p", "depth_score", "d_l", "d_g", "d", "no_geometry",
)
_INT_FIELDS = {"id", "frame", "category", "attribute", "difficulty", "gt_id"}
_FLOAT_FIELDS = {
    "x", "y", "z", "w", "l", "h", "yaw", "u_prime", "v_prime", "d_r", "centerness",
    "alpha", "d_p", "depth_score", "d_l", "d_g", "d",
}


@dataclass
class DetectionRecord:
    """One object line: ground truth or a raw (possibly decoded) prediction."""

    id: int
    frame: int = 0
    kind: str = "pred"
    category: int = 0
    x: float | None = None
    y: float | None = None
    z: float | None = None
    w: float | None = None
    l: float | None = None
    h: float | None = None
    yaw: float | None = None
    velocity: list[float] | None = None
    attribute: int | None = None
    difficulty: int | None = None
    u_prime: float | None = None
    v_prime: float | None = None
    d_r: float | None = None
    logits: list[float] | None = None
    cls_vec: list[float] | None = None
    centerness: float | None = None
    alpha: float | None = None
    gt_id: int | None = None
    # filled by decode / propagate
    d_p: float | None = None
    depth_score: float | None = None
    d_l: float | None = None
    d_g: float | None = None
    d: float | None = None
    no_geometry: bool | None = None
    extra: dict = field(default_factory=dict)

    @property
    def has_box(self) -> bool:
        return None not in (self.x, self.y, self.z, self.w, self.l, self.h)

    def box(self) -> Box3D:
        return Box3D(
            self.x, self.y, self.z, self.w, self.l, self.h,
            yaw=self.yaw or 0.0,
            category=self.category,
            velocity=tuple(self.velocity) if self.velocity is not None else None,
            attribute=self.attribute,
            difficulty=self.difficulty,
        )

    @classmethod
    def from_box(cls, box: Box3D, *, id: int, frame: int = 0, kind: str = "gt", **kw) -> "DetectionRecord":
        return cls(
            id=id, frame=frame, kind=kind, category=box.category,
            x=box.x, y=box.y, z=box.z, w=box.w, l=box.l, h=box.h, yaw=box.yaw,
            velocity=list(box.velocity) if box.velocity is not None else None,
            attribute=box.attribute, difficulty=box.difficulty, **kw,
        )

    def to_json_dict(self) -> dict:
        out = {"type": self.kind}
        for name in _FIELDS:
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        for k, v in self.extra.items():
            if k not in out:
                out[k] = v
        return out

    @classmethod
    def from_json_dict(cls, obj: dict, line: int | None = None) -> "DetectionRecord":
        obj = dict(obj)
        kind = obj.pop("type", None)
        if kind not in ("gt", "pred"):
            raise ParseError(f"object type must be 'gt' or 'pred', got {kind!r}", line)
        if "id" not in obj:
            raise ParseError("object record without 'id'", line)
        kw = {}
        for name in _FIELDS:
            if name not in obj:
                continue
            val = obj.pop(name)
            try:
                kw[name] = _coerce(name, val)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"bad value for {name!r}: {exc}", line) from None
        return cls(kind=kind, extra=obj, **kw)


def _coerce(name: str, val):
    if val is None:
        return None
    if name in _INT_FIELDS:
        if isinstance(val, bool) or not isinstance(val, int):
            raise TypeError(f"expected integer, got {val!r}")
        return val
    if name in _FLOAT_FIELDS:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise TypeError(f"expected number, got {val!r}")
        val = float(val)
        if not math.isfinite(val):
            raise ValueError("non-finite number")
        return val
    if name == "no_geometry":
        if not isinstance(val, bool):
            raise TypeError("expected boolean")
        return val
    # vectors
    if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
        raise TypeError(f"expected a list of numbers, got {val!r}")
    out = [float(v) for v in val]
    if not all(math.isfinite(v) for v in out):
        raise ValueError("non-finite number in vector")
    if name == "velocity" and len(out) != 2:
        raise ValueError("velocity needs 2 components")
    return out


@dataclass
class Header:
    camera: CameraModel
    quantizer: DepthQuantizer | None = None
    image_size: tuple[int, int] | None = None
    format_version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    @property
    def diagonal(self) -> float | None:
        if self.image_size is None:
            return None
        return math.hypot(*self.image_size)

    def to_json_dict(self) -> dict:
        out = {"type": "header", "format_version": self.format_version, "camera": self.camera.to_dict()}
        if self.quantizer is not None:
            out["quantizer"] = self.quantizer.to_dict()
        if self.image_size is not None:
            out["image_size"] = list(self.image_size)
        for k, v in self.extra.items():
            out.setdefault(k, v)
        return out

    @classmethod
    def from_json_dict(cls, obj: dict, line: int = 1) -> "Header":
        obj = dict(obj)
        if obj.pop("type", None) != "header":
            raise ParseError("first record must be the header", line)
        version = obj.pop("format_version", None)
        if version != FORMAT_VERSION:
            raise ParseError(f"unsupported format_version {version!r}", line)
        try:
            camera = CameraModel.from_dict(obj.pop("camera"))
            q = obj.pop("quantizer", None)
            quantizer = DepthQuantizer.from_dict(q) if q is not None else None
            size = obj.pop("image_size", None)
            image_size = (int(size[0]), int(size[1])) if size is not None else None
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"bad header: {exc}", line) from None
        return cls(camera, quantizer, image_size, version, obj)

    def __eq__(self, other):
        if not isinstance(other, Header):
            return NotImplemented
        return self.to_json_dict() == other.to_json_dict()


@dataclass
class RecordFile:
    header: Header
    records: list[DetectionRecord] = field(default_factory=list)

    @property
    def gt(self) -> list[DetectionRecord]:
        return [r for r in self.records if r.kind == "gt"]

    @property
    def preds(self) -> list[DetectionRecord]:
        return [r for r in self.records if r.kind == "pred"]

    def copy(self) -> "RecordFile":
        return RecordFile(self.header, [dataclasses.replace(r, extra=dict(r.extra)) for r in self.records])


def _dumps(obj: dict) -> str:
    return json.dumps(obj, allow_nan=False, separators=(", ", ": "))


def write_records(rf: RecordFile, dest) -> None:
    """Write to a path or a text stream."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            write_records(rf, fh)
        return
    dest.write(_dumps(rf.header.to_json_dict()) + "\n")
    for r in rf.records:
        dest.write(_dumps(r.to_json_dict()) + "\n")


def dumps_records(rf: RecordFile) -> str:
    buf = io.StringIO()
    write_records(rf, buf)
    return buf.getvalue()


def parse_records(lines: Iterable[str]) -> RecordFile:
    header = None
    records = []
    for n, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", n) from None
        if not isinstance(obj, dict):
            raise ParseError("record is not an object", n)
        if header is None:
            header = Header.from_json_dict(obj, n)
            continue
        if obj.get("type") == "header":
            raise ParseError("duplicate header", n)
        rec = DetectionRecord.from_json_dict(obj, n)
        if rec.logits is not None and header.quantizer is not None and len(rec.logits) != header.quantizer.n_bins:
            raise ParseError(
                f"logits length {len(rec.logits)} does not match the header's {header.quantizer.n_bins} bins", n
            )
        records.append(rec)
    if header is None:
        raise ParseError("missing header", 1)
    return RecordFile(header, records)


def read_records(src) -> RecordFile:
    if isinstance(src, (str, Path)):
        with open(src, encoding="utf-8") as fh:
            return parse_records(fh)
    return parse_records(src)


def loads_records(text: str) -> RecordFile:
    return parse_records(text.splitlines())
