"""Pinhole camera model and the pairwise perspective depth relation.

Coordinates are camera coordinates: x to the right, y *down*, z forward
along the optical axis. The image row ``v'`` grows downward as well, so an
object standing on the ground below the camera has ``v = v' - c_v > 0``.

The projection matrix has a single focal length for both image axes::

    P = [[f, 0, c_u, -f*b_x],
         [0, f, c_v, -f*b_y],
         [0, 0, 1,   -f*b_z]]

and a point projects as ``d * (u', v', 1) = P @ (x, y, z, 1)``, which gives
``d = z - f*b_z`` and ``v * d = f * (y - b_y + c_v * b_z)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateBox, HorizonSingular, NonPositiveDepth

#: Below this |v| (pixels) a destination is treated as lying on the horizon.
V_MIN = 1.0
#: Projective depths at or below this are rejected.
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraModel:
    f: float
    c_u: float
    c_v: float
    b_x: float = 0.0
    b_y: float = 0.0
    b_z: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.f) and self.f > 0):
            raise ValueError(f"focal length must be positive, got {self.f}")

    @property
    def matrix(self) -> np.ndarray:
        f = self.f
        return np.array(
            [
                [f, 0.0, self.c_u, -f * self.b_x],
                [0.0, f, self.c_v, -f * self.b_y],
                [0.0, 0.0, 1.0, -f * self.b_z],
            ]
        )

    @classmethod
    def from_matrix(cls, P, atol: float = 1e-9) -> "CameraModel":
        """Recover the model from a 3x4 projection matrix.

        Only matrices of the form above are accepted; in particular both
        focal lengths must agree.
        """
        P = np.asarray(P, dtype=float)
        if P.shape != (3, 4):
            raise ValueError(f"expected a 3x4 matrix, got shape {P.shape}")
        fu, fv = P[0, 0], P[1, 1]
        if abs(fu - fv) > atol * max(1.0, abs(fu)):
            raise ValueError(f"anisotropic focal lengths ({fu} vs {fv}) are not supported")
        skew = (P[0, 1], P[1, 0], P[2, 0], P[2, 1])
        if any(abs(s) > atol for s in skew) or abs(P[2, 2] - 1.0) > atol:
            raise ValueError("projection matrix is not of pinhole form")
        f = float(fu)
        return cls(
            f=f,
            c_u=float(P[0, 2]),
            c_v=float(P[1, 2]),
            b_x=float(-P[0, 3] / f),
            b_y=float(-P[1, 3] / f),
            b_z=float(-P[2, 3] / f),
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("f", "c_u", "c_v", "b_x", "b_y", "b_z")}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        if "f_u" in d or "f_v" in d:
            fu, fv = float(d.get("f_u", d.get("f"))), float(d.get("f_v", d.get("f")))
            if fu != fv:
                raise ValueError(f"anisotropic focal lengths ({fu} vs {fv}) are not supported")
            d = {**d, "f": fu}
        return cls(
            f=float(d["f"]),
            c_u=float(d["c_u"]),
            c_v=float(d["c_v"]),
            b_x=float(d.get("b_x", 0.0)),
            b_y=float(d.get("b_y", 0.0)),
            b_z=float(d.get("b_z", 0.0)),
        )


@dataclass(frozen=True)
class Box3D:
    """A 7-DoF box in camera coordinates.

    ``(x, y, z)`` is the 3D center, ``h`` is measured along y (so the bottom
    face sits at ``y + h/2``), ``l`` lies along the heading direction and
    ``w`` across it. ``yaw`` rotates about the vertical axis; a box with
    ``yaw = 0`` has its length along +x. ``velocity`` is the ground-plane
    velocity ``(v_x, v_z)`` in m/s.
    """

    x: float
    y: float
    z: float
    w: float
    l: float
    h: float
    yaw: float = 0.0
    category: int = 0
    velocity: tuple[float, float] | None = None
    attribute: int | None = None
    difficulty: int | None = None

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise DegenerateBox(f"box sides must be positive, got w={self.w} l={self.l} h={self.h}")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def bottom(self) -> float:
        """Height (y, downward-positive) of the bottom face."""
        return self.y + 0.5 * self.h

    def bev_corners(self) -> np.ndarray:
        """Four BEV corners as (x, z) rows, in a consistent winding order."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = 0.5 * self.l, 0.5 * self.w
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        # rotation about +y (down) with x->z handedness of camera frame
        rot = np.array([[c, s], [-s, c]])
        return local @ rot.T + np.array([self.x, self.z])


class ProjectedCenter(NamedTuple):
    u_prime: float
    v_prime: float
    v: float


def wrap_angle(a):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    out = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return float(out) if np.ndim(out) == 0 else out


def project_point(cam: CameraModel, p) -> tuple[ProjectedCenter, float]:
    """Project a 3D camera-frame point; returns the image center and its depth."""
    x, y, z = (float(c) for c in p)
    d = z - cam.f * cam.b_z
    if not d > MIN_DEPTH:
        raise NonPositiveDepth(f"projective depth {d} is not positive")
    u_prime = (cam.f * x + cam.c_u * z - cam.f * cam.b_x) / d
    v_prime = (cam.f * y + cam.c_v * z - cam.f * cam.b_y) / d
    return ProjectedCenter(u_prime, v_prime, v_prime - cam.c_v), d


def back_project(cam: CameraModel, u_prime: float, v_prime: float, d: float) -> np.ndarray:
    """Inverse of :func:`project_point` given the projective depth ``d``."""
    f = cam.f
    z = d + f * cam.b_z
    x = (u_prime - cam.c_u) * d / f - cam.c_u * cam.b_z + cam.b_x
    y = (v_prime - cam.c_v) * d / f - cam.c_v * cam.b_z + cam.b_y
    return np.array([x, y, z])


def _check_horizon(v2: float, v_min: float) -> None:
    if not abs(v2) > v_min:
        raise HorizonSingular(f"|v2| = {abs(v2)} is within {v_min} px of the horizon")


def pairwise_depth_strict(cam: CameraModel, v1, d1, y1, v2, y2, *, v_min: float = V_MIN) -> float:
    """Exact depth transfer from object 1 to object 2 using center heights."""
    _check_horizon(v2, v_min)
    if not d1 > 0:
        raise NonPositiveDepth(f"source depth {d1} is not positive")
    return (v1 * d1 + cam.f * (y2 - y1)) / v2


def pairwise_depth_approx(cam: CameraModel, v1, d1, h1, v2, h2, *, v_min: float = V_MIN) -> float:
    """Depth transfer assuming both boxes rest on the same ground height.

    The center height difference is replaced by half the difference of the
    box heights.
    """
    _check_horizon(v2, v_min)
    if not d1 > 0:
        raise NonPositiveDepth(f"source depth {d1} is not positive")
    return (v1 * d1 + 0.5 * cam.f * (h1 - h2)) / v2


def propagation_error_bound(f: float, v2: float, delta: float) -> float:
    """Depth error of the same-ground transfer when bottoms differ by ``delta``."""
    if v2 == 0:
        raise HorizonSingular("v2 = 0: the transfer is undefined on the horizon")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return f / abs(v2) * delta
