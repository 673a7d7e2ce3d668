"""
Camera model, rigid poses, inverse-depth hypotheses and plane-sweep warping.

Conventions: poses map world coordinates to camera coordinates
(x_cam = R x_world + t); the camera looks down +z with y pointing down the image.
"""

import logging
from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from tools.errors import GeometryError, HypothesisError

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-6
# round-off slack when a projected coordinate lands exactly on the image border
COORD_TOL = 1e-6


class Intrinsics(BaseModel):
    """Pinhole intrinsics in pixels"""
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    width: int = Field(gt=0)
    height: int = Field(gt=0)

    @model_validator(mode="after")
    def _principal_point_inside(self):
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}")
        return self

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


class Pose(BaseModel):
    """Rigid world-to-camera transform"""
    rotation: List[List[float]]
    translation: List[float]

    @model_validator(mode="after")
    def _check_rotation(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector translation")
        if np.abs(r.T @ r - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation determinant is not +1")
        return self

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=np.float64)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(rotation=np.eye(3).tolist(), translation=[0.0, 0.0, 0.0])

    @classmethod
    def from_matrix(cls, matrix) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64).reshape(4, 4)
        return cls(rotation=m[:3, :3].tolist(), translation=m[:3, 3].tolist())

    @classmethod
    def from_camera_center(cls, center, rotation=None) -> "Pose":
        """Pose of a camera located at ``center`` (world coordinates)."""
        r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        return cls(rotation=r.tolist(), translation=(-r @ np.asarray(center, dtype=np.float64)).tolist())

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def row_major(self) -> List[float]:
        return self.matrix().reshape(-1).tolist()

    def camera_center(self) -> np.ndarray:
        return -self.R.T @ self.t

    def inverse(self) -> "Pose":
        r = self.R
        return Pose(rotation=r.T.tolist(), translation=(-r.T @ self.t).tolist())

    def compose(self, other: "Pose") -> "Pose":
        """self . other: apply ``other`` first, then ``self``."""
        return Pose(rotation=(self.R @ other.R).tolist(), translation=(self.R @ other.t + self.t).tolist())

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points."""
        return points @ self.R.T + self.t


def relative_pose(source: Pose, target: Pose) -> Pose:
    """Map target-camera coordinates to source-camera coordinates: T_src . T_tgt^-1."""
    return source.compose(target.inverse())


class HypothesisSet(BaseModel):
    """Depth hypotheses, uniform in inverse depth, with one-hot bin edges.

    ``bin_edges`` has M + 1 entries: edge 0 is 0 by convention, edges 1..M-1 lie at
    the inverse-depth midpoints between neighbouring hypotheses and edge M is
    d_max. Depths beyond d_max clamp into the last bin. The midpoints replace the
    (d_k-1, d_k] intervals of the usual one-hot encoding so that decoding a bin
    moves inverse depth by at most half a hypothesis step.
    """
    depths: List[float]
    bin_edges: List[float]

    @model_validator(mode="after")
    def _check(self):
        d = np.asarray(self.depths)
        if d.size < 2:
            raise ValueError("need at least two hypotheses")
        if np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise ValueError("hypothesis depths must be positive and ascending")
        if len(self.bin_edges) != d.size + 1 or self.bin_edges[0] != 0.0:
            raise ValueError("bin edges must be M + 1 values starting at 0")
        return self

    @property
    def count(self) -> int:
        return len(self.depths)

    @property
    def d_min(self) -> float:
        return self.depths[0]

    @property
    def d_max(self) -> float:
        return self.depths[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.depths, dtype=np.float64)

    def inverse_depths(self) -> np.ndarray:
        return 1.0 / self.as_array()


def make_hypotheses(d_min: float, d_max: float, count: int) -> HypothesisSet:
    """Hypotheses uniform on [1/d_max, 1/d_min], both endpoints included."""
    if not (0 < d_min < d_max):
        raise HypothesisError(f"need 0 < d_min < d_max, got d_min={d_min}, d_max={d_max}")
    if count < 2:
        raise HypothesisError(f"need at least 2 hypotheses, got {count}")
    inverse = np.linspace(1.0 / d_max, 1.0 / d_min, count)
    depths = np.sort(1.0 / inverse)
    depths[0], depths[-1] = d_min, d_max
    midpoints = 2.0 / (inverse[::-1][:-1] + inverse[::-1][1:])
    edges = [0.0] + midpoints.tolist() + [float(d_max)]
    return HypothesisSet(depths=depths.tolist(), bin_edges=edges)


def pixel_grid(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return u, v


def backproject(pixel, depth, K: Intrinsics) -> np.ndarray:
    """Camera-frame 3-D point(s) for pixel (u, v) at z = depth."""
    u, v = np.asarray(pixel[0], dtype=np.float64), np.asarray(pixel[1], dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise GeometryError("backproject needs positive depth")
    x = (u - K.cx) * depth / K.fx
    y = (v - K.cy) * depth / K.fy
    return np.stack(np.broadcast_arrays(x, y, depth), axis=-1)


def project(points: np.ndarray, K: Intrinsics) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project (..., 3) camera-frame points; returns (u, v, z)."""
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * points[..., 0] / z + K.cx
        v = K.fy * points[..., 1] / z + K.cy
    return u, v, z


def bilinear_sample(image: np.ndarray, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sample (H, W, C) ``image`` at float coords; out-of-bounds pixels are invalid.

    A coordinate is valid when it lies within [0, W-1] x [0, H-1]; corners falling
    outside only ever carry zero weight in that case.
    """
    height, width = image.shape[:2]
    finite = np.isfinite(u) & np.isfinite(v)
    with np.errstate(invalid="ignore"):
        valid = (
            finite
            & (u >= -COORD_TOL) & (u <= width - 1 + COORD_TOL)
            & (v >= -COORD_TOL) & (v <= height - 1 + COORD_TOL)
        )
    us = np.clip(np.where(valid, u, 0.0), 0.0, width - 1)
    vs = np.clip(np.where(valid, v, 0.0), 0.0, height - 1)
    x0 = np.floor(us).astype(np.int64)
    y0 = np.floor(vs).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    ax = (us - x0)[..., None]
    ay = (vs - y0)[..., None]
    sampled = (
        image[y0, x0] * (1 - ax) * (1 - ay)
        + image[y0, x1] * ax * (1 - ay)
        + image[y1, x0] * (1 - ax) * ay
        + image[y1, x1] * ax * ay
    )
    sampled = np.where(valid[..., None], sampled, 0.0)
    return sampled.astype(image.dtype, copy=False), valid


def warp_source_to_target(
    source: np.ndarray,
    K: Intrinsics,
    relative: Pose,
    depth: Union[float, np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """Warp ``source`` onto the target view through depth ``depth``.

    ``relative`` maps target-camera coordinates to source-camera coordinates.
    ``depth`` is a scalar plane-sweep hypothesis or a per-pixel (H, W) depth map.
    Returns the warped image and a float validity mask (1 inside the source image
    and in front of the camera, else 0 with the warped value set to 0).
    """
    height, width = source.shape[:2]
    squeeze = source.ndim == 2
    image = source[..., None] if squeeze else source
    depth_array = np.asarray(depth, dtype=np.float64)
    if np.any(depth_array <= 0):
        raise GeometryError("warp depth must be positive")
    u, v = pixel_grid(height, width)
    points = backproject((u, v), np.broadcast_to(depth_array, (height, width)), K)
    moved = relative.apply(points)
    us, vs, z = project(moved, K)
    in_front = z > 0
    us = np.where(in_front, us, np.nan)
    vs = np.where(in_front, vs, np.nan)
    warped, valid = bilinear_sample(image, us, vs)
    if squeeze:
        warped = warped[..., 0]
    return warped, valid.astype(source.dtype if source.dtype.kind == "f" else np.float32)
