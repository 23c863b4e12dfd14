"""LiDAR-to-image projection and point normal estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .io import CalibrationSet, RawPointCloud


@dataclass
class ProjectedPoints:
    """In-image LiDAR returns, one entry per kept point (struct of arrays).

    ``u``/``v`` are continuous pixel coordinates, ``depth`` is the camera
    z', ``xyz`` the metric point in the rectified camera frame and
    ``normals`` unit normals in that frame (NaN rows where unknown).
    """

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    source_index: np.ndarray
    xyz: np.ndarray
    normals: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.u)

    @property
    def pixel_rows(self) -> np.ndarray:
        return np.floor(self.v).astype(np.int64)

    @property
    def pixel_cols(self) -> np.ndarray:
        return np.floor(self.u).astype(np.int64)

    def subset(self, index) -> "ProjectedPoints":
        normals = None if self.normals is None else self.normals[index]
        return ProjectedPoints(self.u[index], self.v[index], self.depth[index],
                               self.source_index[index], self.xyz[index], normals)


@dataclass
class NormalCloud:
    normals: np.ndarray  # (N, 3)
    valid: np.ndarray  # (N,) bool


def _homogeneous(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.ones((len(points), 1))])


def transform_to_camera(cloud: RawPointCloud, calib: CalibrationSet) -> np.ndarray:
    """Apply P_rect . R_rect . T_velo_cam to every point; returns (x', y', z') rows."""
    if len(cloud) == 0:
        return np.zeros((0, 3))
    return _homogeneous(cloud.points) @ calib.full_projection.T


def to_rectified_frame(points: np.ndarray, calib: CalibrationSet) -> np.ndarray:
    if len(points) == 0:
        return np.zeros((0, 3))
    return (_homogeneous(points) @ calib.velo_to_rect.T)[:, :3]


def project_points(cloud: RawPointCloud, calib: CalibrationSet, width: int, height: int,
                   normals: NormalCloud | None = None) -> ProjectedPoints:
    """Project a scan into the image, dropping points behind the camera or off-image."""
    cam = transform_to_camera(cloud, calib)
    z = cam[:, 2]
    front = z > 0
    u = np.full(len(cam), -1.0)
    v = np.full(len(cam), -1.0)
    u[front] = cam[front, 0] / z[front]
    v[front] = cam[front, 1] / z[front]
    keep = front & (u >= 0) & (u < width) & (v >= 0) & (v < height)
    idx = np.flatnonzero(keep)

    xyz = to_rectified_frame(cloud.points[idx], calib)
    cam_normals = None
    if normals is not None:
        rot = calib.velo_to_rect[:3, :3]
        cam_normals = normals.normals[idx] @ rot.T
        cam_normals[~normals.valid[idx]] = np.nan
    return ProjectedPoints(u[idx], v[idx], z[idx], idx, xyz, cam_normals)


def estimate_normals(cloud: RawPointCloud, k: int = 10, query: np.ndarray | None = None) -> NormalCloud:
    """PCA plane-fit normals over the k nearest neighbours (self included).

    Normals point toward the sensor origin. A point is invalid when its
    neighbourhood has fewer than k-1 distinct other positions. ``query``
    restricts the work to a subset of point indices; other rows come back
    invalid.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    pts = np.asarray(cloud.points, dtype=np.float64)
    n = len(pts)
    normals = np.full((n, 3), np.nan)
    valid = np.zeros(n, dtype=bool)
    if n < 3 or n < k:
        return NormalCloud(normals, valid)

    rows = np.arange(n) if query is None else np.asarray(query, dtype=np.int64)
    if len(rows) == 0:
        return NormalCloud(normals, valid)
    tree = cKDTree(pts)
    _, nbr = tree.query(pts[rows], k=k)
    hood = pts[nbr]  # (m, k, 3)

    # distinct other positions: drop the query's own position and duplicates
    others = hood - pts[rows][:, None, :]
    nonzero = np.any(others != 0.0, axis=2)
    srt = np.sort(hood.view([("x", "f8"), ("y", "f8"), ("z", "f8")]).reshape(len(rows), k), axis=1)
    distinct = 1 + np.sum(srt[:, 1:] != srt[:, :-1], axis=1)
    self_present = np.any(~nonzero, axis=1)
    ok = (distinct - self_present.astype(int)) >= k - 1

    centered = hood - hood.mean(axis=1, keepdims=True)
    cov = np.einsum("mki,mkj->mij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    nrm = vecs[:, :, 0]
    # sensor-facing: negative dot product with the position vector
    flip = np.einsum("mi,mi->m", nrm, pts[rows]) > 0
    nrm[flip] *= -1.0
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)

    normals[rows[ok]] = nrm[ok]
    valid[rows[ok]] = True
    return NormalCloud(normals, valid)
