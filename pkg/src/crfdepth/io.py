"""Readers and writers for calibration text, velodyne scans and images."""

from __future__ import annotations

import io as _io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError


@dataclass(frozen=True)
class CalibrationSet:
    """Camera/LiDAR calibration in the KITTI raw convention.

    ``p_rect`` (3x4) projects rectified camera coordinates to pixels,
    ``r_rect`` (4x4) is the homogeneous rectifying rotation and
    ``t_velo_cam`` (4x4) maps LiDAR coordinates into the reference camera.
    """

    p_rect: np.ndarray
    r_rect: np.ndarray
    t_velo_cam: np.ndarray

    @property
    def velo_to_rect(self) -> np.ndarray:
        """4x4 transform from LiDAR frame to the rectified camera frame."""
        return self.r_rect @ self.t_velo_cam

    @property
    def full_projection(self) -> np.ndarray:
        return self.p_rect @ self.r_rect @ self.t_velo_cam

    def check(self, atol: float = 1e-6) -> None:
        for name, m in (("R_rect", self.r_rect), ("T_velo_cam", self.t_velo_cam)):
            rot = m[:3, :3]
            if not np.allclose(rot @ rot.T, np.eye(3), atol=atol):
                raise FormatError(f"{name} rotation block is not orthonormal")
            if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
                raise FormatError(f"{name} bottom row must be (0, 0, 0, 1)")
        if self.p_rect[2, 2] != 1.0 or self.p_rect[2, 0] != 0.0 or self.p_rect[2, 1] != 0.0:
            raise FormatError("P_rect third row must start with (0, 0, 1)")

    @classmethod
    def identity(cls, fu=1.0, fv=1.0, cu=0.0, cv=0.0) -> "CalibrationSet":
        p = np.array([[fu, 0.0, cu, 0.0], [0.0, fv, cv, 0.0], [0.0, 0.0, 1.0, 0.0]])
        return cls(p, np.eye(4), np.eye(4))


def _parse_kv_text(text: str) -> dict[str, tuple[int, list[str]]]:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or ":" not in line:
            continue
        key, value = line.split(":", 1)
        entries[key.strip()] = (lineno, value.split())
    return entries


def _floats(entries, key, count):
    if key not in entries:
        raise FormatError(f"missing calibration key {key}")
    lineno, tokens = entries[key]
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"line {lineno}: non-numeric value for {key}: {exc}") from None
    if len(values) != count:
        raise FormatError(f"line {lineno}: {key} expects {count} values, got {len(values)}")
    return np.array(values, dtype=np.float64)


def parse_calibration(text: str, camera: str = "02") -> CalibrationSet:
    """Parse calibration from KITTI-style ``key: v1 v2 ...`` text.

    ``text`` may be the concatenation of ``calib_cam_to_cam.txt`` and
    ``calib_velo_to_cam.txt``. Only numeric tokens of the keys in use are
    validated; date stamps and other keys are ignored.
    """
    entries = _parse_kv_text(text)
    p_rect = _floats(entries, f"P_rect_{camera}", 12).reshape(3, 4)
    r3 = _floats(entries, "R_rect_00", 9).reshape(3, 3)
    rot = _floats(entries, "R", 9).reshape(3, 3)
    trans = _floats(entries, "T", 3)

    r_rect = np.eye(4)
    r_rect[:3, :3] = r3
    t_velo_cam = np.eye(4)
    t_velo_cam[:3, :3] = rot
    t_velo_cam[:3, 3] = trans
    return CalibrationSet(p_rect, r_rect, t_velo_cam)


def load_calibration(*paths: str | os.PathLike, camera: str = "02") -> CalibrationSet:
    text = "\n".join(Path(p).read_text() for p in paths)
    return parse_calibration(text, camera=camera)


def format_calibration(calib: CalibrationSet, camera: str = "02") -> tuple[str, str]:
    """Return (cam_to_cam text, velo_to_cam text)."""

    def row(values):
        return " ".join(repr(float(v)) for v in np.ravel(values))

    cam = f"P_rect_{camera}: {row(calib.p_rect)}\nR_rect_00: {row(calib.r_rect[:3, :3])}\n"
    velo = f"R: {row(calib.t_velo_cam[:3, :3])}\nT: {row(calib.t_velo_cam[:3, 3])}\n"
    return cam, velo


@dataclass
class RawPointCloud:
    points: np.ndarray  # (N, 3) float64, LiDAR frame
    reflectance: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, index: np.ndarray) -> "RawPointCloud":
        refl = None if self.reflectance is None else self.reflectance[index]
        return RawPointCloud(self.points[index], refl)


def read_point_cloud(data: bytes) -> RawPointCloud:
    if len(data) % 16:
        raise FormatError(f"point cloud length {len(data)} is not a multiple of 16 bytes")
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    points = arr[:, :3].astype(np.float64)
    if not np.all(np.isfinite(points)):
        raise FormatError("point cloud contains non-finite coordinates")
    return RawPointCloud(points, arr[:, 3].astype(np.float64))


def write_point_cloud(cloud: RawPointCloud) -> bytes:
    arr = np.zeros((len(cloud), 4), dtype="<f4")
    arr[:, :3] = cloud.points
    if cloud.reflectance is not None:
        arr[:, 3] = cloud.reflectance
    return arr.tobytes()


@dataclass
class RgbImage:
    pixels: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise FormatError(f"expected an HxWx3 image, got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def read_rgb(data: bytes) -> RgbImage:
    with Image.open(_io.BytesIO(data)) as im:
        return RgbImage(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())


def write_rgb(image: RgbImage) -> bytes:
    buf = _io.BytesIO()
    Image.fromarray(np.ascontiguousarray(image.pixels, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class DepthImage:
    """Per-pixel metric depth; ``valid`` False wherever depth is 0."""

    depth: np.ndarray  # (H, W) float64
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.valid is None:
            self.valid = np.isfinite(self.depth) & (self.depth > 0)
        self.depth = np.where(self.valid, self.depth, 0.0)

    @property
    def shape(self):
        return self.depth.shape


DEPTH_SCALE = 256.0


def read_depth_png(data: bytes) -> DepthImage:
    """Decode a 16-bit single-channel PNG where ``value / 256`` is meters."""
    with Image.open(_io.BytesIO(data)) as im:
        if im.mode not in ("I;16", "I;16B", "I"):
            raise FormatError(f"depth PNG must be 16-bit single channel, got mode {im.mode}")
        raw = np.asarray(im, dtype=np.int64)
    if raw.ndim != 2 or raw.min(initial=0) < 0 or raw.max(initial=0) > 65535:
        raise FormatError("depth PNG values out of 16-bit range")
    valid = raw > 0
    return DepthImage(raw / DEPTH_SCALE, valid)


def encode_depth(depth: DepthImage) -> np.ndarray:
    values = np.rint(np.where(depth.valid, depth.depth, 0.0) * DEPTH_SCALE)
    return np.clip(values, 0, 65535).astype(np.uint16)


def write_depth_png(depth: DepthImage) -> bytes:
    buf = _io.BytesIO()
    Image.fromarray(encode_depth(depth)).save(buf, format="PNG")
    return buf.getvalue()


def write_gray_png(values: np.ndarray) -> bytes:
    buf = _io.BytesIO()
    Image.fromarray(np.asarray(values, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    if isinstance(data, str):
        data = data.encode("utf-8")
    tmp.write_bytes(data)
    os.replace(tmp, path)
