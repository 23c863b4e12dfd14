"""Deterministic piecewise-planar room-corner scene used as a test fixture.

Every surface has its own flat colour (plus pixel noise), so colour edges
coincide with depth and orientation edges. The LiDAR scan samples a
fixed fraction of pixel rays with Gaussian range noise; the default 0.3 m
emulates a low-cost range sensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import RunConfig
from .geometry import project_points
from .io import CalibrationSet, DepthImage, RawPointCloud, RgbImage

# weights used for every fixture experiment (the defaults over-smooth at 800 superpixels)
FIXTURE_CONFIG = RunConfig(n_superpixels=800, beta=0.1, gamma=0.02, delta=0.3)

CORNER_DEPTH = 14.0
WALL_SLOPE = 0.6  # dz/dx of the two walls meeting at the corner
FLOOR_SLOPE = 4.0  # dz/dy of the floor: lower rows are nearer
FLOOR_TOP = 0.0

# (x range, y range, z range, colours of the -z, -x, +x, -y faces)
BOXES = (
    ((-3.0, -0.6), (0.3, 1.4), (5.0, 6.5), ((205, 45, 40), (120, 25, 25), (150, 35, 30), (235, 110, 100))),
    ((0.8, 2.8), (-0.8, 0.9), (7.0, 8.5), ((40, 70, 205), (25, 40, 130), (30, 50, 150), (120, 150, 240))),
    ((-4.5, -3.2), (-2.2, 0.5), (9.0, 10.0), ((230, 200, 60), (150, 130, 30), (180, 160, 40), (250, 240, 150))),
)
LEFT_WALL = (185, 140, 105)
RIGHT_WALL = (95, 150, 105)
FLOOR = (105, 100, 92)

@dataclass
class SyntheticScene:
    image: RgbImage
    cloud: RawPointCloud
    calib: CalibrationSet
    ground_truth: DepthImage
    surface_id: np.ndarray  # (H, W) index of the visible surface


def kitti_like_calibration(width: int, height: int) -> CalibrationSet:
    f = 0.625 * width
    p_rect = np.array([[f, 0.0, width / 2.0, 0.0], [0.0, f, height / 2.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    a = np.deg2rad(0.4)
    r_rect = np.eye(4)
    r_rect[1:3, 1:3] = [[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]]
    t = np.eye(4)
    t[:3, :3] = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]
    t[:3, 3] = [0.02, -0.08, -0.27]
    return CalibrationSet(p_rect, r_rect, t)


def _rays(calib: CalibrationSet, width: int, height: int) -> np.ndarray:
    """Rectified-frame ray per pixel centre, scaled so that z == 1."""
    k = calib.p_rect[:, :3]
    cols, rows = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    pix = np.stack([cols, rows, np.ones_like(cols)], axis=-1)
    rays = pix @ np.linalg.inv(k).T
    return rays / rays[..., 2:3]


def render(calib: CalibrationSet, width: int, height: int):
    """Ray-cast the scene: returns (depth, surface id, colour table).

    The backdrop is a room corner (two walls meeting at x = 0 at
    ``CORNER_DEPTH``) above a floor tilted toward the camera; boxes stand
    in front. All planes are moderately slanted so depth stays close to
    affine within a superpixel.
    """
    rays = _rays(calib, width, height)
    dx, dy = rays[..., 0], rays[..., 1]
    depth = np.full((height, width), np.inf)
    surf = np.zeros((height, width), dtype=np.int64)
    colours = []

    def paint(t, hit, colour):
        nonlocal depth, surf
        better = hit & (t > 0) & (t < depth)
        depth = np.where(better, t, depth)
        surf = np.where(better, len(colours), surf)
        colours.append(colour)

    with np.errstate(divide="ignore", invalid="ignore"):
        # plane z = CORNER_DEPTH +/- WALL_SLOPE * x along a unit-z ray
        paint(CORNER_DEPTH / (1.0 - WALL_SLOPE * dx), np.ones_like(dx, dtype=bool), LEFT_WALL)
        paint(CORNER_DEPTH / (1.0 + WALL_SLOPE * dx), np.ones_like(dx, dtype=bool), RIGHT_WALL)
        t_floor = CORNER_DEPTH / (1.0 + FLOOR_SLOPE * dy)
        paint(t_floor, dy * t_floor > FLOOR_TOP, FLOOR)
        for (x0, x1), (y0, y1), (z0, z1), face_colours in BOXES:
            # slab test; t equals camera z because rays have unit z
            tx0, tx1 = np.minimum(x0 / dx, x1 / dx), np.maximum(x0 / dx, x1 / dx)
            ty0, ty1 = np.minimum(y0 / dy, y1 / dy), np.maximum(y0 / dy, y1 / dy)
            t_near = np.maximum(np.maximum(tx0, ty0), z0)
            t_far = np.minimum(np.minimum(tx1, ty1), z1)
            hit = t_near <= t_far
            front = t_near == z0
            side = (t_near == tx0) & ~front
            top = (t_near == ty0) & ~front & ~side
            px = dx * t_near
            paint(np.where(hit & front, t_near, np.inf), hit & front, face_colours[0])
            paint(np.where(hit & side & (px > 0), t_near, np.inf), hit & side & (px > 0), face_colours[1])
            paint(np.where(hit & side & (px <= 0), t_near, np.inf), hit & side & (px <= 0), face_colours[2])
            paint(np.where(hit & top, t_near, np.inf), hit & top, face_colours[3])
    return depth, surf, np.array(colours, dtype=np.float64)


def make_scene(width: int = 320, height: int = 240, sample_fraction: float = 0.05,
               range_noise: float = 0.3, colour_noise: float = 4.0, seed: int = 0) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    calib = kitti_like_calibration(width, height)
    depth, surf, table = render(calib, width, height)

    pixels = table[surf] + rng.normal(0.0, colour_noise, size=(height, width, 3))
    image = RgbImage(np.clip(np.rint(pixels), 0, 255).astype(np.uint8))

    n_pixels = width * height
    picked = np.sort(rng.choice(n_pixels, size=int(round(sample_fraction * n_pixels)), replace=False))
    rays = _rays(calib, width, height).reshape(-1, 3)[picked]
    ranges = depth.ravel()[picked] * np.linalg.norm(rays, axis=1) + rng.normal(0.0, range_noise, size=len(picked))
    rect = rays / np.linalg.norm(rays, axis=1, keepdims=True) * ranges[:, None]

    # a few returns behind the camera and off to the sides, removed by projection
    extra = np.column_stack([rng.uniform(-30, 30, 300), rng.uniform(-2, 2, 300), rng.uniform(-30, -1, 300)])
    rect = np.vstack([rect, extra])

    to_velo = np.linalg.inv(calib.velo_to_rect)
    velo = (np.hstack([rect, np.ones((len(rect), 1))]) @ to_velo.T)[:, :3]
    velo = velo.astype(np.float32).astype(np.float64)  # what a .bin file can carry
    refl = rng.uniform(0.0, 1.0, len(velo))
    return SyntheticScene(image, RawPointCloud(velo, refl), calib, DepthImage(depth), surf)


def nearest_neighbor_fill(cloud: RawPointCloud, calib: CalibrationSet, width: int, height: int) -> DepthImage:
    """Baseline densifier: every pixel takes the depth of the closest projected return."""
    pts = project_points(cloud, calib, width, height)
    if len(pts) == 0:
        return DepthImage(np.zeros((height, width)))
    tree = cKDTree(np.column_stack([pts.v, pts.u]))
    rows, cols = np.mgrid[0:height, 0:width]
    _, idx = tree.query(np.column_stack([rows.ravel() + 0.5, cols.ravel() + 0.5]))
    return DepthImage(pts.depth[idx].reshape(height, width))


def write_frame(scene: SyntheticScene, out_dir, frame_id: str = "synthetic"):
    """Store the scene in the KITTI-style file layout; returns a FrameBundle."""
    from pathlib import Path

    from . import io
    from .config import write_config
    from .pipeline import FrameBundle

    out = Path(out_dir)
    cam, velo = io.format_calibration(scene.calib)
    paths = {
        "image": out / f"{frame_id}.png",
        "cloud": out / f"{frame_id}.bin",
        "cam": out / "calib_cam_to_cam.txt",
        "velo": out / "calib_velo_to_cam.txt",
        "gt": out / f"{frame_id}_gt.png",
    }
    io.atomic_write(paths["image"], io.write_rgb(scene.image))
    io.atomic_write(paths["cloud"], io.write_point_cloud(scene.cloud))
    io.atomic_write(paths["cam"], cam)
    io.atomic_write(paths["velo"], velo)
    io.atomic_write(paths["gt"], io.write_depth_png(scene.ground_truth))
    io.atomic_write(out / "fixture.cfg", write_config(FIXTURE_CONFIG))
    return FrameBundle(paths["image"], paths["cloud"], (paths["cam"], paths["velo"]), paths["gt"], frame_id)
