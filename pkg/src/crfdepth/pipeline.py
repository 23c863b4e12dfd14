"""End-to-end depth completion for one frame, plus the experiment sweeps."""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import crf, geometry, io, superpixel
from .config import RunConfig
from .errors import CrfDepthError, ValidationError
from .metrics import EvalResult, evaluate
from .solver import dense_solve

log = logging.getLogger(__name__)


class PipelineError(CrfDepthError):
    def __init__(self, frame_id: str, module: str, cause: Exception):
        super().__init__(f"frame {frame_id}: {module}: {cause}")
        self.frame_id = frame_id
        self.module = module
        self.cause = cause


@contextlib.contextmanager
def stage(frame_id: str, module: str):
    try:
        yield
    except PipelineError:
        raise
    except (CrfDepthError, ValueError, OSError) as exc:
        raise PipelineError(frame_id, module, exc) from exc


@dataclass
class FrameBundle:
    image: Path
    cloud: Path
    calib: tuple[Path, ...]
    ground_truth: Path | None = None
    frame_id: str = "frame"
    camera: str = "02"

    def load(self):
        with stage(self.frame_id, "io"):
            image = io.read_rgb(Path(self.image).read_bytes())
            cloud = io.read_point_cloud(Path(self.cloud).read_bytes())
            calib = io.load_calibration(*self.calib, camera=self.camera)
            gt = None
            if self.ground_truth is not None:
                gt = io.read_depth_png(Path(self.ground_truth).read_bytes())
        return Frame(image, cloud, calib, gt, self.frame_id)


@dataclass
class Frame:
    image: io.RgbImage
    cloud: io.RawPointCloud
    calib: io.CalibrationSet
    ground_truth: io.DepthImage | None = None
    frame_id: str = "frame"


@dataclass
class Completion:
    depth: crf.DenseDepthMap
    uncertainty: crf.UncertaintyMap
    segmentation: superpixel.SuperpixelSegmentation
    graph: superpixel.FourNeighborGraph
    observations: crf.SuperpixelObservations
    system: crf.EnergySystem
    points: geometry.ProjectedPoints

    def depth_image(self) -> io.DepthImage:
        return io.DepthImage(self.depth.depth, self.depth.valid)


def subsample_cloud(cloud: io.RawPointCloud, fraction: float, seed: int) -> io.RawPointCloud:
    if fraction >= 1.0:
        return cloud
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(cloud), size=int(round(fraction * len(cloud))), replace=False))
    return cloud.subset(keep)


def run_complete(frame: Frame, cfg: RunConfig, seed: int = 0, oracle: bool = False,
                 segmentation: superpixel.SuperpixelSegmentation | None = None) -> Completion:
    """Normals, SLIC, graph, projection, aggregation, potentials, solve, paint."""
    fid = frame.frame_id
    h, w = frame.image.height, frame.image.width
    cloud = subsample_cloud(frame.cloud, cfg.subsample_fraction, seed)

    with stage(fid, "geometry"):
        frame.calib.check()
        in_view = geometry.project_points(cloud, frame.calib, w, h).source_index
        normals = geometry.estimate_normals(cloud, cfg.normal_k, query=in_view)
    with stage(fid, "superpixel"):
        seg = segmentation or superpixel.slic_segment(frame.image, cfg.n_superpixels, cfg.compactness)
        graph = superpixel.build_graph(seg)
    with stage(fid, "geometry"):
        pts = geometry.project_points(cloud, frame.calib, w, h, normals=normals)
    with stage(fid, "crf"):
        obs = crf.aggregate(seg, pts, frame.image)
        system = crf.build_system(obs, graph, cfg)
    with stage(fid, "solver"):
        depth = crf.infer(system, seg, cfg)
        unc = crf.infer_uncertainty(obs, graph, cfg, seg, colour=system.colour_w)
        if oracle:
            _oracle_check(system, depth.node_values, cfg)
    log.info("frame %s: %d superpixels, %d edges, %d points, %d CGS iterations",
             fid, seg.n_segments, len(graph.edges), len(pts), depth.report.iterations)
    return Completion(depth, unc, seg, graph, obs, system, pts)


def _oracle_check(system: crf.EnergySystem, x: np.ndarray, cfg: RunConfig) -> None:
    if system.n > 2000:
        log.warning("oracle skipped: %d nodes exceeds the dense-solve limit", system.n)
        return
    ref = dense_solve(system.A.to_dense(), system.b)
    rel = np.linalg.norm(x - ref) / np.linalg.norm(ref)
    if rel > max(1e-6, 10 * cfg.solver_tol):
        raise ValidationError(f"oracle mismatch: iterative and dense solutions differ by {rel:.3e} relative")


@dataclass
class SweepSpec:
    parameter: str
    values: list
    results: list[EvalResult] = field(default_factory=list)

    def rmse(self) -> list[float]:
        return [r.rmse for r in self.results]

    def rows(self):
        return list(zip(self.values, self.results))


def _evaluate(frame: Frame, completion: Completion, cfg: RunConfig, crop=None) -> EvalResult:
    if frame.ground_truth is None:
        raise ValidationError(f"frame {frame.frame_id}: sweeps need a ground-truth depth map")
    with stage(frame.frame_id, "metrics"):
        return evaluate(completion.depth_image(), frame.ground_truth, cap=cfg.depth_cap, crop=crop)


def run_superpixel_sweep(frame: Frame, cfg: RunConfig, counts, seed: int = 0, crop=None) -> SweepSpec:
    _check_monotone(counts)
    sweep = SweepSpec("n_superpixels", list(counts))
    for count in counts:
        run_cfg = cfg.with_(n_superpixels=int(count))
        sweep.results.append(_evaluate(frame, run_complete(frame, run_cfg, seed), run_cfg, crop))
    return sweep


def run_subsample_sweep(frame: Frame, cfg: RunConfig, fractions, seed: int = 0, crop=None) -> SweepSpec:
    _check_monotone(fractions)
    sweep = SweepSpec("subsample_fraction", list(fractions))
    seg = None
    for fraction in fractions:
        run_cfg = cfg.with_(subsample_fraction=float(fraction))
        if seg is None:
            seg = superpixel.slic_segment(frame.image, cfg.n_superpixels, cfg.compactness)
        sweep.results.append(_evaluate(frame, run_complete(frame, run_cfg, seed, segmentation=seg), run_cfg, crop))
    return sweep


ABLATION_SETS = ("I", "II", "III")


def ablation_configs(cfg: RunConfig) -> dict[str, RunConfig]:
    """Colour only, then + surface normals, then + depth."""
    if min(cfg.beta, cfg.gamma, cfg.delta) <= 0:
        raise ValidationError("ablation needs beta, gamma and delta all positive")
    return {
        "I": cfg.with_(gamma=0.0, delta=0.0),
        "II": cfg.with_(delta=0.0),
        "III": cfg,
    }


def run_ablation(frame: Frame, cfg: RunConfig, seed: int = 0, crop=None) -> SweepSpec:
    sweep = SweepSpec("potential_set", list(ABLATION_SETS))
    seg = superpixel.slic_segment(frame.image, cfg.n_superpixels, cfg.compactness)
    for name, run_cfg in ablation_configs(cfg).items():
        sweep.results.append(_evaluate(frame, run_complete(frame, run_cfg, seed, segmentation=seg), run_cfg, crop))
    return sweep


def _check_monotone(values) -> None:
    values = list(values)
    if not values:
        raise ValidationError("sweep needs at least one value")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError("sweep values must be strictly increasing")


def back_project(depth: np.ndarray, valid: np.ndarray, calib: io.CalibrationSet) -> tuple[np.ndarray, np.ndarray]:
    """Rectified-frame 3D points for valid pixels, sampled at pixel centres."""
    rows, cols = np.nonzero(valid)
    z = depth[rows, cols]
    pix = np.column_stack([(cols + 0.5) * z, (rows + 0.5) * z, z])
    rhs = pix - calib.p_rect[:, 3]
    pts = np.linalg.solve(calib.p_rect[:, :3], rhs.T).T
    return pts, np.column_stack([rows, cols])


def export_point_cloud(depth: io.DepthImage, calib: io.CalibrationSet, image: io.RgbImage | None = None) -> str:
    pts, rc = back_project(depth.depth, depth.valid, calib)
    if image is None:
        rgb = np.zeros((len(pts), 3), dtype=np.int64)
    else:
        rgb = image.pixels[rc[:, 0], rc[:, 1]].astype(np.int64)
    return "".join(f"{x!r} {y!r} {z!r} {r} {g} {b}\n"
                   for (x, y, z), (r, g, b) in zip(pts.tolist(), rgb.tolist()))


def colorize(depth: np.ndarray, cap: float) -> np.ndarray:
    """Jet-like preview scaled to the farthest depth (at most ``cap``): near is blue, far is red."""
    top = min(cap, float(depth.max(initial=0.0))) or 1.0
    t = np.clip(depth / top, 0.0, 1.0)
    anchors = np.array([0.0, 0.125, 0.375, 0.625, 0.875, 1.0])
    channels = (
        [0.0, 0.0, 0.0, 1.0, 1.0, 0.5],
        [0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
        [0.5, 1.0, 1.0, 0.0, 0.0, 0.0],
    )
    rgb = np.stack([np.interp(t, anchors, c) for c in channels], axis=-1)
    return np.rint(rgb * 255).astype(np.uint8)


def write_outputs(completion: Completion, out_dir: Path, frame_id: str, cap: float) -> dict[str, Path]:
    out_dir = Path(out_dir)
    paths = {
        "depth": out_dir / f"{frame_id}_depth.png",
        "uncertainty": out_dir / f"{frame_id}_uncertainty.png",
        "preview": out_dir / f"{frame_id}_preview.png",
    }
    io.atomic_write(paths["depth"], io.write_depth_png(completion.depth_image()))
    unc = np.rint(255.0 * completion.uncertainty.values).astype(np.uint8)
    io.atomic_write(paths["uncertainty"], io.write_gray_png(unc))
    io.atomic_write(paths["preview"], io.write_rgb(io.RgbImage(colorize(completion.depth.depth, cap))))
    return paths
