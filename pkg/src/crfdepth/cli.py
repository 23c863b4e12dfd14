"""Command line entry point: ``crfdepth <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import geometry, io, metrics, pipeline, superpixel, synthetic
from .config import RunConfig, load_config
from .errors import CrfDepthError

DATA_ROOT_ENV = "CRFDEPTH_DATA_ROOT"

log = logging.getLogger("crfdepth")


def _data_path(value: str | None) -> Path | None:
    """Resolve a data path, falling back to $CRFDEPTH_DATA_ROOT for relative names."""
    if value is None:
        return None
    path = Path(value)
    root = os.environ.get(DATA_ROOT_ENV)
    if not path.exists() and not path.is_absolute() and root:
        return Path(root) / path
    return path


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _crop(text: str | None):
    if text is None:
        return None
    parts = _int_list(text)
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("crop must be top,bottom,left,right")
    return tuple(parts)


def _add_frame_args(p: argparse.ArgumentParser, gt: bool = True) -> None:
    p.add_argument("--image", required=True, help="RGB image (PNG)")
    p.add_argument("--cloud", required=True, help="velodyne scan, float32 x y z reflectance")
    p.add_argument("--calib", nargs="+", required=True,
                   help="calibration text files (calib_cam_to_cam.txt calib_velo_to_cam.txt)")
    p.add_argument("--camera", default="02", help="suffix of the P_rect_XX key to project with")
    p.add_argument("--frame-id", default=None)
    if gt:
        p.add_argument("--gt", default=None, help="ground-truth 16-bit depth PNG")


def _bundle(args) -> pipeline.FrameBundle:
    image = _data_path(args.image)
    return pipeline.FrameBundle(
        image=image,
        cloud=_data_path(args.cloud),
        calib=tuple(_data_path(c) for c in args.calib),
        ground_truth=_data_path(getattr(args, "gt", None)),
        frame_id=args.frame_id or image.stem,
        camera=args.camera,
    )


def _config(args) -> RunConfig:
    if args.config is None:
        return RunConfig()
    return load_config(Path(args.config).read_text())


def cmd_project(args, cfg):
    frame = _bundle(args).load()
    with pipeline.stage(frame.frame_id, "geometry"):
        pts = geometry.project_points(frame.cloud, frame.calib, frame.image.width, frame.image.height)
    sparse = np.zeros((frame.image.height, frame.image.width))
    # nearest return wins where several land on one pixel
    order = np.argsort(-pts.depth, kind="stable")
    sparse[pts.pixel_rows[order], pts.pixel_cols[order]] = pts.depth[order]
    out = args.out / f"{frame.frame_id}_sparse.png"
    io.atomic_write(out, io.write_depth_png(io.DepthImage(np.minimum(sparse, cfg.depth_cap))))
    print(f"{len(pts)} of {len(frame.cloud)} points in view -> {out}")


def cmd_segment(args, cfg):
    frame = _bundle(args).load()
    with pipeline.stage(frame.frame_id, "superpixel"):
        seg = superpixel.slic_segment(frame.image, cfg.n_superpixels, cfg.compactness)
        graph = superpixel.build_graph(seg)
    labels_path = args.out / f"{frame.frame_id}_labels.png"
    io.atomic_write(labels_path, _png_bytes(Image.fromarray(seg.labels.astype(np.uint16))))

    overlay = frame.image.pixels.copy()
    edge = np.zeros(seg.labels.shape, dtype=bool)
    edge[:, 1:] |= seg.labels[:, 1:] != seg.labels[:, :-1]
    edge[1:, :] |= seg.labels[1:, :] != seg.labels[:-1, :]
    overlay[edge] = (255, 255, 255)
    im = Image.fromarray(overlay)
    draw = ImageDraw.Draw(im)
    for i, j in graph.edges.tolist():
        (r0, c0), (r1, c1) = seg.centroids[i], seg.centroids[j]
        draw.line([(c0, r0), (c1, r1)], fill=(0, 160, 0))
    for r, c in seg.centroids.tolist():
        draw.point((c, r), fill=(255, 0, 0))
    overlay_path = args.out / f"{frame.frame_id}_overlay.png"
    io.atomic_write(overlay_path, _png_bytes(im))
    print(f"{seg.n_segments} segments, {len(graph.edges)} edges -> {labels_path}, {overlay_path}")


def _png_bytes(im: Image.Image) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def cmd_complete(args, cfg):
    frame = _bundle(args).load()
    result = pipeline.run_complete(frame, cfg, seed=args.seed, oracle=args.oracle)
    with pipeline.stage(frame.frame_id, "io"):
        paths = pipeline.write_outputs(result, args.out, frame.frame_id, cfg.depth_cap)
        if args.dump_system:
            io.atomic_write(args.out / f"{frame.frame_id}_system.txt", result.system.dump())
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    if frame.ground_truth is not None:
        with pipeline.stage(frame.frame_id, "metrics"):
            res = metrics.evaluate(result.depth_image(), frame.ground_truth, cap=cfg.depth_cap)
        print(res.record())


def cmd_eval(args, cfg):
    fid = Path(args.pred).stem
    with pipeline.stage(fid, "io"):
        pred = io.read_depth_png(_data_path(args.pred).read_bytes())
        gt = io.read_depth_png(_data_path(args.gt).read_bytes())
    with pipeline.stage(fid, "metrics"):
        res = metrics.evaluate(pred, gt, cap=args.cap if args.cap is not None else cfg.depth_cap,
                               crop=_crop(args.crop), rel_denominator=args.rel_denominator)
    if args.scale != 1.0:
        res = metrics.unit_scale(res, args.scale)
    print(res.record())
    if args.csv:
        path = Path(args.csv)
        body = metrics.csv_rows("frame", [(Path(args.pred).stem, res)])
        if path.exists():
            body = path.read_text() + body.split("\n", 1)[1]
        io.atomic_write(path, body)


def _write_sweep(args, sweep: pipeline.SweepSpec, name: str):
    text = metrics.csv_rows(sweep.parameter, sweep.rows())
    out = args.out / f"{name}.csv"
    io.atomic_write(out, text)
    sys.stdout.write(text)
    print(f"-> {out}")


def cmd_sweep_superpixels(args, cfg):
    frame = _bundle(args).load()
    sweep = pipeline.run_superpixel_sweep(frame, cfg, _int_list(args.counts), seed=args.seed, crop=_crop(args.crop))
    _write_sweep(args, sweep, f"{frame.frame_id}_sweep_superpixels")


def cmd_sweep_subsample(args, cfg):
    frame = _bundle(args).load()
    sweep = pipeline.run_subsample_sweep(frame, cfg, _float_list(args.fractions), seed=args.seed, crop=_crop(args.crop))
    _write_sweep(args, sweep, f"{frame.frame_id}_sweep_subsample")


def cmd_ablate(args, cfg):
    frame = _bundle(args).load()
    sweep = pipeline.run_ablation(frame, cfg, seed=args.seed, crop=_crop(args.crop))
    _write_sweep(args, sweep, f"{frame.frame_id}_ablation")


def cmd_export_cloud(args, cfg):
    with pipeline.stage(Path(args.depth).stem, "io"):
        depth = io.read_depth_png(_data_path(args.depth).read_bytes())
        calib = io.load_calibration(*[_data_path(c) for c in args.calib], camera=args.camera)
        image = io.read_rgb(_data_path(args.image).read_bytes()) if args.image else None
    out = args.out / f"{Path(args.depth).stem}_cloud.txt"
    io.atomic_write(out, pipeline.export_point_cloud(depth, calib, image))
    print(f"{int(depth.valid.sum())} points -> {out}")


def cmd_synth(args, cfg):
    scene = synthetic.make_scene(args.width, args.height, sample_fraction=args.fraction,
                                 range_noise=args.noise, seed=args.seed)
    bundle = synthetic.write_frame(scene, args.out, args.frame_id)
    print(f"wrote {bundle.frame_id} to {args.out} (config: {args.out / 'fixture.cfg'})")


def _global_args(p: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--config", default=default(None), help="key = value run configuration")
    p.add_argument("--seed", type=int, default=default(0), help="seed for point sub-sampling")
    p.add_argument("--oracle", action="store_true", default=default(False),
                   help="cross-check every solve against dense elimination")
    p.add_argument("--out", type=Path, default=default(Path(".")), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crfdepth", description="Superpixel CRF depth completion")
    _global_args(parser, suppress=False)
    # global flags are also accepted after the subcommand
    shared = argparse.ArgumentParser(add_help=False)
    _global_args(shared, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_parser = sub.add_parser

    def add_parser(name, **kw):
        return _add_parser(name, parents=[shared], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("project", help="project the scan into a sparse depth PNG")
    _add_frame_args(p, gt=False)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("segment", help="SLIC labels and neighbour-graph overlay")
    _add_frame_args(p, gt=False)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("complete", help="dense depth + uncertainty for one frame")
    _add_frame_args(p)
    p.add_argument("--dump-system", action="store_true", help="also write A and b as triplets")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("eval", help="score a depth PNG against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--cap", type=float, default=None)
    p.add_argument("--crop", default=None, help="top,bottom,left,right")
    p.add_argument("--rel-denominator", choices=("pred", "gt"), default="pred")
    p.add_argument("--scale", type=float, default=1.0, help="multiply RMSE/MAE, e.g. 1000 for mm")
    p.add_argument("--csv", default=None, help="append the result to this CSV")
    p.set_defaults(func=cmd_eval)

    for name, func, flag, default in (
        ("sweep-superpixels", cmd_sweep_superpixels, "--counts", "1200,2400,5500"),
        ("sweep-subsample", cmd_sweep_subsample, "--fractions", "0.1,0.4,1.0"),
    ):
        p = sub.add_parser(name)
        _add_frame_args(p)
        p.add_argument(flag, default=default)
        p.add_argument("--crop", default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="colour / +normal / +depth potential sets")
    _add_frame_args(p)
    p.add_argument("--crop", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-cloud", help="back-project a depth PNG to 'x y z r g b' lines")
    p.add_argument("--depth", required=True)
    p.add_argument("--calib", nargs="+", required=True)
    p.add_argument("--camera", default="02")
    p.add_argument("--image", default=None)
    p.set_defaults(func=cmd_export_cloud)

    p = sub.add_parser("synth", help="write the synthetic fixture frame")
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--frame-id", default="synthetic")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        args.func(args, cfg)
    except CrfDepthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
