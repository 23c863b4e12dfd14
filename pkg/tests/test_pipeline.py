import numpy as np
import pytest

from crfdepth import pipeline, synthetic
from crfdepth.crf import build_uncertainty_targets
from crfdepth.errors import SingularSystemError, ValidationError
from crfdepth.geometry import project_points
from crfdepth.io import CalibrationSet, DepthImage, RawPointCloud
from crfdepth.metrics import evaluate
from crfdepth.pipeline import Frame, PipelineError, run_complete

CFG = synthetic.FIXTURE_CONFIG


@pytest.fixture(scope="module")
def completion(fixture_frame):
    return run_complete(fixture_frame, CFG)


def test_completion_beats_nearest_neighbour(scene, completion):
    ours = evaluate(completion.depth_image(), scene.ground_truth).rmse
    nn = evaluate(synthetic.nearest_neighbor_fill(scene.cloud, scene.calib, 320, 240), scene.ground_truth).rmse
    assert ours < nn


def test_depth_is_painted_per_superpixel(completion):
    seg = completion.segmentation
    x = np.clip(completion.depth.node_values, 1 / 256, CFG.depth_cap)
    assert np.array_equal(completion.depth.depth, x[seg.labels])
    assert np.all(completion.uncertainty.values >= 0) and np.all(completion.uncertainty.values <= 1)


def test_uncertainty_tracks_point_density(completion):
    targets = build_uncertainty_targets(completion.observations)
    nodes = completion.uncertainty.node_values
    assert np.corrcoef(targets, nodes)[0, 1] > 0.5


def test_run_is_deterministic(fixture_frame, completion):
    again = run_complete(fixture_frame, CFG)
    assert np.array_equal(again.depth.depth, completion.depth.depth)
    assert np.array_equal(again.uncertainty.values, completion.uncertainty.values)


def test_unary_only_reproduces_medians(scene):
    # dense sampling so every superpixel holds returns
    dense = synthetic.make_scene(sample_fraction=0.5, seed=2)
    cfg = CFG.with_(n_superpixels=300, beta=0.0, gamma=0.0, delta=0.0)
    out = run_complete(Frame(dense.image, dense.cloud, dense.calib, dense.ground_truth, "dense"), cfg)
    obs = out.observations
    assert np.all(obs.point_count > 0)
    np.testing.assert_allclose(out.depth.node_values, obs.observed_depth, rtol=0, atol=1e-9)
    np.testing.assert_allclose(out.depth.depth, obs.observed_depth[out.segmentation.labels], atol=1e-9)


def test_no_points_in_view_is_singular(scene):
    behind = RawPointCloud(np.array([[-5.0, 0.0, 0.0], [-8.0, 1.0, 0.5]]))
    frame = Frame(scene.image, behind, scene.calib, None, "empty")
    with pytest.raises(PipelineError) as info:
        run_complete(frame, CFG)
    assert isinstance(info.value.cause, SingularSystemError)
    assert str(info.value).startswith("frame empty: crf:")


def test_oracle_cross_check_passes(fixture_frame):
    run_complete(fixture_frame, CFG.with_(n_superpixels=300), oracle=True)


def test_subsample_is_seeded(scene):
    a = pipeline.subsample_cloud(scene.cloud, 0.4, seed=3)
    b = pipeline.subsample_cloud(scene.cloud, 0.4, seed=3)
    c = pipeline.subsample_cloud(scene.cloud, 0.4, seed=4)
    assert np.array_equal(a.points, b.points) and not np.array_equal(a.points, c.points)
    assert len(a) == round(0.4 * len(scene.cloud))
    assert pipeline.subsample_cloud(scene.cloud, 1.0, 0) is scene.cloud


def test_full_fraction_sweep_equals_plain_run(fixture_frame, completion):
    sweep = pipeline.run_subsample_sweep(fixture_frame, CFG, [1.0])
    direct = evaluate(completion.depth_image(), fixture_frame.ground_truth)
    assert sweep.results == [direct]


def test_single_count_sweep_equals_plain_run(fixture_frame, completion):
    sweep = pipeline.run_superpixel_sweep(fixture_frame, CFG, [800])
    assert sweep.results == [evaluate(completion.depth_image(), fixture_frame.ground_truth)]
    assert sweep.values == [800] and sweep.parameter == "n_superpixels"


def test_more_superpixels_do_not_hurt(fixture_frame):
    rmse = pipeline.run_superpixel_sweep(fixture_frame, CFG, [1200, 5500]).rmse()
    assert rmse[1] <= rmse[0]


def test_denser_points_do_not_hurt(fixture_frame):
    rmse = pipeline.run_subsample_sweep(fixture_frame, CFG, [0.4, 1.0]).rmse()
    assert rmse[1] <= rmse[0]


def test_ablation_order_and_configs(fixture_frame):
    sweep = pipeline.run_ablation(fixture_frame, CFG)
    assert sweep.values == ["I", "II", "III"] and len(sweep.results) == 3
    assert sweep.rmse()[2] <= sweep.rmse()[0]
    cfgs = pipeline.ablation_configs(CFG)
    assert (cfgs["I"].gamma, cfgs["I"].delta, cfgs["II"].delta) == (0.0, 0.0, 0.0)
    assert cfgs["III"] == CFG


def test_unary_only_on_sparse_frame_is_singular(fixture_frame):
    # with no pairwise terms an unobserved superpixel has nothing tying it down
    with pytest.raises(PipelineError) as info:
        run_complete(fixture_frame, CFG.with_(beta=0.0, gamma=0.0, delta=0.0))
    cause = info.value.cause
    assert isinstance(cause, SingularSystemError)
    assert info.value.module == "solver"


def test_sweep_values_must_increase(fixture_frame):
    with pytest.raises(ValidationError):
        pipeline.run_superpixel_sweep(fixture_frame, CFG, [800, 300])


def test_sweep_needs_ground_truth(scene):
    with pytest.raises(ValidationError):
        pipeline.run_superpixel_sweep(Frame(scene.image, scene.cloud, scene.calib, None, "x"), CFG, [300])


def test_back_projection_of_principal_point():
    calib = CalibrationSet.identity(cu=2.5, cv=1.5)
    depth = np.zeros((3, 5))
    depth[1, 2] = 5.0
    text = pipeline.export_point_cloud(DepthImage(depth), calib)
    assert text == "0.0 0.0 5.0 0 0 0\n"


def test_empty_mask_exports_nothing():
    assert pipeline.export_point_cloud(DepthImage(np.zeros((4, 4))), CalibrationSet.identity()) == ""


def test_export_round_trips_through_projection(scene, completion):
    text = pipeline.export_point_cloud(completion.depth_image(), scene.calib, scene.image)
    rows = np.array([line.split() for line in text.splitlines()], dtype=np.float64)
    assert len(rows) == 320 * 240
    rect = rows[:, :3]
    velo = (np.hstack([rect, np.ones((len(rect), 1))]) @ np.linalg.inv(scene.calib.velo_to_rect).T)[:, :3]
    pts = project_points(RawPointCloud(velo), scene.calib, 320, 240)
    assert len(pts) == len(rows)
    r, c = np.divmod(np.arange(320 * 240), 320)
    np.testing.assert_allclose(pts.u, c + 0.5, atol=1e-6)
    np.testing.assert_allclose(pts.v, r + 0.5, atol=1e-6)
    np.testing.assert_allclose(pts.depth, completion.depth_image().depth.ravel(), atol=1e-6)
    assert np.array_equal(rows[:, 3:].astype(np.uint8), scene.image.pixels.reshape(-1, 3))


def test_write_outputs(tmp_path, completion):
    paths = pipeline.write_outputs(completion, tmp_path, "f", CFG.depth_cap)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["f_depth.png", "f_preview.png", "f_uncertainty.png"]
    from PIL import Image

    unc = np.asarray(Image.open(paths["uncertainty"]))
    assert unc.dtype == np.uint8
    assert np.array_equal(unc, np.rint(255 * completion.uncertainty.values).astype(np.uint8))


def test_fixture_bundle_round_trip(tmp_path, scene):
    bundle = synthetic.write_frame(scene, tmp_path, "fx")
    frame = bundle.load()
    assert np.array_equal(frame.image.pixels, scene.image.pixels)
    assert np.array_equal(frame.cloud.points, scene.cloud.points)
    np.testing.assert_allclose(frame.calib.full_projection, scene.calib.full_projection, rtol=1e-12)
    assert np.max(np.abs(frame.ground_truth.depth - scene.ground_truth.depth)) <= 0.5 / 256


def test_missing_file_names_frame_and_module(tmp_path, scene):
    bundle = synthetic.write_frame(scene, tmp_path, "fx")
    bundle.cloud = tmp_path / "nope.bin"
    with pytest.raises(PipelineError, match="frame fx: io:"):
        bundle.load()
