import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from crfdepth import io
from crfdepth.errors import FormatError
from crfdepth.geometry import transform_to_camera

IDENTITY_TEXT = """P_rect_02: 1 0 0 0 0 1 0 0 0 0 1 0
R_rect_00: 1 0 0 0 1 0 0 0 1
R: 1 0 0 0 1 0 0 0 1
T: 0 0 0
"""


def test_identity_calibration_projects_axis_point_to_origin():
    calib = io.parse_calibration(IDENTITY_TEXT)
    cam = transform_to_camera(io.RawPointCloud(np.array([[0.0, 0.0, 1.0]])), calib)
    assert cam[0, 0] / cam[0, 2] == 0.0
    assert cam[0, 1] / cam[0, 2] == 0.0


def test_kitti_calibration_matches_raw_reshape(kitti_calib_text):
    calib = io.parse_calibration(kitti_calib_text)
    # throwaway reshaping of the raw numbers
    raw = {}
    for line in kitti_calib_text.splitlines():
        key, _, rest = line.partition(":")
        raw[key] = rest.split()
    p = np.array([float(v) for v in raw["P_rect_02"]]).reshape(3, 4)
    r = np.array([float(v) for v in raw["R_rect_00"]]).reshape(3, 3)
    rot = np.array([float(v) for v in raw["R"]]).reshape(3, 3)
    t = np.array([float(v) for v in raw["T"]])
    assert np.array_equal(calib.p_rect, p)
    assert np.array_equal(calib.r_rect[:3, :3], r)
    assert np.array_equal(calib.r_rect[3], [0, 0, 0, 1]) and np.array_equal(calib.r_rect[:3, 3], [0, 0, 0])
    assert np.array_equal(calib.t_velo_cam[:3, :3], rot)
    assert np.array_equal(calib.t_velo_cam[:3, 3], t)
    assert np.array_equal(calib.t_velo_cam[3], [0, 0, 0, 1])
    calib.check()


def test_camera_key_selects_projection(kitti_calib_text):
    p3 = io.parse_calibration(kitti_calib_text, camera="03").p_rect
    assert p3[0, 3] == pytest.approx(-3.395242e02)


def test_missing_rect_key_names_it(kitti_calib_text):
    text = "\n".join(l for l in kitti_calib_text.splitlines() if not l.startswith("R_rect_00"))
    with pytest.raises(FormatError, match="R_rect_00"):
        io.parse_calibration(text)


def test_non_numeric_token_reports_line():
    text = IDENTITY_TEXT.replace("T: 0 0 0", "T: 0 zero 0")
    with pytest.raises(FormatError, match="line 4"):
        io.parse_calibration(text)


def test_calibration_is_line_order_insensitive(kitti_calib_text):
    lines = kitti_calib_text.splitlines()
    a = io.parse_calibration(kitti_calib_text)
    b = io.parse_calibration("\n".join(reversed(lines)))
    for m1, m2 in zip((a.p_rect, a.r_rect, a.t_velo_cam), (b.p_rect, b.r_rect, b.t_velo_cam)):
        assert np.array_equal(m1, m2)


def test_format_calibration_round_trips(kitti_calib_text):
    calib = io.parse_calibration(kitti_calib_text)
    cam, velo = io.format_calibration(calib)
    again = io.parse_calibration(cam + velo)
    assert np.array_equal(again.full_projection, calib.full_projection)


def test_single_point_record():
    cloud = io.read_point_cloud(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
    assert cloud.points.tolist() == [[1.0, 2.0, 3.0]]
    assert cloud.reflectance.tolist() == [0.5]


def test_empty_point_stream():
    assert len(io.read_point_cloud(b"")) == 0


def test_truncated_point_stream():
    with pytest.raises(FormatError):
        io.read_point_cloud(b"\x00" * 17)


def test_point_cloud_round_trip(rng):
    pts = rng.normal(size=(50, 3)).astype(np.float32).astype(np.float64)
    refl = rng.uniform(size=50).astype(np.float32).astype(np.float64)
    back = io.read_point_cloud(io.write_point_cloud(io.RawPointCloud(pts, refl)))
    assert np.array_equal(back.points, pts)
    assert np.array_equal(back.reflectance, refl)


def _png16(values):
    import io as _io

    buf = _io.BytesIO()
    Image.fromarray(np.asarray(values, dtype=np.uint16)).save(buf, format="PNG")
    return buf.getvalue()


def test_depth_encoding_definition():
    img = io.read_depth_png(_png16([[25600, 0]]))
    assert img.depth[0, 0] == 100.0 and img.valid[0, 0]
    assert img.depth[0, 1] == 0.0 and not img.valid[0, 1]


def test_depth_png_rejects_8bit_and_rgb():
    import io as _io

    for arr in (np.zeros((4, 4), np.uint8), np.zeros((4, 4, 3), np.uint8)):
        buf = _io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        with pytest.raises(FormatError):
            io.read_depth_png(buf.getvalue())


def test_depth_png_file_round_trip_is_byte_identical(rng):
    raw = rng.integers(0, 80 * 256, size=(24, 31))
    raw[rng.uniform(size=raw.shape) < 0.3] = 0
    data = io.write_depth_png(io.DepthImage(raw / 256.0))
    assert io.write_depth_png(io.read_depth_png(data)) == data


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 80 * 256), min_size=1, max_size=60), st.integers(1, 6))
def test_depth_png_value_round_trip(values, width):
    arr = np.array(values + [0] * (-len(values) % width), dtype=np.float64).reshape(-1, width) / 256.0
    img = io.DepthImage(arr)
    back = io.read_depth_png(io.write_depth_png(img))
    assert np.array_equal(back.depth, img.depth)
    assert np.array_equal(back.valid, img.valid)


def test_rgb_round_trip(rng):
    img = io.RgbImage(rng.integers(0, 256, size=(7, 9, 3)).astype(np.uint8))
    assert np.array_equal(io.read_rgb(io.write_rgb(img)).pixels, img.pixels)


def test_atomic_write_replaces(tmp_path):
    target = tmp_path / "sub" / "out.txt"
    io.atomic_write(target, "one")
    io.atomic_write(target, b"two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]
