import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import block_image
from crfdepth.errors import ValidationError
from crfdepth.io import RgbImage
from crfdepth.superpixel import (build_graph, build_raw_adjacency, segmentation_from_labels,
                                 select_four_neighbors, slic_segment)


def voronoi_labels(h, w, n, seed):
    rng = np.random.default_rng(seed)
    seeds = rng.uniform([0, 0], [h, w], size=(n, 2))
    rr, cc = np.mgrid[0:h, 0:w]
    d = (rr[..., None] - seeds[:, 0]) ** 2 + (cc[..., None] - seeds[:, 1]) ** 2
    _, lab = np.unique(np.argmin(d, axis=2), return_inverse=True)
    return lab.reshape(h, w)


def test_uniform_image_gives_regular_grid():
    img = RgbImage(np.full((100, 100, 3), 128, dtype=np.uint8))
    seg = slic_segment(img, 100)
    assert seg.n_segments == 100
    assert np.all((seg.pixel_count >= 80) & (seg.pixel_count <= 125))
    expected = np.array([(4.5 + 10 * r, 4.5 + 10 * c) for r in range(10) for c in range(10)])
    got = seg.centroids[np.lexsort((seg.centroids[:, 1], seg.centroids[:, 0]))]
    assert np.max(np.abs(got - expected)) < 2.0


def test_two_colour_halves_split_on_the_edge():
    px = np.zeros((40, 60, 3), dtype=np.uint8)
    px[:, :30] = (200, 30, 30)
    px[:, 30:] = (20, 40, 220)
    seg = slic_segment(RgbImage(px), 2)
    assert seg.n_segments == 2
    left, right = seg.labels[:, :30], seg.labels[:, 30:]
    assert len(np.unique(left)) == 1 and len(np.unique(right)) == 1
    assert left[0, 0] != right[0, 0]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_segmentation_contract_on_noise(seed):
    rng = np.random.default_rng(seed)
    img = RgbImage(rng.integers(0, 256, size=(48, 64, 3)).astype(np.uint8))
    seg = slic_segment(img, 60)
    _check_segmentation(seg, img, 60)


def _check_segmentation(seg, img, requested):
    h, w = seg.labels.shape
    assert seg.labels.min() == 0 and seg.labels.max() == seg.n_segments - 1
    assert seg.pixel_count.sum() == h * w and np.all(seg.pixel_count >= 1)
    assert 0.5 * requested <= seg.n_segments <= 2 * requested
    rr, cc = np.mgrid[0:h, 0:w]
    for s in range(seg.n_segments):
        mask = seg.labels == s
        assert abs(rr[mask].mean() - seg.centroids[s, 0]) < 1e-9
        assert abs(cc[mask].mean() - seg.centroids[s, 1]) < 1e-9
        np.testing.assert_allclose(img.pixels[mask].mean(axis=0), seg.mean_color[s], atol=1e-9)
    from scipy.ndimage import label as cc_label
    for s in range(seg.n_segments):
        _, ncomp = cc_label(seg.labels == s)
        assert ncomp == 1


def test_slic_is_deterministic(scene):
    a = slic_segment(scene.image, 300)
    b = slic_segment(scene.image, 300)
    assert np.array_equal(a.labels, b.labels)


def test_slic_validation():
    with pytest.raises(ValidationError):
        slic_segment(RgbImage(np.zeros((1, 5, 3), np.uint8)), 2)
    with pytest.raises(ValidationError):
        slic_segment(RgbImage(np.zeros((8, 8, 3), np.uint8)), 17)


def test_adjacency_of_two_blocks():
    img, lab = block_image(1, 2)
    assert build_raw_adjacency(segmentation_from_labels(lab, img)) == [{1}, {0}]


def test_centre_block_has_four_neighbours():
    img, lab = block_image(3, 3)
    adj = build_raw_adjacency(segmentation_from_labels(lab, img))
    assert adj[4] == {1, 3, 5, 7}
    assert adj[0] == {1, 3}


def _pixel_scan_adjacency(labels, n):
    h, w = labels.shape
    adj = [set() for _ in range(n)]
    for r in range(h):
        for c in range(w):
            for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and labels[rr, cc] != labels[r, c]:
                    adj[labels[r, c]].add(int(labels[rr, cc]))
    return adj


@pytest.mark.parametrize("seed", range(4))
def test_adjacency_matches_pixel_scan(seed):
    lab = voronoi_labels(30, 40, 25, seed)
    img = RgbImage(np.zeros((30, 40, 3), np.uint8))
    seg = segmentation_from_labels(lab, img)
    assert build_raw_adjacency(seg) == _pixel_scan_adjacency(lab, seg.n_segments)


def test_block_grid_slots_are_grid_neighbours():
    img, lab = block_image(4, 5)
    g = build_graph(segmentation_from_labels(lab, img))
    for r in range(1, 3):
        for c in range(1, 4):
            k = r * 5 + c
            assert g.neighbors(k) == {"right": k + 1, "up": k - 5, "left": k - 1, "down": k + 5}
    expected = {(r * 5 + c, r * 5 + c + 1) for r in range(4) for c in range(4)}
    expected |= {(r * 5 + c, (r + 1) * 5 + c) for r in range(3) for c in range(5)}
    assert set(map(tuple, g.edges.tolist())) == expected


def test_corner_block_fills_two_slots():
    img, lab = block_image(3, 3)
    g = build_graph(segmentation_from_labels(lab, img))
    assert g.neighbors(0) == {"right": 1, "down": 3}
    assert len(g.neighbors(1)) == 3


def _greedy_oracle(centroids, i, cands):
    """Scan all remaining (slot, candidate) pairs for the minimum each round."""
    def err(j, s):
        z = complex(centroids[j, 1] - centroids[i, 1], -(centroids[j, 0] - centroids[i, 0]))
        ang = math.degrees(math.atan2(z.imag, z.real))
        d = abs(ang - 90.0 * s) % 360.0
        return min(d, 360.0 - d)

    slots = [-1] * 4
    free_c, free_s = set(cands), {0, 1, 2, 3}
    while free_c and free_s:
        best = min((err(j, s), j, s) for j in free_c for s in free_s)
        slots[best[2]] = best[1]
        free_c.discard(best[1])
        free_s.discard(best[2])
    return slots


@pytest.mark.parametrize("seed", range(5))
def test_slot_assignment_matches_brute_force(seed):
    lab = voronoi_labels(40, 50, 30, seed)
    seg = segmentation_from_labels(lab, RgbImage(np.zeros((40, 50, 3), np.uint8)))
    rng = np.random.default_rng(seed)
    n = seg.n_segments
    adjacency = [set(int(j) for j in rng.choice([k for k in range(n) if k != i], size=6, replace=False))
                 for i in range(n)]
    g = select_four_neighbors(seg, adjacency)
    for i in range(n):
        assert g.slots[i].tolist() == _greedy_oracle(seg.centroids, i, adjacency[i])


def test_isolated_node_keeps_empty_slots():
    img, lab = block_image(1, 2)
    seg = segmentation_from_labels(lab, img)
    g = select_four_neighbors(seg, [set(), set()])
    assert np.all(g.slots == -1) and len(g.edges) == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 40))
def test_graph_properties(seed, n):
    lab = voronoi_labels(24, 32, n, seed)
    seg = segmentation_from_labels(lab, RgbImage(np.zeros((24, 32, 3), np.uint8)))
    adj = build_raw_adjacency(seg)
    g = select_four_neighbors(seg, adj)
    filled = g.slots >= 0
    assert np.all(filled.sum(axis=1) <= 4)
    for i in range(seg.n_segments):
        row = g.slots[i][filled[i]]
        assert len(set(row.tolist())) == len(row)
    for a, b in g.edges.tolist():
        assert a < b and b in adj[a]
        assert b in g.slots[a] or a in g.slots[b]
    assert len(g.edges) <= 4 * seg.n_segments
    assert len({tuple(e) for e in g.edges.tolist()}) == len(g.edges)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 60))
def test_slic_partition_property(seed, n):
    rng = np.random.default_rng(seed)
    img = RgbImage(rng.integers(0, 256, size=(30, 40, 3)).astype(np.uint8))
    seg = slic_segment(img, n)
    assert seg.pixel_count.sum() == 1200
    assert set(np.unique(seg.labels).tolist()) == set(range(seg.n_segments))
