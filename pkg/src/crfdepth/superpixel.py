"""SLIC superpixels and the four-neighbour graph built on top of them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage.color import rgb2lab

from . import _backend
from .errors import ValidationError
from .io import RgbImage

SLIC_ITERATIONS = 10

# slot order: right, up, left, down (0, 90, 180, 270 degrees, counterclockwise on screen)
SLOT_ANGLES = (0.0, 90.0, 180.0, 270.0)
SLOT_NAMES = ("right", "up", "left", "down")


@dataclass
class SuperpixelSegmentation:
    labels: np.ndarray  # (H, W) int64
    n_segments: int
    centroids: np.ndarray  # (n, 2) row, col
    mean_color: np.ndarray  # (n, 3) RGB, 0..255
    pixel_count: np.ndarray  # (n,)


@dataclass
class FourNeighborGraph:
    n_nodes: int
    slots: np.ndarray  # (n, 4) neighbour id per slot, -1 when empty
    edges: np.ndarray  # (E, 2) with edges[:, 0] < edges[:, 1], sorted

    def neighbors(self, node: int) -> dict[str, int]:
        return {SLOT_NAMES[s]: int(j) for s, j in enumerate(self.slots[node]) if j >= 0}


def segment_statistics(labels: np.ndarray, pixels: np.ndarray, n: int):
    """Centroids, mean RGB and pixel counts per label."""
    h, w = labels.shape
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n).astype(np.float64)
    rows, cols = np.divmod(np.arange(h * w), w)
    cent = np.stack([np.bincount(flat, rows, n), np.bincount(flat, cols, n)], axis=1) / counts[:, None]
    rgb = pixels.reshape(-1, 3).astype(np.float64)
    color = np.stack([np.bincount(flat, rgb[:, c], n) for c in range(3)], axis=1) / counts[:, None]
    return cent, color, counts.astype(np.int64)


def _grid_seeds(h: int, w: int, n: int) -> np.ndarray:
    # the longer side gets the ceiling so that tiny counts still split along it
    if w >= h:
        n_cols = min(w, max(1, math.ceil(math.sqrt(n * w / h))))
        n_rows = min(h, max(1, round(n / n_cols)))
    else:
        n_rows = min(h, max(1, math.ceil(math.sqrt(n * h / w))))
        n_cols = min(w, max(1, round(n / n_rows)))
    ys = (np.arange(n_rows) + 0.5) * (h / n_rows)
    xs = (np.arange(n_cols) + 0.5) * (w / n_cols)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


def _search_bounds(centers: np.ndarray, step: float, h: int, w: int) -> np.ndarray:
    cy, cx = centers[:, 3], centers[:, 4]
    bounds = np.stack([
        np.floor(cy - step), np.floor(cy + step) + 1,
        np.floor(cx - step), np.floor(cx + step) + 1,
    ], axis=1).astype(np.int64)
    bounds[:, 0:2] = np.clip(bounds[:, 0:2], 0, h)
    bounds[:, 2:4] = np.clip(bounds[:, 2:4], 0, w)
    return np.ascontiguousarray(bounds)


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Keep each label's largest 4-connected piece; merge the rest.

    Orphan pieces join the largest (by current pixel count) adjacent
    segment, lowest id on ties. Orphans touching only other orphans wait
    for a later round.
    """
    comp, n_comp = _backend.label_components(np.ascontiguousarray(labels, dtype=np.int64))
    comp_label = np.zeros(n_comp, dtype=np.int64)
    comp_label[comp.ravel()] = labels.ravel()
    size = np.bincount(comp.ravel(), minlength=n_comp)

    # main piece per label: largest, earliest in raster order on ties (ids are raster ordered)
    order = np.lexsort((np.arange(n_comp), -size, comp_label))
    first = np.ones(n_comp, dtype=bool)
    first[1:] = comp_label[order][1:] != comp_label[order][:-1]
    main = np.zeros(n_comp, dtype=bool)
    main[order[first]] = True
    if main.all():
        return comp

    a = np.concatenate([comp[:, :-1].ravel(), comp[:-1, :].ravel()])
    b = np.concatenate([comp[:, 1:].ravel(), comp[1:, :].ravel()])
    diff = a != b
    pairs = np.unique(np.stack([np.concatenate([a[diff], b[diff]]), np.concatenate([b[diff], a[diff]])], axis=1), axis=0)
    adjacency = {}
    for x, y in pairs:
        adjacency.setdefault(int(x), []).append(int(y))

    owner = np.arange(n_comp)  # component -> absorbing main component
    seg_size = size.astype(np.int64).copy()
    pending = [int(c) for c in np.flatnonzero(~main)]
    while pending:
        remaining = []
        for c in pending:
            best = -1
            for nb in adjacency.get(c, ()):
                o = owner[nb]
                if not main[o]:
                    continue
                if best < 0 or seg_size[o] > seg_size[best] or (seg_size[o] == seg_size[best] and o < best):
                    best = o
            if best < 0:
                remaining.append(c)
                continue
            owner[c] = best
            seg_size[best] += size[c]
        if len(remaining) == len(pending):
            raise RuntimeError("connectivity enforcement stalled")
        pending = remaining
    return owner[comp]


def slic_segment(image: RgbImage, n_superpixels: int, compactness: float = 10.0,
                 iterations: int = SLIC_ITERATIONS) -> SuperpixelSegmentation:
    """Cluster pixels in joint CIELAB + position space.

    Distance is ``sqrt(d_lab**2 + (d_xy / s)**2 * m**2)`` with grid step
    ``s = sqrt(W*H/n)`` and ``m = compactness``; each center only searches
    a 2s x 2s window. Labels are renumbered 0..n-1 after connectivity
    enforcement.
    """
    h, w = image.height, image.width
    if h < 2 or w < 2:
        raise ValidationError("image must be at least 2x2")
    if n_superpixels < 2 or n_superpixels > h * w // 4:
        raise ValidationError(f"n_superpixels must lie in [2, {h * w // 4}], got {n_superpixels}")
    if compactness <= 0:
        raise ValidationError("compactness must be positive")

    lab = np.ascontiguousarray(rgb2lab(image.pixels), dtype=np.float64)
    step = math.sqrt(h * w / n_superpixels)
    ratio = (compactness / step) ** 2

    seeds = _grid_seeds(h, w, n_superpixels)
    iy = np.minimum(seeds[:, 0].astype(np.int64), h - 1)
    ix = np.minimum(seeds[:, 1].astype(np.int64), w - 1)
    centers = np.ascontiguousarray(np.hstack([lab[iy, ix], seeds]))
    k = len(centers)

    labels = np.zeros((h, w), dtype=np.int64)
    rows, cols = np.divmod(np.arange(h * w, dtype=np.float64), w)
    flat_lab = lab.reshape(-1, 3)
    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        _backend.slic_assign(lab, centers, _search_bounds(centers, step, h, w), ratio, labels, dist)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        filled = counts > 0
        sums = np.stack([np.bincount(flat, flat_lab[:, 0], k), np.bincount(flat, flat_lab[:, 1], k),
                         np.bincount(flat, flat_lab[:, 2], k), np.bincount(flat, rows, k),
                         np.bincount(flat, cols, k)], axis=1)
        centers[filled] = sums[filled] / counts[filled, None]
        centers = np.ascontiguousarray(centers)

    merged = _enforce_connectivity(labels)
    _, final = np.unique(merged, return_inverse=True)
    final = final.reshape(h, w).astype(np.int64)
    n = int(final.max()) + 1
    cent, color, counts = segment_statistics(final, image.pixels, n)
    return SuperpixelSegmentation(final, n, cent, color, counts)


def segmentation_from_labels(labels: np.ndarray, image: RgbImage) -> SuperpixelSegmentation:
    """Wrap an existing label map (ids 0..n-1, all present)."""
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    n = int(labels.max()) + 1
    cent, color, counts = segment_statistics(labels, image.pixels, n)
    if np.any(counts == 0):
        raise ValidationError("label ids must be contiguous")
    return SuperpixelSegmentation(labels, n, cent, color, counts)


def build_raw_adjacency(seg: SuperpixelSegmentation) -> list[set[int]]:
    """Neighbour sets: a and b touch iff some pixel pair across them is 4-adjacent."""
    lab = seg.labels
    a = np.concatenate([lab[:, :-1].ravel(), lab[:-1, :].ravel()])
    b = np.concatenate([lab[:, 1:].ravel(), lab[1:, :].ravel()])
    diff = a != b
    pairs = np.unique(np.stack([np.minimum(a[diff], b[diff]), np.maximum(a[diff], b[diff])], axis=1), axis=0)
    adjacency = [set() for _ in range(seg.n_segments)]
    for i, j in pairs.tolist():
        adjacency[i].add(j)
        adjacency[j].add(i)
    return adjacency


def _angular_error(angle: float, target: float) -> float:
    d = abs(angle - target) % 360.0
    return min(d, 360.0 - d)


def select_four_neighbors(seg: SuperpixelSegmentation, adjacency: list[set[int]]) -> FourNeighborGraph:
    """Pick, per node, the raw neighbours closest in angle to 0/90/180/270 degrees.

    Angles run counterclockwise on screen from +x (so 90 degrees is up,
    toward smaller row). Slots are filled greedily by increasing angular
    error; a candidate fills at most one slot. Ties: lower candidate id,
    then lower slot index.
    """
    n = seg.n_segments
    slots = np.full((n, 4), -1, dtype=np.int64)
    cent = seg.centroids
    for i in range(n):
        cands = sorted(adjacency[i])
        if not cands:
            continue
        options = []
        for j in cands:
            d_row = cent[j, 0] - cent[i, 0]
            d_col = cent[j, 1] - cent[i, 1]
            angle = math.degrees(math.atan2(-d_row, d_col)) % 360.0
            for s, target in enumerate(SLOT_ANGLES):
                options.append((_angular_error(angle, target), j, s))
        options.sort()
        used = set()
        for _, j, s in options:
            if slots[i, s] >= 0 or j in used:
                continue
            slots[i, s] = j
            used.add(j)

    edge_set = set()
    for i in range(n):
        for j in slots[i]:
            if j >= 0:
                edge_set.add((min(i, int(j)), max(i, int(j))))
    edges = np.array(sorted(edge_set), dtype=np.int64).reshape(-1, 2)
    return FourNeighborGraph(n, slots, edges)


def build_graph(seg: SuperpixelSegmentation) -> FourNeighborGraph:
    return select_four_neighbors(seg, build_raw_adjacency(seg))
