"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components


def slic_assign(lab, centers, bounds, ratio, labels, dist):
    for k in range(centers.shape[0]):
        y0, y1, x0, x1 = bounds[k]
        if y1 <= y0 or x1 <= x0:
            continue
        cl, ca, cb, cy, cx = centers[k]
        win = lab[y0:y1, x0:x1]
        dy = np.arange(y0, y1, dtype=np.float64)[:, None] - cy
        dx = np.arange(x0, x1, dtype=np.float64)[None, :] - cx
        dl = win[..., 0] - cl
        da = win[..., 1] - ca
        db = win[..., 2] - cb
        d = (dl * dl + da * da + db * db) + (dy * dy + dx * dx) * ratio
        sub = dist[y0:y1, x0:x1]
        closer = d < sub
        sub[closer] = d[closer]
        labels[y0:y1, x0:x1][closer] = k


def csr_matvec(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    # bincount accumulates sequentially in storage order: same sum order as the compiled loop
    return np.bincount(rows, weights=data * x[indices], minlength=n).astype(np.float64)


def label_components(labels):
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    right = labels[:, :-1] == labels[:, 1:]
    down = labels[:-1, :] == labels[1:, :]
    src = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    dst = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    graph = sparse.coo_matrix((np.ones(src.size, dtype=np.int8), (src, dst)), shape=(h * w, h * w))
    n_comp, raw = connected_components(graph, directed=False)
    # renumber by first pixel in raster order
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(n_comp, dtype=np.int64)
    remap[order] = np.arange(n_comp)
    return remap[raw].reshape(h, w), int(n_comp)
