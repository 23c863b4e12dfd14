"""Superpixel-level CRF: observations, pairwise weights and the A x = b system.

Pairwise energies are summed once per undirected edge of the
four-neighbour graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy import sparse

from .config import RunConfig
from .errors import SingularSystemError, SolverError
from .geometry import ProjectedPoints
from .solver import SparseMatrix, SolveReport, cgs_solve, from_triplets, spmv
from .superpixel import FourNeighborGraph, SuperpixelSegmentation


@dataclass
class SuperpixelObservations:
    observed_depth: np.ndarray  # (n,) NaN where unobserved
    point_count: np.ndarray  # (n,) int
    location: np.ndarray  # (n, 3) NaN where unobserved
    mean_normal: np.ndarray  # (n, 3) NaN where unknown
    mean_color: np.ndarray  # (n, 3)

    @property
    def n(self) -> int:
        return len(self.point_count)

    @property
    def observed(self) -> np.ndarray:
        return self.point_count > 0


def _group_medians(group: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    out = np.full(n, np.nan)
    if len(group) == 0:
        return out
    order = np.lexsort((values, group))
    g, v = group[order], values[order]
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    ends = np.r_[starts[1:], len(g)]
    counts = ends - starts
    lo = starts + (counts - 1) // 2
    hi = starts + counts // 2
    out[g[starts]] = 0.5 * (v[lo] + v[hi])
    return out


def aggregate(seg: SuperpixelSegmentation, pts: ProjectedPoints, image=None) -> SuperpixelObservations:
    """Pool the projected LiDAR returns that fall in each superpixel.

    Depth is the median, location the mean 3D point, normal the normalised
    mean of the valid member normals. Colours are the segment pixel means
    already held by ``seg``; ``image`` is unused.
    """
    n = seg.n_segments
    group = seg.labels[pts.pixel_rows, pts.pixel_cols] if len(pts) else np.zeros(0, dtype=np.int64)
    counts = np.bincount(group, minlength=n)
    depth = _group_medians(group, pts.depth, n)

    location = np.full((n, 3), np.nan)
    has = counts > 0
    sums = np.stack([np.bincount(group, pts.xyz[:, c], n) for c in range(3)], axis=1) if len(pts) else np.zeros((n, 3))
    location[has] = sums[has] / counts[has, None]

    normal = np.full((n, 3), np.nan)
    if pts.normals is not None and len(pts):
        ok = np.all(np.isfinite(pts.normals), axis=1)
        nsum = np.stack([np.bincount(group[ok], pts.normals[ok, c], n) for c in range(3)], axis=1)
        norm = np.linalg.norm(nsum, axis=1)
        good = norm > 1e-12
        normal[good] = nsum[good] / norm[good, None]

    color = np.asarray(seg.mean_color, dtype=np.float64)
    return SuperpixelObservations(depth, counts.astype(np.int64), location, normal, color)


def colour_weight(ci, cj, sigma_d: float) -> float:
    d = np.asarray(ci, dtype=np.float64) - np.asarray(cj, dtype=np.float64)
    return math.exp(-float(d @ d) / sigma_d ** 2)


def normal_weight(ni, nj) -> float:
    if ni is None or nj is None:
        return 0.0
    ni = np.asarray(ni, dtype=np.float64)
    nj = np.asarray(nj, dtype=np.float64)
    if not (np.all(np.isfinite(ni)) and np.all(np.isfinite(nj))):
        return 0.0
    cos = float(ni @ nj) / (np.linalg.norm(ni) * np.linalg.norm(nj))
    return min(max(cos, 0.0), 1.0)


def depth_weight(pi, pj, sigma_p: float) -> float:
    if pi is None or pj is None:
        return 0.0
    pi = np.asarray(pi, dtype=np.float64)
    pj = np.asarray(pj, dtype=np.float64)
    if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(pj))):
        return 0.0
    d = pi - pj
    return math.exp(-float(d @ d) / sigma_p ** 2)


def edge_weights(obs: SuperpixelObservations, edges: np.ndarray, cfg: RunConfig):
    """Vectorised colour, normal and depth weights, one entry per edge."""
    i, j = edges[:, 0], edges[:, 1]
    dc = obs.mean_color[i] - obs.mean_color[j]
    colour = np.exp(-np.einsum("ek,ek->e", dc, dc) / cfg.sigma_d ** 2)

    ni, nj = obs.mean_normal[i], obs.mean_normal[j]
    ok_n = np.all(np.isfinite(ni), axis=1) & np.all(np.isfinite(nj), axis=1)
    normal = np.zeros(len(edges))
    if ok_n.any():
        a, b = ni[ok_n], nj[ok_n]
        cos = np.einsum("ek,ek->e", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        normal[ok_n] = np.clip(cos, 0.0, 1.0)

    pi, pj = obs.location[i], obs.location[j]
    ok_p = np.all(np.isfinite(pi), axis=1) & np.all(np.isfinite(pj), axis=1)
    depth = np.zeros(len(edges))
    dp = pi[ok_p] - pj[ok_p]
    depth[ok_p] = np.exp(-np.einsum("ek,ek->e", dp, dp) / cfg.sigma_p ** 2)
    return colour, normal, depth


def incidence(n: int, edges: np.ndarray, weights: np.ndarray) -> SparseMatrix:
    """Rows of (+sqrt(w) at i, -sqrt(w) at j), one per edge."""
    m = len(edges)
    root = np.sqrt(weights)
    rows = np.repeat(np.arange(m), 2)
    cols = edges.ravel()
    vals = np.stack([root, -root], axis=1).ravel()
    return from_triplets(m, n, rows, cols, vals)


@dataclass
class EnergySystem:
    n: int
    edges: np.ndarray
    W: SparseMatrix
    S: SparseMatrix
    P: SparseMatrix
    D: SparseMatrix
    colour_w: np.ndarray
    normal_w: np.ndarray
    depth_w: np.ndarray
    alpha: float
    beta: float
    gamma: float
    delta: float
    A: SparseMatrix
    b: np.ndarray
    z: np.ndarray
    observed: np.ndarray

    def energy(self, x) -> float:
        """Total CRF energy for a candidate depth vector ``x``."""
        x = np.asarray(x, dtype=np.float64)
        wres = spmv(self.W, x - self.z)
        s, p, d = spmv(self.S, x), spmv(self.P, x), spmv(self.D, x)
        return float(self.alpha * wres @ wres + self.beta * s @ s + self.gamma * p @ p + self.delta * d @ d)

    def pairwise_weight(self) -> np.ndarray:
        return self.beta * self.colour_w + self.gamma * self.normal_w + self.delta * self.depth_w

    def dump(self) -> str:
        from .solver import write_triplets

        b_lines = "".join(f"{i} 0 {v!r}\n" for i, v in enumerate(self.b.tolist()))
        return "# A\n" + write_triplets(self.A) + f"# b {self.n} 1\n" + b_lines


def _laplacian_triplets(n, edges, weights, scale):
    i, j = edges[:, 0], edges[:, 1]
    w = scale * weights
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([w, w, -w, -w])
    return rows, cols, vals


def assemble(n, edges, unary_diag, pair_terms, alpha) -> SparseMatrix:
    """A = alpha W^T W + sum_k c_k L_k with L_k the edge-weighted Laplacians."""
    idx = np.arange(n)
    rows, cols, vals = [idx], [idx], [alpha * unary_diag ** 2]
    for scale, weights in pair_terms:
        if scale == 0.0 or len(edges) == 0:
            continue
        r, c, v = _laplacian_triplets(n, edges, weights, scale)
        rows.append(r)
        cols.append(c)
        vals.append(v)
    return from_triplets(n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def build_system(obs: SuperpixelObservations, graph: FourNeighborGraph, cfg: RunConfig) -> EnergySystem:
    n = obs.n
    if graph.n_nodes != n:
        raise ValueError(f"graph has {graph.n_nodes} nodes but there are {n} observations")
    observed = obs.observed
    if not observed.any():
        raise SingularSystemError("no superpixel holds a LiDAR point; refusing to solve")
    edges = graph.edges
    colour, normal, depth = edge_weights(obs, edges, cfg)

    w_diag = np.where(observed, cfg.sigma_i, 0.0)
    z = np.where(observed, obs.observed_depth, 0.0)
    W = from_triplets(n, n, np.arange(n), np.arange(n), w_diag)
    A = assemble(n, edges, w_diag, [(cfg.beta, colour), (cfg.gamma, normal), (cfg.delta, depth)], cfg.alpha)
    b = cfg.alpha * w_diag ** 2 * z
    return EnergySystem(
        n=n, edges=edges, W=W,
        S=incidence(n, edges, colour), P=incidence(n, edges, normal), D=incidence(n, edges, depth),
        colour_w=colour, normal_w=normal, depth_w=depth,
        alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma, delta=cfg.delta,
        A=A, b=b, z=z, observed=observed,
    )


def check_determined(n: int, edges: np.ndarray, pair_weight: np.ndarray, anchored: np.ndarray) -> None:
    """Raise unless every component of the weighted edge graph holds an anchored node."""
    live = pair_weight > 0
    e = edges[live]
    graph = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    n_comp, comp = connected_components(graph, directed=False)
    has_anchor = np.zeros(n_comp, dtype=bool)
    has_anchor[comp[anchored]] = True
    if not has_anchor.all():
        bad = np.flatnonzero(~has_anchor[comp])
        raise SingularSystemError(
            f"superpixel {bad[0]} lies in a component without LiDAR observations "
            f"({len(bad)} undetermined nodes)", node=int(bad[0]))


def initial_guess(system: EnergySystem) -> np.ndarray:
    fill = system.z[system.observed].mean()
    return np.where(system.observed, system.z, fill)


@dataclass
class DenseDepthMap:
    depth: np.ndarray  # (H, W)
    valid: np.ndarray
    node_values: np.ndarray
    report: SolveReport | None = None


@dataclass
class UncertaintyMap:
    values: np.ndarray  # (H, W) in [0, 1]
    node_values: np.ndarray
    report: SolveReport | None = None


def solve_system(A, b, x0, cfg: RunConfig) -> SolveReport:
    report = cgs_solve(A, b, x0, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter,
                       method=cfg.solver_method, preconditioner=cfg.preconditioner)
    if not report.converged:
        raise SolverError(
            f"solver did not converge ({report.status}): residual {report.final_residual_norm:.3e} "
            f"after {report.iterations} iterations",
            residual=report.final_residual_norm, iterations=report.iterations)
    return report


def infer(system: EnergySystem, seg: SuperpixelSegmentation, cfg: RunConfig) -> DenseDepthMap:
    check_determined(system.n, system.edges, system.pairwise_weight(), system.observed)
    report = solve_system(system.A, system.b, initial_guess(system), cfg)
    x = np.clip(report.x, 1.0 / 256.0, cfg.depth_cap)
    depth = x[seg.labels]
    return DenseDepthMap(depth, np.ones(depth.shape, dtype=bool), report.x, report)


def build_uncertainty_targets(obs: SuperpixelObservations) -> np.ndarray:
    count = obs.point_count
    unc = np.ones(len(count))
    unc[count == 1] = 0.5
    many = count >= 2
    unc[many] = np.minimum(1.0 / count[many], 0.25)
    return unc


def infer_uncertainty(obs: SuperpixelObservations, graph: FourNeighborGraph, cfg: RunConfig,
                      seg: SuperpixelSegmentation, colour=None) -> UncertaintyMap:
    """Smooth the per-node uncertainty targets with the colour pairwise operator."""
    n = obs.n
    target = build_uncertainty_targets(obs)
    if colour is None:
        colour, _, _ = edge_weights(obs, graph.edges, cfg)
    w_diag = np.full(n, cfg.sigma_i)
    A = assemble(n, graph.edges, w_diag, [(cfg.beta, colour)], cfg.alpha)
    b = cfg.alpha * w_diag ** 2 * target
    report = solve_system(A, b, target.copy(), cfg)
    values = np.clip(report.x, 0.0, 1.0)
    return UncertaintyMap(values[seg.labels], report.x, report)
