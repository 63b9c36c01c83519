"""Distribution and weight-space diagnostics.

Pipeline: project data to 2-D with PCA (fit once on the true data), estimate
densities of true and generated sample sets with a Gaussian product-kernel
KDE on a shared grid, and score their Jensen-Shannon divergence by grid
quadrature.  Weight samples are embedded with classical (Torgerson) MDS and
summarized by a silhouette-selected k-means cluster count.

All eigen-decompositions go through a cyclic Jacobi solver so the module has
no linear-algebra dependencies beyond matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .net import ParamVector
from .rng import substream

LN2 = float(np.log(2.0))


# ---------------------------------------------------------------------------
# symmetric eigendecomposition (cyclic Jacobi)
# ---------------------------------------------------------------------------

def symmetric_eig(S: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Cyclic Jacobi rotations until the off-diagonal Frobenius mass falls below
    ``tol`` relative to the matrix norm.  Returns (values, vectors) with
    eigenvectors in columns.
    """
    A = np.array(S, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"need a square matrix, got {A.shape}")
    n = A.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.sqrt(max((A * A).sum() - (np.diag(A) ** 2).sum(), 0.0))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q
    values = np.diag(A).copy()
    order = np.argsort(values)[::-1]
    return values[order], V[:, order]


# ---------------------------------------------------------------------------
# PCA to 2-D
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Projection2D:
    """Affine map onto the top-2 principal directions."""

    mean: np.ndarray
    components: np.ndarray  # 2 x D, orthonormal rows
    explained_variance_ratio: np.ndarray


def pca_fit(X: np.ndarray) -> Projection2D:
    """Fit the top-2 principal components of the sample covariance.

    Sign convention: each component's largest-magnitude coordinate is
    positive.  Raises DataError on rank-0 (constant) data.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 3 or X.shape[1] < 2:
        raise ShapeError(f"need at least 3 rows and 2 columns, got {X.shape}")
    mean = X.mean(axis=0)
    C = np.cov(X, rowvar=False, ddof=1)
    total = float(np.trace(C))
    if total <= 0.0:
        raise DataError("degenerate data: zero variance in every direction")
    values, vectors = symmetric_eig(C)
    comps = vectors[:, :2].T.copy()
    for i in range(2):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    ratios = np.maximum(values[:2], 0.0) / total
    return Projection2D(mean=mean, components=comps, explained_variance_ratio=ratios)


def pca_apply(proj: Projection2D, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != proj.mean.size:
        raise ShapeError(f"data has {X.shape[1]} columns, projection expects {proj.mean.size}")
    return (X - proj.mean) @ proj.components.T


# ---------------------------------------------------------------------------
# Gaussian KDE on a grid, and the Jensen-Shannon divergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityGrid:
    """KDE evaluated on cell centers of a g x g box."""

    bounds: tuple  # (x_lo, x_hi, y_lo, y_hi)
    values: np.ndarray  # g x g, values[i, j] = density at (x_i, y_j)
    cell_area: float

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.cell_area)


def scott_bandwidth(points: np.ndarray) -> np.ndarray:
    """Per-axis bandwidth h = n^(-1/6) * sample std (2-D Scott rule)."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    sd = points.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise DataError("degenerate data: zero variance along a coordinate")
    return n ** (-1.0 / 6.0) * sd


def _grid_axes(bounds, grid_size):
    x_lo, x_hi, y_lo, y_hi = bounds
    dx = (x_hi - x_lo) / grid_size
    dy = (y_hi - y_lo) / grid_size
    gx = x_lo + dx * (np.arange(grid_size) + 0.5)
    gy = y_lo + dy * (np.arange(grid_size) + 0.5)
    return gx, gy, dx * dy


def _kde_values(points, h, gx, gy):
    # the product kernel factorizes over axes: one n x g kernel matrix per
    # axis, combined by a single matrix product
    ex = np.exp(-0.5 * ((gx[None, :] - points[:, 0][:, None]) / h[0]) ** 2)
    ey = np.exp(-0.5 * ((gy[None, :] - points[:, 1][:, None]) / h[1]) ** 2)
    norm = points.shape[0] * 2.0 * np.pi * h[0] * h[1]
    return (ex.T @ ey) / norm


def kde_density(points: np.ndarray, grid_size: int = 100,
                bounds: tuple | None = None) -> DensityGrid:
    """Gaussian KDE with the per-axis Scott bandwidth on a g x g grid.

    Without explicit bounds the grid covers the data's bounding box padded
    by three bandwidths per axis, which captures the kernel mass to well
    within the 2% documented tolerance.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 10:
        raise ShapeError(f"need at least 10 2-D points, got shape {points.shape}")
    h = scott_bandwidth(points)
    if bounds is None:
        lo = points.min(axis=0) - 3.0 * h
        hi = points.max(axis=0) + 3.0 * h
        bounds = (lo[0], hi[0], lo[1], hi[1])
    gx, gy, area = _grid_axes(bounds, grid_size)
    return DensityGrid(bounds=bounds, values=_kde_values(points, h, gx, gy), cell_area=area)


def jsd(samples_p: np.ndarray, samples_q: np.ndarray, grid_size: int = 100) -> float:
    """Jensen-Shannon divergence (nats) between two 2-D sample sets.

    Both KDEs are evaluated on one shared grid over the joint bounding box
    (padded by three of the larger bandwidths per axis) and normalized to
    unit cell mass, which makes the estimate exactly symmetric and pins
    identical sample sets at 0.  The result is clamped to [0, ln 2].
    """
    samples_p = np.asarray(samples_p, dtype=np.float64)
    samples_q = np.asarray(samples_q, dtype=np.float64)
    h_p = scott_bandwidth(samples_p)
    h_q = scott_bandwidth(samples_q)
    pad = 3.0 * np.maximum(h_p, h_q)
    lo = np.minimum(samples_p.min(axis=0), samples_q.min(axis=0)) - pad
    hi = np.maximum(samples_p.max(axis=0), samples_q.max(axis=0)) + pad
    bounds = (lo[0], hi[0], lo[1], hi[1])
    gx, gy, _ = _grid_axes(bounds, grid_size)

    p = _kde_values(samples_p, h_p, gx, gy).ravel()
    q = _kde_values(samples_q, h_q, gx, gy).ravel()
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)
    return float(min(max(0.5 * _kl(p, m) + 0.5 * _kl(q, m), 0.0), LN2))


def _kl(p: np.ndarray, m: np.ndarray) -> float:
    # cells with p = 0 contribute 0 (0 log 0 := 0); m floored to avoid blowups
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / np.maximum(m[mask], 1e-12))).sum())


# ---------------------------------------------------------------------------
# classical MDS over weight samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MDSEmbedding:
    """2-D Torgerson embedding; effective_dim < 2 flags a degenerate spectrum."""

    coords: np.ndarray  # k x 2
    eigenvalues: np.ndarray  # top-2 of the double-centered matrix
    effective_dim: int


def _as_matrix(weight_samples) -> np.ndarray:
    if isinstance(weight_samples, np.ndarray):
        return np.asarray(weight_samples, dtype=np.float64)
    rows = []
    spec = None
    for s in weight_samples:
        if isinstance(s, ParamVector):
            if spec is None:
                spec = s.spec
            elif s.spec != spec:
                raise ShapeError("all weight samples must share one architecture")
            rows.append(s.values)
        else:
            rows.append(np.asarray(s, dtype=np.float64))
    return np.vstack(rows)


def mds_embed(weight_samples) -> MDSEmbedding:
    """Classical MDS: double-center the squared Euclidean distance matrix and
    keep the top-2 eigenpairs.

    Exactly embeddable point sets are reproduced up to a rigid transform;
    with fewer than 2 positive eigenvalues the missing coordinates are zero
    and ``effective_dim`` says how many survived.
    """
    W = _as_matrix(weight_samples)
    k = W.shape[0]
    if k < 3:
        raise ShapeError(f"need at least 3 samples, got {k}")
    sq = (W * W).sum(axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (W @ W.T)
    np.maximum(D2, 0.0, out=D2)
    row_mean = D2.mean(axis=1)
    B = -0.5 * (D2 - row_mean[:, None] - row_mean[None, :] + D2.mean())
    values, vectors = symmetric_eig(B)
    top = values[:2]
    coords = np.zeros((k, 2))
    effective = 0
    for i in range(2):
        if top[i] > max(1e-12 * max(abs(values[0]), 1.0), 0.0):
            coords[:, i] = vectors[:, i] * np.sqrt(top[i])
            effective += 1
    for i in range(effective):
        j = np.argmax(np.abs(coords[:, i]))
        if coords[j, i] < 0:
            coords[:, i] = -coords[:, i]
    return MDSEmbedding(coords=coords, eigenvalues=top.copy(), effective_dim=effective)


# ---------------------------------------------------------------------------
# cluster-count diagnostic (k-means + silhouette)
# ---------------------------------------------------------------------------

def _kmeans_once(points: np.ndarray, k: int, rng) -> tuple:
    n = points.shape[0]
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    assign = None
    for _it in range(100):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        own = d2[np.arange(n), new_assign].copy()
        for c in range(k):
            if not np.any(new_assign == c):
                # revive an empty cluster at the currently worst-fit point
                farthest = int(own.argmax())
                new_assign[farthest] = c
                own[farthest] = -np.inf
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            centers[c] = points[assign == c].mean(axis=0)
    inertia = float(((points - centers[assign]) ** 2).sum())
    return assign, inertia


def _silhouette(points: np.ndarray, assign: np.ndarray, k: int) -> float:
    n = points.shape[0]
    d = np.sqrt(np.maximum(
        ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2), 0.0))
    scores = np.zeros(n)
    sizes = np.array([(assign == c).sum() for c in range(k)])
    for i in range(n):
        own = assign[i]
        if sizes[own] <= 1:
            scores[i] = 0.0
            continue
        a = d[i, assign == own].sum() / (sizes[own] - 1)
        b = np.inf
        for c in range(k):
            if c == own or sizes[c] == 0:
                continue
            b = min(b, d[i, assign == c].mean())
        scores[i] = 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return float(scores.mean())


def cluster_count(coords: np.ndarray, seed: int = 0, restarts: int = 20) -> tuple:
    """Silhouette-selected k-means cluster count over k = 1..min(6, n//2).

    k = 1 is assigned silhouette 0, so a structureless cloud reports one
    cluster.  Ties break toward smaller k; deterministic given the seed.
    Returns (k_best, best mean silhouette).
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n < 4:
        raise ShapeError(f"need at least 4 points, got {n}")
    best_k, best_sil = 1, 0.0
    for k in range(2, min(6, n // 2) + 1):
        best_inertia, best_assign = np.inf, None
        for r in range(restarts):
            assign, inertia = _kmeans_once(coords, k, substream(seed, "kmeans", k, r))
            if inertia < best_inertia:
                best_inertia, best_assign = inertia, assign
        sil = _silhouette(coords, best_assign, k)
        if sil > best_sil:
            best_k, best_sil = k, sil
    return best_k, best_sil
