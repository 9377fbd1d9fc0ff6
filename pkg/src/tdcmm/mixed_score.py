"""Mixed-SCORE: recover (theta, pi, P) and H from a K-dimensional eigenbasis.

The pipeline accepts either the adjacency matrix's own leading eigenvectors
or a plug-in basis (e.g. one produced by transfer learning). Outputs follow
the unit-diagonal convention ``diag(P) = 1``; see
:func:`tdcmm.model.normalize_params`.
"""
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.cluster.vq import kmeans2

from .errors import (
    DegenerateCloud,
    DegenerateDenominator,
    DegenerateSimplex,
    DimensionMismatch,
    KTooSmall,
    NegativeRadicand,
    TdcmmError,
)
from .model import DcmmParams, check_symmetric
from .rng import substream
from .spectral import EigenPairs, fix_signs, top_eigenpairs

AFFINE_TOL = 1e-8
KMEANS_RESTARTS = 20
DUPLICATE_TOL = 1e-9
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class PointCloud:
    r: np.ndarray
    t: float


@dataclass
class DcmmEstimate:
    params: DcmmParams
    b1: np.ndarray
    eig: EigenPairs
    h_hat: np.ndarray
    vertices: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)


def _bump(diag, key, n=1):
    if diag is not None and n:
        diag[key] = diag.get(key, 0) + int(n)


def leading_positive(eig):
    """Flip the first eigenvector so that most of its entries are positive."""
    vecs = eig.vectors
    first = vecs[:, 0]
    if np.count_nonzero(first > 0) < np.count_nonzero(first < 0):
        vecs = vecs.copy()
        vecs[:, 0] = -first
        return EigenPairs(eig.values, vecs)
    return eig


def point_cloud(eig, t):
    """Entrywise ratios ``r_ik = xi_{k+1}(i) / xi_1(i)``, clamped to ``[-t, t]``."""
    if eig.k < 2:
        raise KTooSmall("point cloud needs K >= 2")
    eig = leading_positive(eig)
    first = eig.vectors[:, 0]
    rest = eig.vectors[:, 1:]
    ok = np.abs(first) >= 1e-12
    r = np.zeros_like(rest)
    r[ok] = rest[ok] / first[ok, None]
    return PointCloud(np.clip(r, -t, t), float(t))


def _distinct_rows(a):
    _, idx = np.unique(a, axis=0, return_index=True)
    return a[np.sort(idx)]


def _kmeans_centers(points, n_centers, seed):
    best, best_inertia = None, np.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for restart in range(KMEANS_RESTARTS):
            rng = substream(seed, restart)
            centers, labels = kmeans2(points, n_centers, minit="++", seed=rng)
            inertia = float(np.sum((points - centers[labels]) ** 2))
            # strict < keeps the lowest restart index on ties
            if inertia < best_inertia:
                best, best_inertia = labels, inertia
    used = np.unique(best)
    centers = np.array([points[best == c].mean(axis=0) for c in used])
    return centers, np.searchsorted(used, best)


def _snap_to_atom(members):
    """Most repeated row among ``members`` if any row repeats, else ``None``.

    Pure nodes share an identical cloud row in the noiseless case; k-means can
    blend them with nearby mixed rows, so the repeated row is restored.
    """
    scale = max(1.0, float(np.abs(members).max()))
    keys = np.round(members / (scale * DUPLICATE_TOL)).astype(np.int64)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    if counts.max() < 2:
        return None
    top = np.flatnonzero(counts == counts.max())
    rows = [members[inv.ravel() == g].mean(axis=0) for g in top]
    far = [float(np.sum((r - members.mean(axis=0)) ** 2)) for r in rows]
    return rows[int(np.argmax(far))]


def successive_projection(points, k):
    """Successive projection on the homogenised rows ``(1, x_i)``; returns row indices."""
    y = np.column_stack([np.ones(points.shape[0]), points]).T.copy()
    chosen = []
    for _ in range(k):
        norms = np.einsum("ij,ij->j", y, y)
        j = int(np.argmax(norms))
        chosen.append(j)
        u = y[:, j] / math.sqrt(norms[j])
        y -= np.outer(u, u @ y)
    return chosen


def _affine_rank_ok(points, dim):
    if dim == 0:
        return True
    centered = points - points.mean(axis=0)
    s = la.svdvals(centered)
    return s.size >= dim and s[dim - 1] > AFFINE_TOL


def _canonical(verts):
    return verts[np.lexsort(verts.T[::-1])]


def _exact_simplex(r, k):
    """Raw successive-projection vertices if every row lies inside their simplex.

    This is the noiseless case; SPA is exact there, including for vertices
    carried by a single row, which k-means would blur.
    """
    verts = r[successive_projection(r, k)]
    a = np.vstack([verts.T, np.ones((1, k))])
    if la.svdvals(a)[-1] <= AFFINE_TOL:
        return None
    rhs = np.vstack([r.T, np.ones((1, r.shape[0]))])
    w, *_ = la.lstsq(a, rhs)
    fit = np.abs(a @ w - rhs).max()
    if w.min() < -SIMPLEX_TOL or fit > SIMPLEX_TOL:
        return None
    return _canonical(verts.copy())


def vertex_hunt(cloud, k, seed=0):
    """Estimate the ``k`` simplex vertices of the point cloud.

    A cloud that already is an exact simplex (noiseless data) is solved by
    successive projection on its rows. Otherwise k-means denoises it into
    ``max(k, ceil(k log d))`` local centres (20 seeded restarts) and
    successive projection runs on the centres. Vertices come back in
    lexicographic order of their coordinates.
    """
    r = cloud.r
    n = r.shape[0]
    if k < 2:
        raise KTooSmall("vertex hunting needs k >= 2")
    if n < k:
        raise DegenerateCloud(f"cloud has {n} rows, fewer than k={k}")
    if r.shape[1] != k - 1:
        raise DimensionMismatch(f"cloud has {r.shape[1]} columns, expected {k - 1}")
    if not _affine_rank_ok(r, k - 1):
        raise DegenerateCloud(f"point cloud spans fewer than {k - 1} affine dimensions")
    exact = _exact_simplex(r, k)
    if exact is not None:
        return exact
    n_centers = min(n, max(k, math.ceil(k * math.log(n))))
    distinct = _distinct_rows(r)
    if distinct.shape[0] <= n_centers:
        centers = distinct
    else:
        centers, labels = _kmeans_centers(r, n_centers, seed)
    picked = successive_projection(centers, k)
    verts = centers[picked].copy()
    if distinct.shape[0] > n_centers:
        for j, c in enumerate(picked):
            atom = _snap_to_atom(r[labels == c])
            if atom is not None:
                verts[j] = atom
    edges = verts[1:] - verts[0]
    if la.svdvals(edges)[-1] <= AFFINE_TOL:
        raise DegenerateCloud("hunted vertices are affinely dependent")
    return _canonical(verts)


def _barycentric_system(verts):
    k = verts.shape[0]
    a = np.vstack([verts.T, np.ones((1, k))])
    if la.svdvals(a)[-1] <= AFFINE_TOL:
        raise DegenerateSimplex("simplex vertices are affinely dependent")
    return a


def memberships(cloud, verts, diagnostics=None):
    """Barycentric weights of each row w.r.t. the vertices, clamped to the simplex."""
    a = _barycentric_system(verts)
    rhs = np.vstack([cloud.r.T, np.ones((1, cloud.r.shape[0]))])
    w = la.lstsq(a, rhs)[0].T
    _bump(diagnostics, "membership_clamps", np.count_nonzero(w < -1e-6))
    w = np.clip(w, 0.0, None)
    s = w.sum(axis=1)
    empty = s <= 0
    if np.any(empty):
        w[empty] = 1.0
        s = w.sum(axis=1)
    return w / s[:, None]


def estimate_b1(values, verts):
    """``b1_k = [lambda_1 + v_k^T diag(lambda_2..lambda_K) v_k]^{-1/2}``."""
    values = np.asarray(values, dtype=float)
    verts = np.atleast_2d(np.asarray(verts, dtype=float))
    radicand = values[0] + (verts**2) @ values[1:]
    if np.any(radicand <= 0):
        bad = np.flatnonzero(radicand <= 0).tolist()
        raise NegativeRadicand(
            f"b1 radicand non-positive for communities {bad} (eigengap assumption failed)"
        )
    return radicand**-0.5


def estimate_connectivity(values, b1, verts, diagnostics=None):
    """``P = B diag(values) B^T`` with ``B = diag(b1) (1, V)``, symmetrised and clamped to [0, 1]."""
    values = np.asarray(values, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    k = b1.shape[0]
    verts = np.asarray(verts, dtype=float).reshape(k, -1)
    if values.shape[0] != k or verts.shape[1] != k - 1:
        raise DimensionMismatch("values, b1 and vertices disagree on K")
    b = b1[:, None] * np.column_stack([np.ones(k), verts])
    p = (b * values) @ b.T
    p = 0.5 * (p + p.T)
    _bump(diagnostics, "p_clamps", np.count_nonzero((p < -1e-6) | (p > 1 + 1e-6)))
    return np.clip(p, 0.0, 1.0)


def estimate_theta(first, pi_hat, b1, diagnostics=None):
    """``theta_i = xi_1(i) / (pi_i^T b1)``, floored at 1e-12."""
    denom = np.asarray(pi_hat) @ np.asarray(b1)
    if np.any(denom <= 1e-12):
        raise DegenerateDenominator("pi_i^T b1 vanishes for some node")
    theta = np.asarray(first) / denom
    _bump(diagnostics, "theta_floors", np.count_nonzero(theta < 1e-12))
    return np.maximum(theta, 1e-12)


def ritz_pairs(x, basis):
    """Rotate ``basis`` within its span to diagonalise ``basis^T x basis``.

    Returned values are the Rayleigh quotients of the rotated columns, ordered
    by decreasing magnitude.
    """
    basis = np.asarray(basis, dtype=float)
    m = basis.T @ x @ basis
    mu, w = la.eigh(0.5 * (m + m.T))
    mu, w = mu[::-1], w[:, ::-1]
    order = np.argsort(-np.abs(mu), kind="stable")
    vecs = fix_signs(basis @ w[:, order])
    values = np.einsum("ij,ij->j", vecs, x @ vecs)
    return EigenPairs(values, vecs)


def _as_basis(basis):
    if isinstance(basis, EigenPairs):
        return basis.vectors
    if hasattr(basis, "combined"):
        return basis.combined
    return np.asarray(basis, dtype=float)


def full_pipeline(x, basis=None, k=None, t=None, seed=0):
    """Estimate (theta, pi, P) and ``H_hat`` from ``x``.

    ``basis=None`` runs classical Mixed-SCORE on the top-``k`` eigenvectors
    of ``x``. A plug-in basis (array, ``EigenPairs`` or ``TransferBasis``)
    replaces them; in both cases the basis is Ritz-rotated against ``x`` so
    that the eigenvalues used downstream are its Rayleigh quotients.
    """
    x = check_symmetric(x, 1e-10, "x")
    d = x.shape[0]
    diag = {}
    timings = {}

    def stage(name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except TdcmmError as err:
            err.stage = name
            raise
        finally:
            timings[name] = time.perf_counter() - t0

    if basis is None:
        if k is None:
            raise ValueError("k is required when no basis is given")
        basis = stage("eigen", top_eigenpairs, x, k).vectors
    else:
        basis = _as_basis(basis)
        if basis.shape[0] != d:
            raise DimensionMismatch(f"basis has {basis.shape[0]} rows, x has {d}")
        if k is not None and basis.shape[1] != k:
            raise DimensionMismatch(f"basis has {basis.shape[1]} columns, k={k}")
    k = basis.shape[1]
    if k < 1:
        raise KTooSmall("k must be >= 1")
    t = math.log(d) if t is None else float(t)

    eig = leading_positive(stage("ritz", ritz_pairs, x, basis))
    values, first = eig.values, eig.vectors[:, 0]

    if k == 1:
        b1 = stage("b1", estimate_b1, values, np.zeros((1, 0)))
        verts = np.zeros((1, 0))
        pi_hat = np.ones((d, 1))
    else:
        cloud = stage("point_cloud", point_cloud, eig, t)
        verts = stage("vertex_hunt", vertex_hunt, cloud, k, seed=seed)
        w = stage("memberships", memberships, cloud, verts, diagnostics=diag)
        b1 = stage("b1", estimate_b1, values, verts)
        pi_hat = w / b1
        pi_hat /= pi_hat.sum(axis=1, keepdims=True)
    p_hat = stage("connectivity", estimate_connectivity, values, b1, verts, diagnostics=diag)
    theta = stage("theta", estimate_theta, first, pi_hat, b1, diagnostics=diag)

    left = theta[:, None] * pi_hat
    h_hat = left @ p_hat @ left.T
    h_hat = 0.5 * (h_hat + h_hat.T)
    _bump(diag, "h_clamps", np.count_nonzero((h_hat < 0) | (h_hat > 1)))
    h_hat = np.clip(h_hat, 0.0, 1.0)

    diag["timings"] = timings
    return DcmmEstimate(
        params=DcmmParams(theta=theta, pi=pi_hat, p_mat=p_hat),
        b1=b1,
        eig=eig,
        h_hat=h_hat,
        vertices=verts,
        diagnostics=diag,
    )
