"""Dense eigendecomposition, Gaussian sketching and projector algebra.

Subspaces are represented by column-orthonormal ``d x k`` arrays. All
functions are pure; randomness comes from explicit seeds routed through
:func:`tdcmm.rng.substream`.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, KOutOfRange, RankCollapse, WidthTooSmall
from .model import check_symmetric
from .rng import substream

ORTHO_TOL = 1e-10
RANK_TOL = 1e-12


class EigenPairs(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray

    @property
    def k(self):
        return self.values.shape[0]


def fix_signs(vectors):
    """Flip each column so its largest-magnitude entry is positive (ties -> lowest index)."""
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def check_orthonormal(cols, tol=ORTHO_TOL):
    cols = np.asarray(cols, dtype=float)
    if cols.ndim != 2:
        raise DimensionMismatch(f"basis must be 2-D, got shape {cols.shape}")
    k = cols.shape[1]
    err = np.max(np.abs(cols.T @ cols - np.eye(k)), initial=0.0)
    if err > tol:
        raise ValueError(f"columns are not orthonormal (max deviation {err:.3g})")
    return cols


def orthonormalize(a):
    """Orthonormal basis for the column span of ``a`` (thin QR, sign-fixed)."""
    a = np.asarray(a, dtype=float)
    if a.shape[1] == 0:
        return a.copy()
    q, _ = la.qr(a, mode="economic")
    return fix_signs(q)


def empty_basis(d):
    return np.zeros((d, 0))


def top_eigenpairs(s, k):
    """The ``k`` eigenpairs of a symmetric matrix with largest ``|lambda|``.

    Eigenvalues keep their sign and are ordered by decreasing magnitude.
    """
    s = check_symmetric(s, 1e-10, "input")
    d = s.shape[0]
    if not 1 <= k <= d:
        raise KOutOfRange(f"k={k} outside [1, {d}]")
    vals, vecs = la.eigh(0.5 * (s + s.T))
    # eigh is ascending; reverse first so equal magnitudes prefer the positive value
    vals, vecs = vals[::-1], vecs[:, ::-1]
    order = np.argsort(-np.abs(vals), kind="stable")[:k]
    return EigenPairs(vals[order].copy(), fix_signs(vecs[:, order]))


def _same_d(bases):
    ds = {b.shape[0] for b in bases}
    if len(ds) != 1:
        raise DimensionMismatch(f"bases have different ambient dimensions {sorted(ds)}")
    return ds.pop()


def projector(basis):
    basis = np.asarray(basis, dtype=float)
    return basis @ basis.T


def average_projector(bases):
    """``(1/n) sum_m B_m B_m^T``, summed in list order."""
    bases = [np.asarray(b, dtype=float) for b in bases]
    if not bases:
        raise ValueError("need at least one basis")
    d = _same_d(bases)
    total = np.zeros((d, d))
    for b in bases:
        total += b @ b.T
    total /= len(bases)
    return 0.5 * (total + total.T)


class ProjectorAverage:
    """Matrix-free ``(1/n) sum_m B_m B_m^T``: supports ``op @ Y`` in O(d k n w)."""

    def __init__(self, bases):
        self.bases = [np.asarray(b, dtype=float) for b in bases]
        if not self.bases:
            raise ValueError("need at least one basis")
        self.shape = (_same_d(self.bases),) * 2

    def __matmul__(self, y):
        out = np.zeros((self.shape[0],) + np.shape(y)[1:])
        for b in self.bases:
            out += b @ (b.T @ y)
        return out / len(self.bases)

    def toarray(self):
        return average_projector(self.bases)


def _left_singular(y, k, what):
    u, s, _ = la.svd(y, full_matrices=False)
    if s.size < k or s[0] <= 0 or s[k - 1] <= RANK_TOL * s[0]:
        raise RankCollapse(f"{what}: sketch has numerical rank < {k}")
    return fix_signs(u[:, :k])


def gaussian_sketch(d, width, seed, *keys):
    return substream(seed, *keys).standard_normal((d, width))


def sketch_top_subspace(sigma, width, k, seed):
    """Top-``k`` left singular vectors of ``sigma @ Omega``, Omega ``d x width`` Gaussian."""
    if width < k:
        raise WidthTooSmall(f"sketch width {width} < k={k}")
    d = sigma.shape[0]
    omega = gaussian_sketch(d, width, seed)
    return _left_singular(sigma @ omega, k, "sketch_top_subspace")


@dataclass(frozen=True)
class SketchConfig:
    """Two-stage sketch sizes: ``n_sketches`` first-stage sketches of width ``p``,
    then a ``q``-step power sketch of width ``p_prime``."""

    k_s: int
    n_sketches: int = 10
    p: int = None
    p_prime: int = None
    q: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.p is None:
            object.__setattr__(self, "p", max(2 * self.k_s, self.k_s + 8 * self.q - 1))
        if self.p_prime is None:
            object.__setattr__(self, "p_prime", max(2 * self.k_s, self.k_s + 7))
        if self.k_s < 1:
            raise ValueError("k_s must be >= 1")
        if self.n_sketches < 1 or self.q < 1:
            raise ValueError("n_sketches and q must be >= 1")
        if self.p < max(2 * self.k_s, self.k_s + 8 * self.q - 1):
            raise ValueError(f"p={self.p} below max(2k_s, k_s+8q-1)")
        if self.p_prime < max(2 * self.k_s, self.k_s + 7):
            raise ValueError(f"p_prime={self.p_prime} below max(2k_s, k_s+7)")

    @classmethod
    def default(cls, d, k_s, seed=0, **overrides):
        """``q = ceil(log d)``, ten sketches, minimal admissible widths."""
        q = overrides.pop("q", max(1, math.ceil(math.log(d))))
        return cls(k_s=k_s, q=q, seed=seed, **overrides)


def power_sketch(sigma, cfg, seed=None):
    """Top-``k_s`` left singular vectors of ``sigma^q @ Omega_F``.

    The power is applied as ``q`` successive products against the sketch,
    re-orthonormalising in between (span-preserving, avoids underflow).
    """
    seed = cfg.seed if seed is None else seed
    d = sigma.shape[0]
    y = gaussian_sketch(d, cfg.p_prime, seed)
    for step in range(cfg.q):
        if step:
            y, _ = la.qr(y, mode="economic")
        y = sigma @ y
    return _left_singular(y, cfg.k_s, "power_sketch")


def projector_distance(a, b):
    """``||A A^T - B B^T||_F``; the bases may have different column counts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"ambient dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return float(np.linalg.norm(a @ a.T - b @ b.T))


def trace_alignment(a, b):
    """``tr(A A^T B B^T) = ||A^T B||_F^2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"ambient dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return float(np.sum((a.T @ b) ** 2))


def deflate(x, left, right):
    """``(I - L L^T) X (I - R R^T)``."""
    x = np.asarray(x, dtype=float)
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    d = x.shape[0]
    if x.shape != (d, d) or left.shape[0] != d or right.shape[0] != d:
        raise DimensionMismatch("deflate: matrix and bases must share the dimension d")
    y = x - left @ (left.T @ x)
    return y - (y @ right) @ right.T
