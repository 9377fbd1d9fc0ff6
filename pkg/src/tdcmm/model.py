"""DCMM parameters, connection-probability matrices and adjacency sampling.

A DCMM network on ``d`` nodes with ``K`` communities is described by a degree
vector ``theta`` (length d, positive), a row-stochastic membership matrix
``pi`` (d x K) and a symmetric community connectivity matrix ``p_mat``
(K x K). Edge probabilities are ``H = diag(theta) pi p_mat pi^T diag(theta)``.

Probability and adjacency matrices are plain dense ``numpy`` arrays; the
``check_*`` helpers enforce their invariants.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NotSymmetric, ParamInvariantViolated, ProbabilityOutOfRange
from .rng import substream

ROW_SUM_TOL = 1e-12
SYM_TOL = 1e-12


@dataclass(frozen=True)
class DcmmParams:
    theta: np.ndarray
    pi: np.ndarray
    p_mat: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        pi = np.array(self.pi, dtype=float)
        if pi.ndim == 1:
            pi = pi.reshape(-1, 1)
        p_mat = np.atleast_2d(np.array(self.p_mat, dtype=float))
        for arr in (theta, pi, p_mat):
            arr.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "p_mat", p_mat)

    @property
    def d(self):
        return self.theta.shape[0]

    @property
    def k(self):
        return self.p_mat.shape[0]


def validate_params(params, require_pure_nodes=True):
    """Return a list of human-readable invariant violations (empty if valid).

    The pure-node requirement is reported here but never raised by
    :func:`build_probability_matrix`: subspace-only workflows do not need it.
    """
    problems = []
    theta, pi, p_mat = params.theta, params.pi, params.p_mat
    d, k = pi.shape
    if theta.shape[0] != d:
        problems.append(f"theta has length {theta.shape[0]} but pi has {d} rows")
    if p_mat.shape != (k, k):
        problems.append(f"p_mat has shape {p_mat.shape}, expected {(k, k)}")
        return problems
    if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
        bad = np.flatnonzero(~(theta > 0))
        problems.append(f"theta must be positive (violated at nodes {bad[:10].tolist()})")
    if np.any(pi < 0):
        rows = np.flatnonzero((pi < 0).any(axis=1))
        problems.append(f"pi has negative entries in rows {rows[:10].tolist()}")
    sums = pi.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad_rows.size:
        problems.append(
            f"pi rows must sum to 1 (row-stochasticity violated at rows "
            f"{bad_rows[:10].tolist()}, e.g. sum={sums[bad_rows[0]]:.6g})"
        )
    if np.max(np.abs(p_mat - p_mat.T)) > SYM_TOL:
        problems.append("p_mat is not symmetric")
    if np.any(p_mat < 0):
        problems.append("p_mat has negative entries")
    if require_pure_nodes:
        for c in range(k):
            if not np.any(pi[:, c] == 1.0):
                problems.append(f"community {c} has no pure node (pure-node condition violated)")
    return problems


def build_probability_matrix(params):
    """``H_ij = theta_i theta_j pi_i^T P pi_j``, exactly symmetric."""
    problems = validate_params(params, require_pure_nodes=False)
    if problems:
        raise ParamInvariantViolated("; ".join(problems))
    left = params.theta[:, None] * params.pi
    h = left @ params.p_mat @ left.T
    h = 0.5 * (h + h.T)
    hi = h.max(initial=0.0)
    if hi > 1 + 1e-12:
        raise ProbabilityOutOfRange(
            f"max H entry is {hi:.6g} > 1; theta / p_mat scaling is incompatible"
        )
    return np.clip(h, 0.0, 1.0)


def normalize_params(params):
    """Rescale to the unit-diagonal convention ``diag(p_mat) = 1``.

    ``H`` is unchanged. This is the identifiable form the Mixed-SCORE
    estimators recover, so compare estimates against normalized truth.
    """
    scale = np.sqrt(np.diag(params.p_mat))
    if np.any(scale <= 0):
        raise ParamInvariantViolated("p_mat has a non-positive diagonal entry")
    weighted = params.pi * scale
    row = weighted.sum(axis=1)
    return DcmmParams(
        theta=params.theta * row,
        pi=weighted / row[:, None],
        p_mat=params.p_mat / np.outer(scale, scale),
    )


def check_symmetric(a, tol=SYM_TOL, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"{name} must be square, got shape {a.shape}")
    asym = np.max(np.abs(a - a.T), initial=0.0)
    if asym > tol:
        raise NotSymmetric(f"{name} is not symmetric (max |a - a^T| = {asym:.3g})")
    return a


def check_probability_matrix(h, tol=SYM_TOL):
    h = check_symmetric(h, tol, "probability matrix")
    if h.size and (h.min() < 0 or h.max() > 1):
        raise ProbabilityOutOfRange("probability matrix entries must lie in [0, 1]")
    return h


def check_adjacency(x):
    x = check_symmetric(x, 0.0, "adjacency matrix")
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("adjacency matrix must be binary")
    if np.any(np.diag(x) != 0):
        raise ValueError("adjacency matrix must have a zero diagonal")
    return x


def sample_adjacency(h, seed):
    """Draw ``X_ij ~ Bernoulli(H_ij)`` independently for ``i < j``; zero diagonal."""
    h = check_probability_matrix(h)
    d = h.shape[0]
    rng = substream(seed, 0)
    iu = np.triu_indices(d, k=1)
    u = rng.random(iu[0].size)
    x = np.zeros((d, d))
    x[iu] = (u < h[iu]).astype(float)
    return x + x.T
