"""Shared-subspace transfer across networks.

Oracle mode pools every supplied source; non-oracle mode first prunes
sources whose eigenspace is poorly aligned with the running shared estimate.
Bases are plain ``d x k`` column-orthonormal arrays.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, EmptySources, RankCollapse, TdcmmError
from .rng import child_seed, substream
from .spectral import (
    ProjectorAverage,
    SketchConfig,
    check_orthonormal,
    deflate,
    empty_basis,
    fix_signs,
    orthonormalize,
    power_sketch,
    sketch_top_subspace,
    top_eigenpairs,
    trace_alignment,
)

ORTHO_CHECK = 1e-8


@dataclass(frozen=True)
class TransferConfig:
    """Dimensions, sketch sizes and selection settings.

    ``k_sources`` may be an int (same K for every source) or a sequence.
    ``sketch=None`` picks :meth:`SketchConfig.default` for the data's ``d``.
    ``init`` selects the starting shared basis for source selection:
    ``"weighted"`` pools all networks weighted by their alignment with the
    target, ``"target"`` uses the target alone.
    """

    k_target: int
    k_shared: int
    k_sources: object = None
    sketch: SketchConfig = None
    split_sources: bool = False
    tau: float = None
    max_iters: int = 10
    seed: int = 0
    init: str = "weighted"
    n_jobs: int = 1

    def __post_init__(self):
        if not 1 <= self.k_shared <= self.k_target:
            raise ValueError(f"need 1 <= k_shared ({self.k_shared}) <= k_target ({self.k_target})")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")
        if self.init not in ("weighted", "target"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.sketch is not None and self.sketch.k_s != self.k_shared:
            raise ValueError("sketch.k_s must equal k_shared")
        ks = self.k_sources
        if ks is not None:
            low = min(ks) if np.ndim(ks) else ks
            if low < self.k_shared:
                raise ValueError(f"k_shared={self.k_shared} exceeds a source dimension ({low})")

    def source_ks(self, n):
        ks = self.k_target if self.k_sources is None else self.k_sources
        if np.ndim(ks) == 0:
            return [int(ks)] * n
        ks = [int(k) for k in ks]
        if len(ks) != n:
            raise DimensionMismatch(f"{len(ks)} source dimensions for {n} sources")
        return ks

    def sketch_for(self, d):
        if self.sketch is not None:
            return self.sketch
        return SketchConfig.default(d, self.k_shared, seed=self.seed)


@dataclass
class TransferBasis:
    shared: np.ndarray
    private: np.ndarray
    selected: tuple = None
    trace: list = field(default_factory=list)

    @property
    def combined(self):
        return np.hstack([self.private, self.shared])

    def check(self, tol=ORTHO_CHECK):
        check_orthonormal(self.combined, tol)


@dataclass
class SelectionResult:
    selected: tuple
    shared: np.ndarray
    trace: list


def per_network_bases(xs, ks, n_jobs=1):
    """Top-``K_m`` eigenvectors of each network, in input order."""
    if np.ndim(ks) == 0:
        ks = [int(ks)] * len(xs)
    if len(ks) != len(xs):
        raise DimensionMismatch(f"{len(xs)} networks but {len(ks)} dimensions")

    def one(m, x, k):
        try:
            return top_eigenpairs(x, k).vectors
        except TdcmmError as err:
            err.args = (f"network {m}: {err.args[0] if err.args else ''}",)
            raise

    if n_jobs > 1 and len(xs) > 1:
        from joblib import Parallel, delayed

        # threads only: each eigensolve is independent and results keep input order
        return Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(one)(m, x, k) for m, (x, k) in enumerate(zip(xs, ks)))
    return [one(m, x, k) for m, (x, k) in enumerate(zip(xs, ks))]


def estimate_shared(bases, cfg, seed=None):
    """Sketched estimate of the subspace common to ``bases``.

    ``L`` Gaussian sketches of the averaged projector give ``L`` rank-``K_s``
    estimates; their averaged projector is then power-sketched. Both
    averages are applied matrix-free.
    """
    if not bases:
        raise EmptySources("estimate_shared needs at least one basis")
    seed = cfg.seed if seed is None else seed
    sigma = ProjectorAverage(bases)
    sk = cfg.sketch_for(sigma.shape[0])
    try:
        first = [
            sketch_top_subspace(sigma, sk.p, sk.k_s, child_seed(seed, 1, l))
            for l in range(sk.n_sketches)
        ]
        return power_sketch(ProjectorAverage(first), sk, seed=child_seed(seed, 2))
    except TdcmmError as err:
        err.stage = "estimate_shared"
        raise


def _private_step(x_target, shared_left, shared_right, k_private):
    d = x_target.shape[0]
    if k_private == 0:
        return empty_basis(d)
    xp = deflate(x_target, shared_left, shared_right)
    xp = 0.5 * (xp + xp.T)
    priv = top_eigenpairs(xp, k_private).vectors
    priv = priv - shared_left @ (shared_left.T @ priv)
    priv = orthonormalize(priv)
    if priv.shape[1] < k_private or not np.all(np.isfinite(priv)):
        raise RankCollapse("private basis lost rank after re-orthogonalisation")
    return priv


def oracle_from_bases(x_target, bases, cfg, seed=None):
    """Oracle transfer given precomputed bases (target first)."""
    x_target = np.asarray(x_target, dtype=float)
    seed = cfg.seed if seed is None else seed
    n = len(bases)
    if cfg.split_sources:
        if n < 2:
            raise EmptySources("sample splitting needs at least one source")
        half = (n + 1) // 2
        s1 = estimate_shared(bases[:half], cfg, child_seed(seed, 11))
        s2 = estimate_shared(bases[half:], cfg, child_seed(seed, 12))
    else:
        s1 = s2 = estimate_shared(bases, cfg, child_seed(seed, 10))
    try:
        priv = _private_step(x_target, s1, s2, cfg.k_target - cfg.k_shared)
    except TdcmmError as err:
        err.stage = err.stage or "private"
        raise
    return TransferBasis(shared=s1, private=priv)


def oracle_tdcmm(x_target, sources, cfg, seed=None):
    """Transfer basis pooling the target with every source."""
    x_target = np.asarray(x_target, dtype=float)
    if cfg.split_sources and not sources:
        raise EmptySources("split_sources requested with no sources")
    bases = per_network_bases([x_target] + list(sources),
                              [cfg.k_target] + cfg.source_ks(len(sources)), cfg.n_jobs)
    basis = oracle_from_bases(x_target, bases, cfg, seed)
    basis.selected = tuple(range(1, len(sources) + 1))
    return basis


def target_only_basis(x_target, cfg):
    """Split of the target's own top-``K_1`` eigenvectors into (private, shared)."""
    vecs = top_eigenpairs(x_target, cfg.k_target).vectors
    kp = cfg.k_target - cfg.k_shared
    return TransferBasis(shared=vecs[:, kp:], private=vecs[:, :kp], selected=())


def _initial_shared(bases, cfg, seed):
    if cfg.init == "target":
        return estimate_shared(bases[:1], cfg, child_seed(seed, 20))
    target = bases[0]
    weights = [trace_alignment(target, b) for b in bases]
    total = sum(weights)
    cols = [b * math.sqrt(w / total) for b, w in zip(bases, weights) if w > 0]
    pooled = np.hstack(cols)
    # top-K_s of sum_m w_m B_m B_m^T via the SVD of the weighted stack
    u, s, _ = np.linalg.svd(pooled, full_matrices=False)
    return fix_signs(u[:, : cfg.k_shared])


def select_from_bases(bases, cfg, init=None, seed=None):
    """Iterative truncation on precomputed bases (index 0 is the target)."""
    seed = cfg.seed if seed is None else seed
    tau, ks = cfg.tau, cfg.k_shared
    if tau is None:
        raise ValueError("select_sources needs cfg.tau")
    current = tuple(range(1, len(bases)))
    shared = _initial_shared(bases, cfg, seed) if init is None else np.asarray(init, dtype=float)
    trace = []
    for it in range(1, cfg.max_iters + 1):
        scores = {m: trace_alignment(shared, bases[m]) for m in current}
        if tau >= ks:
            kept = current
        elif tau <= 0:
            kept = ()
        else:
            kept = tuple(m for m in current if scores[m] >= ks - tau)
        trace.append({"iteration": it, "alignment": scores, "selected": list(kept)})
        if not kept:
            current = ()
            break
        changed = kept != current
        current = kept
        shared = estimate_shared([bases[0]] + [bases[m] for m in current], cfg,
                                 child_seed(seed, 10))
        if not changed:
            break
    return current, shared, trace


def select_sources(x_all, cfg, init=None, seed=None):
    """Prune sources whose eigenspace disagrees with the shared estimate.

    ``x_all[0]`` is the target. A source ``m`` survives an iteration when
    ``tr(S S^T B_m B_m^T) >= k_shared - tau``; the loop stops when nothing
    changes or after ``max_iters``. With no survivors the target's own
    eigenvectors supply the shared basis.
    """
    x_all = [np.asarray(x, dtype=float) for x in x_all]
    bases = per_network_bases(x_all, [cfg.k_target] + cfg.source_ks(len(x_all) - 1), cfg.n_jobs)
    chosen, shared, trace = select_from_bases(bases, cfg, init, seed)
    if not chosen:
        shared = target_only_basis(x_all[0], cfg).shared
    return SelectionResult(tuple(chosen), shared, trace)


def non_oracle_from_bases(x_target, bases, cfg, init=None, seed=None):
    if len(bases) < 2:
        return target_only_basis(x_target, cfg)
    chosen, _, trace = select_from_bases(bases, cfg, init, seed)
    if not chosen:
        basis = target_only_basis(x_target, cfg)
        basis.trace = trace
        return basis
    basis = oracle_from_bases(x_target, [bases[0]] + [bases[m] for m in chosen], cfg, seed)
    basis.selected = tuple(chosen)
    basis.trace = trace
    return basis


def non_oracle_tdcmm(x_target, sources, cfg, init=None, seed=None):
    """Source selection followed by the private step on the kept sources.

    With no sources, or none kept, the result is the target's own eigenbasis,
    so downstream estimation coincides with single-network Mixed-SCORE.
    """
    x_target = np.asarray(x_target, dtype=float)
    if not sources:
        return target_only_basis(x_target, cfg)
    bases = per_network_bases([x_target] + list(sources),
                              [cfg.k_target] + cfg.source_ks(len(sources)), cfg.n_jobs)
    return non_oracle_from_bases(x_target, bases, cfg, init, seed)


def _holdout_mask(d, frac, seed, rep):
    rng = substream(seed, 30, rep)
    iu, ju = np.triu_indices(d, k=1)
    n_hold = max(1, int(round(frac * iu.size)))
    pick = np.sort(rng.choice(iu.size, size=n_hold, replace=False))
    return iu[pick], ju[pick]


def cross_validate_tau(x_all, cfg, grid, n_repeats=5, holdout=0.1, seed=None, return_scores=False):
    """Choose ``tau`` by held-out Bernoulli log-likelihood on the target.

    Each repeat hides a random ``holdout`` fraction of target node pairs,
    fills them with the density of the visible pairs, runs non-oracle
    transfer and Mixed-SCORE, and scores the hidden pairs. Scores are
    averaged over repeats; a ``tau`` whose fit fails in any repeat scores
    ``-inf``. Ties go to the smallest ``tau``.
    """
    from .mixed_score import full_pipeline

    grid = sorted(float(t) for t in grid)
    if not grid:
        raise ValueError("empty tau grid")
    seed = cfg.seed if seed is None else seed
    x_all = [np.asarray(x, dtype=float) for x in x_all]
    x1 = x_all[0]
    d = x1.shape[0]
    if len(grid) == 1:
        return (grid[0], {grid[0]: float("nan")}) if return_scores else grid[0]
    src_bases = per_network_bases(x_all[1:], cfg.source_ks(len(x_all) - 1), cfg.n_jobs)
    scores = {t: 0.0 for t in grid}
    for rep in range(n_repeats):
        hi, hj = _holdout_mask(d, holdout, seed, rep)
        train = x1.copy()
        visible = np.triu(np.ones((d, d), dtype=bool), k=1)
        visible[hi, hj] = False
        density = float(train[visible].mean()) if visible.any() else 0.0
        train[hi, hj] = density
        train[hj, hi] = density
        bases = [top_eigenpairs(train, cfg.k_target).vectors] + src_bases
        y = x1[hi, hj]
        for t in grid:
            try:
                basis = non_oracle_from_bases(train, bases, replace(cfg, tau=t), seed=seed)
                h = full_pipeline(train, basis.combined, seed=seed).h_hat
            except (TdcmmError, ArithmeticError):
                # a failed fit cannot be scored; it loses to any fitted tau
                scores[t] = -math.inf
                continue
            p = np.clip(h[hi, hj], 1e-6, 1 - 1e-6)
            scores[t] += float(np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))
    scores = {t: s / n_repeats for t, s in scores.items()}
    best = max(grid, key=lambda t: (scores[t], -t))
    return (best, scores) if return_scores else best


def estimate_k_shared(bases, k_max=None):
    """Heuristic K_s: position of the largest ratio gap in the averaged projector's spectrum.

    Only eigenvalues in (0, 1] of the averaged projector are considered and
    ``k_max`` defaults to the smallest basis dimension. This is a
    convenience guess, not an estimator with guarantees.
    """
    if not bases:
        raise EmptySources("need at least one basis")
    k_max = min(b.shape[1] for b in bases) if k_max is None else int(k_max)
    vals = np.linalg.eigvalsh(ProjectorAverage(bases).toarray())[::-1]
    vals = np.clip(vals[: k_max + 1], 1e-12, 1.0)
    if k_max + 1 > vals.size:
        vals = np.append(vals, 1e-12)
    ratios = vals[:k_max] / vals[1 : k_max + 1]
    return int(np.argmax(ratios)) + 1
