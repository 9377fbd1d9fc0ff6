"""Planted scenarios, error metrics and the replicate runner.

Scenario kinds
--------------
``s1``  every source carries the target's shared subspace, lightly perturbed.
``s2``  as ``s1`` with a larger perturbation.
``s3``  a fraction of sources is informative; the rest are built around a
        common, unrelated centre subspace.
"""
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, GenerationInfeasible, TdcmmError
from .model import DcmmParams, build_probability_matrix, sample_adjacency
from .rng import child_seed, substream
from .spectral import deflate, orthonormalize, projector_distance, top_eigenpairs

KINDS = ("s1", "s2", "s3")
DEFAULT_NOISE = {"s1": 0.05, "s2": 0.3, "s3": 0.05}
DEFAULT_STRENGTH = {"s1": 0.15, "s2": 0.15, "s3": 0.5}
METHODS = ("dcmm", "oracle_tdcmm", "non_oracle_tdcmm")


@dataclass(frozen=True)
class ScenarioSpec:
    """Planted-scenario settings.

    Parameters
    ----------
    kind : {"s1", "s2", "s3"}
    d, m_total : int
        Node count and number of networks including the target.
    noise : float, optional
        Perturbation scale of each source's shared basis.
        Defaults: 0.05 (s1), 0.3 (s2), 0.05 (s3).
    frac_informative : float, optional
        Fraction of sources carrying the target's shared subspace; 0.5 for
        s3, 1 otherwise.
    gap_ratio : float
        Planted ratio of the private eigengap after removing the shared part
        to the target's smallest eigenvalue.
    perron : float
        Leading-to-private eigenvalue ratio of the target's connectivity.
    pure_frac, theta_low, theta_high, p_max
        Target membership and degree settings.
    source_strength : float, optional
        Leading source eigenvalue divided by ``d``; 0.15 for s1/s2 (weak
        sources, so pooling keeps paying off) and 0.5 for s3.
    source_ratio, private_ratio : float
        Other shared and private source eigenvalues relative to the leading one.
    hub_sigma : float
        Log-scale spread of the degree profile of s3 contaminated sources.
    """

    kind: str = "s1"
    d: int = 50
    m_total: int = 20
    k_target: int = 4
    k_shared: int = 2
    k_source: int = 4
    noise: float = None
    frac_informative: float = None
    seed: int = 0
    gap_ratio: float = 6.0
    perron: float = 2.05
    p_max: float = 1.0
    pure_frac: float = 0.9
    theta_low: float = 0.8
    theta_high: float = 1.0
    source_strength: float = None
    source_ratio: float = 0.35
    private_ratio: float = 0.2
    hub_sigma: float = 1.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.noise is None:
            object.__setattr__(self, "noise", DEFAULT_NOISE[kind])
        if self.source_strength is None:
            object.__setattr__(self, "source_strength", DEFAULT_STRENGTH[kind])
        if self.frac_informative is None:
            object.__setattr__(self, "frac_informative", 0.5 if kind == "s3" else 1.0)
        if self.d < 10:
            raise ValueError("d must be >= 10")
        if self.m_total < 2:
            raise ValueError("m_total must be >= 2")
        if not 1 <= self.k_shared < self.k_target:
            raise ValueError("need 1 <= k_shared < k_target")
        if self.k_source < self.k_shared:
            raise ValueError("k_source must be >= k_shared")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if not 0 < self.frac_informative <= 1:
            raise ValueError("frac_informative must lie in (0, 1]")
        if self.gap_ratio < 1 or self.perron <= 1:
            raise ValueError("gap_ratio must be >= 1 and perron > 1")

    @property
    def n_informative(self):
        """Round-half-up of ``frac_informative * (m_total - 1)``."""
        return int(math.floor(self.frac_informative * (self.m_total - 1) + 0.5))

    @property
    def bound(self):
        """Per-source bound on the shared-projector distance to the target."""
        return 2.0 * self.noise * math.sqrt(self.k_shared)


@dataclass
class Scenario:
    spec: ScenarioSpec
    target: np.ndarray
    sources: list
    params: DcmmParams
    h_target: np.ndarray
    h_sources: list
    shared: np.ndarray
    informative: tuple
    centre: np.ndarray = None
    source_shared: list = field(default_factory=list)

    @property
    def x_all(self):
        return [self.target] + list(self.sources)


def d_metric(h_hat, h_true):
    """``||H_hat - H||_F / d``."""
    h_hat = np.asarray(h_hat, dtype=float)
    h_true = np.asarray(h_true, dtype=float)
    if h_hat.shape != h_true.shape or h_hat.ndim != 2:
        raise DimensionMismatch(f"shapes differ: {h_hat.shape} vs {h_true.shape}")
    return float(np.linalg.norm(h_hat - h_true) / h_true.shape[0])


def _contrast_basis(k):
    """Orthogonal ``k x k`` matrix whose first column is constant."""
    if k & (k - 1) == 0:
        return la.hadamard(k).astype(float) / math.sqrt(k)
    v = np.zeros((k, k))
    v[:, 0] = 1 / math.sqrt(k)
    for j in range(1, k):
        v[:j, j] = 1.0
        v[j, j] = -j
        v[:, j] /= math.sqrt(j * (j + 1))
    return v


def _planted_target(spec, rng):
    d, k, ks = spec.d, spec.k_target, spec.k_shared
    theta = rng.uniform(spec.theta_low, spec.theta_high, d)
    pi = np.zeros((d, k))
    n_pure = max(k, int(round(spec.pure_frac * d)))
    pi[np.arange(n_pure), np.arange(n_pure) % k] = 1.0
    pi[n_pure:] = rng.dirichlet(np.ones(k), d - n_pure)
    v = _contrast_basis(k)
    g = pi.T @ (theta[:, None] ** 2 * pi)
    # N = (V^T G V)^{-1/2} makes U = Theta Pi V N orthonormal while V N stays
    # close to the balanced contrasts V.
    w, q = la.eigh(v.T @ g @ v)
    vn = v @ ((q / np.sqrt(w)) @ q.T)
    weak = 1.0 / spec.gap_ratio
    # entry clipping and the N correction shift the realised ratio a little;
    # rescale the weak eigenvalue until it lands in [gap_ratio, 1.01 gap_ratio]
    for _ in range(30):
        params, h, shared = _target_from_contrasts(spec, theta, pi, vn, weak)
        ratio = eigengap_report(h, shared, k, ks)["ratio"]
        if spec.gap_ratio <= ratio <= 1.01 * spec.gap_ratio:
            return params, h, shared
        weak *= ratio / (1.005 * spec.gap_ratio)
    raise GenerationInfeasible(f"planted gap ratio {ratio:.3g} misses {spec.gap_ratio:.3g}")


def _target_from_contrasts(spec, theta, pi, vn, weak):
    k, ks = spec.k_target, spec.k_shared
    # eigenvalues: Perron first, then private contrasts, then the weak shared ones
    mu = np.ones(k)
    mu[0] = spec.perron
    mu[k - ks + 1 :] = weak
    core = (vn * mu) @ vn.T
    core = 0.5 * (core + core.T)
    if core.min() < -0.05 * core.max():
        raise GenerationInfeasible("planted connectivity has negative entries")
    core = np.clip(core, 0.0, None)
    params = DcmmParams(theta=theta, pi=pi, p_mat=core * (spec.p_max / core.max()))
    h = build_probability_matrix(params)
    # shared roles: the leading (Perron) direction and the weakest ones
    vecs = top_eigenpairs(h, k).vectors
    return params, h, vecs[:, [0] + list(range(k - ks + 1, k))]


def _perturb(basis, noise, rng):
    d = basis.shape[0]
    return orthonormalize(basis + noise * rng.standard_normal(basis.shape) / math.sqrt(d))


def _source_matrix(spec, shared, degrees, rng, saturate=0.0):
    """Source probabilities with eigenbasis ``[shared | private]``.

    Private directions are degree-weighted random sign vectors. The leading
    eigenvalue is ``source_strength * d``, the other shared ones are
    ``source_ratio`` times it and the private ones ``private_ratio`` times
    it. Eigenvalues are then scaled down so that at most a ``saturate``
    fraction of entries exceeds one before clipping.
    """
    d, ks, km = spec.d, spec.k_shared, spec.k_source
    cols = [shared]
    if km > ks:
        raw = degrees[:, None] * rng.choice([-1.0, 1.0], size=(d, km - ks))
        raw -= shared @ (shared.T @ raw)
        cols.append(orthonormalize(raw))
    u = np.hstack(cols)
    lead = spec.source_strength * d
    lam = np.concatenate([[lead], np.full(ks - 1, spec.source_ratio * lead),
                          np.full(km - ks, spec.private_ratio * lead)])
    h = (u * lam) @ u.T
    h = 0.5 * (h + h.T)
    top = np.quantile(h, 1.0 - saturate) if saturate > 0 else h.max()
    if top > 1.0:
        h /= top
    return np.clip(h, 0.0, 1.0)


def _informative_shared(spec, base, rng):
    """Perturbed copy of ``base`` whose distance to it respects the bound."""
    for _ in range(20):
        cand = _perturb(base, spec.noise, rng)
        if projector_distance(cand, base) <= spec.bound + 1e-10:
            return cand
    raise GenerationInfeasible("could not draw a source within the construction bound")


def _contaminated_centre(spec, shared, seed):
    """Hub-type degree profile and a centre subspace built on it."""
    d, ks = spec.d, spec.k_shared
    need = max(1.0, 3.0 * spec.bound)
    for attempt in range(20):
        rng = substream(seed, 2, attempt)
        hub = np.exp(spec.hub_sigma * rng.standard_normal(d))
        raw = np.column_stack([hub, hub[:, None] * rng.standard_normal((d, ks - 1))])
        centre = orthonormalize(raw)
        if centre[:, 0].sum() < 0:
            centre[:, 0] *= -1
        if projector_distance(centre, shared) >= need:
            return hub, centre
    raise GenerationInfeasible("contaminated centre too close to the target's shared subspace")


def generate_scenario(spec):
    """Planted target plus ``m_total - 1`` sources for one replicate.

    Random streams are keyed so the target and source ``m`` do not depend
    on ``m_total``; growing M only appends sources.
    """
    seed = spec.seed
    params, h1, shared = _planted_target(spec, substream(seed, 0))
    theta = params.theta
    target = sample_adjacency(h1, child_seed(seed, 0, 1))
    n_src = spec.m_total - 1
    n_inf = spec.n_informative
    hub, centre = (None, None)
    if n_inf < n_src:
        hub, centre = _contaminated_centre(spec, shared, seed)
    sources, h_sources, planted = [], [], []
    for m in range(1, n_src + 1):
        rng = substream(seed, 1, m)
        if m <= n_inf:
            s_m = _informative_shared(spec, shared, rng)
            h_m = _source_matrix(spec, s_m, theta, rng)
        else:
            # hub-dominated networks: let the hub-hub block saturate
            s_m = _informative_shared(spec, centre, rng)
            h_m = _source_matrix(spec, s_m, hub, rng, saturate=0.02)
        planted.append(s_m)
        h_sources.append(h_m)
        sources.append(sample_adjacency(h_m, child_seed(seed, 1, m, 1)))
    return Scenario(
        spec=spec,
        target=target,
        sources=sources,
        params=params,
        h_target=h1,
        h_sources=h_sources,
        shared=shared,
        informative=tuple(range(1, n_inf + 1)),
        centre=centre,
        source_shared=planted,
    )


def eigengap_report(h, shared, k_target, k_shared):
    """Smallest target eigenvalue and the private eigengap after deflation.

    Eigenvalues are ranked by magnitude. Returns ``delta = |lambda_K1(H)|``,
    ``d_p = |lambda_{K1-Ks}(Hp)| - |lambda_{K1+1}(Hp)|`` with
    ``Hp = (I - S S^T) H (I - S S^T)``, and ``ratio = d_p / delta``.
    """
    h = np.asarray(h, dtype=float)
    shared = np.asarray(shared, dtype=float).reshape(h.shape[0], -1)
    if not 0 <= k_shared < k_target < h.shape[0]:
        raise ValueError("need 0 <= k_shared < k_target < d")
    mags = np.sort(np.abs(la.eigvalsh(h)))[::-1]
    hp = deflate(h, shared, shared)
    hp_mags = np.sort(np.abs(la.eigvalsh(0.5 * (hp + hp.T))))[::-1]
    delta = float(mags[k_target - 1])
    d_p = float(hp_mags[k_target - k_shared - 1] - hp_mags[k_target])
    return {
        "delta": delta,
        "d_p": d_p,
        "ratio": d_p / delta if delta > 0 else math.inf,
        "lambda_next": float(hp_mags[k_target]),
    }


# ---------------------------------------------------------------- runner

CSV_FIELDS = ("method", "scenario", "d", "M", "replicate", "error_h",
              "n_selected", "precision", "recall", "error")


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: _fmt(row.get(k)) for k in CSV_FIELDS})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def cells(self):
        out = {}
        for row in self.rows:
            key = (row["method"], row["scenario"], row["d"], row["M"])
            out.setdefault(key, []).append(row)
        return out

    def summary(self):
        """Per (method, scenario, d, M) statistics of ``error_h`` over successful replicates."""
        out = []
        for (method, kind, d, m), rows in sorted(self.cells().items()):
            errs = np.array([r["error_h"] for r in rows if not r.get("error")], dtype=float)
            n = errs.size
            entry = {"method": method, "scenario": kind, "d": d, "M": m,
                     "n": n, "n_failed": len(rows) - n}
            if n:
                sd = float(errs.std(ddof=1)) if n > 1 else 0.0
                entry.update(mean=float(errs.mean()), median=float(np.median(errs)),
                             std=sd, se=sd / math.sqrt(n))
            out.append(entry)
        return out

    def errors(self, method, kind=None, d=None, m=None):
        """``error_h`` array for one method, in replicate order."""
        rows = [r for r in self.rows if r["method"] == method
                and (kind is None or r["scenario"] == kind)
                and (d is None or r["d"] == d) and (m is None or r["M"] == m)]
        return np.array([r["error_h"] for r in rows], dtype=float)

    def summary_json(self, path=None):
        text = json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def selection_scores(selected, truth):
    """Precision (1.0 when nothing is selected) and recall of a selected set."""
    sel, tru = set(selected), set(truth)
    precision = len(sel & tru) / len(sel) if sel else 1.0
    recall = len(sel & tru) / len(tru) if tru else 1.0
    return precision, recall


def _transfer_config(spec, cfg):
    from .transfer import TransferConfig

    if cfg is None:
        return TransferConfig(k_target=spec.k_target, k_shared=spec.k_shared,
                              k_sources=spec.k_source, tau=spec.k_shared / 2)
    if cfg.tau is None:
        cfg = replace(cfg, tau=cfg.k_shared / 2)
    return cfg


def run_replicate(spec, methods, cfg=None, cv_grid=None):
    """Generate one scenario and score every method; failures become rows."""
    from .mixed_score import full_pipeline
    from .transfer import (cross_validate_tau, non_oracle_from_bases,
                           oracle_from_bases, per_network_bases)

    cfg = _transfer_config(spec, cfg)
    method_seed = child_seed(spec.seed, 100)
    cfg = replace(cfg, seed=method_seed)
    base = {"scenario": spec.kind, "d": spec.d, "M": spec.m_total}
    try:
        scen = generate_scenario(spec)
    except (TdcmmError, ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
        return [dict(base, method=m, error_h=math.nan, n_selected=None, precision=None,
                     recall=None, error=f"{type(err).__name__}@generate", wall_time=0.0)
                for m in methods]
    bases = None
    rows = []
    for method in methods:
        row = dict(base, method=method, error_h=math.nan, n_selected=None,
                   precision=None, recall=None, error="")
        t0 = time.perf_counter()
        try:
            if method == "dcmm":
                est = full_pipeline(scen.target, k=spec.k_target, seed=method_seed)
            else:
                if bases is None:
                    bases = per_network_bases(scen.x_all,
                                              [cfg.k_target] + cfg.source_ks(len(scen.sources)))
                if method == "oracle_tdcmm":
                    tb = oracle_from_bases(scen.target, bases, cfg)
                elif method == "non_oracle_tdcmm":
                    mcfg = cfg
                    if cv_grid:
                        mcfg = replace(cfg, tau=cross_validate_tau(scen.x_all, cfg, cv_grid))
                    tb = non_oracle_from_bases(scen.target, bases, mcfg)
                    prec, rec = selection_scores(tb.selected, scen.informative)
                    row.update(n_selected=len(tb.selected), precision=prec, recall=rec)
                else:
                    raise ValueError(f"unknown method {method!r}")
                est = full_pipeline(scen.target, tb.combined, seed=method_seed)
            row["error_h"] = d_metric(est.h_hat, scen.h_target)
        except (TdcmmError, ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
            stage = getattr(err, "stage", None)
            row["error"] = f"{type(err).__name__}" + (f"@{stage}" if stage else "")
        row["wall_time"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def _task(spec, methods, cfg, cv_grid, rep):
    from threadpoolctl import threadpool_limits

    with threadpool_limits(1):
        rows = run_replicate(spec, methods, cfg, cv_grid)
    for r in rows:
        r["replicate"] = rep
    return rows


def run_experiment(specs, methods=METHODS, reps=200, cfg=None, seed=0, cv_grid=None, n_jobs=1):
    """Run every method on ``reps`` replicates of every scenario spec.

    Replicate ``r`` uses data seed ``child_seed(seed, r)`` in every cell, so
    cells that differ only in M share their target network. Each replicate
    runs single-threaded; ``n_jobs > 1`` spreads replicates over processes
    and merges them in a fixed order, so the rows do not depend on it.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if isinstance(specs, ScenarioSpec):
        specs = [specs]
    methods = tuple(methods)
    tasks = [(replace(spec, seed=child_seed(seed, r)), r) for spec in specs for r in range(reps)]
    if n_jobs == 1:
        chunks = [_task(s, methods, cfg, cv_grid, r) for s, r in tasks]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=n_jobs)(delayed(_task)(s, methods, cfg, cv_grid, r) for s, r in tasks)
    return ExperimentReport([row for chunk in chunks for row in chunk])


def sketch_benchmark(d=2000, k_shared=2, k_network=4, n_networks=20, n_sketches=10, q=8,
                     repeats=3, seed=0):
    """Wall time of the two-step sketch against a dense eigendecomposition.

    Networks share a ``k_shared``-dimensional subspace and carry random
    private directions. The sketch works on the averaged projector
    matrix-free; the dense baseline runs ``eigh`` on the materialised
    average. Times are the median over ``repeats`` runs.

    Returns
    -------
    dict
        ``sketch_s``, ``dense_s``, their ``ratio`` and the projector
        distance between the two shared estimates.
    """
    from .spectral import ProjectorAverage, SketchConfig
    from .transfer import TransferConfig, estimate_shared

    rng = substream(seed, 50)
    common = orthonormalize(rng.standard_normal((d, k_shared)))
    bases = []
    for _ in range(n_networks):
        raw = rng.standard_normal((d, k_network - k_shared))
        raw -= common @ (common.T @ raw)
        bases.append(np.hstack([common, orthonormalize(raw)]))
    cfg = TransferConfig(k_target=k_network, k_shared=k_shared, seed=seed,
                         sketch=SketchConfig(k_shared, n_sketches=n_sketches, q=q, seed=seed))
    dense_mat = ProjectorAverage(bases).toarray()
    sketch_t, dense_t = [], []
    for _ in range(repeats):
        t0 = time.perf_counter()
        est = estimate_shared(bases, cfg)
        sketch_t.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        vals, vecs = la.eigh(dense_mat)
        dense_t.append(time.perf_counter() - t0)
    exact = vecs[:, np.argsort(np.abs(vals))[::-1][:k_shared]]
    s, e = float(np.median(sketch_t)), float(np.median(dense_t))
    return {"sketch_s": s, "dense_s": e, "ratio": s / e,
            "distance": float(projector_distance(est, exact))}
