import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdcmm.errors import DimensionMismatch, KOutOfRange, NotSymmetric, RankCollapse, WidthTooSmall
from tdcmm.spectral import (
    SketchConfig,
    average_projector,
    deflate,
    empty_basis,
    power_sketch,
    projector,
    projector_distance,
    sketch_top_subspace,
    top_eigenpairs,
    trace_alignment,
)

from conftest import random_basis

seeds = st.integers(0, 2**32 - 1)


def noisy_sigma(d, k, gap, rng, tail="uniform"):
    """Symmetric matrix with top-k eigenvalues 1 and a tail at most 1/gap.

    ``tail`` is "uniform" (draws on [0, 1/gap]), "flat" (all 1/gap) or
    "geometric" (1/gap halving each step).
    """
    q = random_basis(d, d, rng)
    n = d - k
    rest = {
        "uniform": rng.uniform(0, 1 / gap, n),
        "flat": np.full(n, 1 / gap),
        "geometric": 0.5 ** np.arange(n) / gap,
    }[tail]
    return (q * np.concatenate([np.ones(k), rest])) @ q.T, q[:, :k]


# ---- top_eigenpairs

def test_diag_descending():
    eig = top_eigenpairs(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(eig.values, [3, 2])
    np.testing.assert_allclose(eig.vectors, np.eye(3)[:, :2], atol=1e-15)


def test_abs_ordering():
    eig = top_eigenpairs(np.diag([1.0, -5.0]), 1)
    assert eig.values[0] == pytest.approx(-5)
    np.testing.assert_allclose(eig.vectors[:, 0], [0, 1], atol=1e-15)


def test_full_reconstruction():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((8, 8))
    s = a + a.T
    eig = top_eigenpairs(s, 8)
    rebuilt = (eig.vectors * eig.values) @ eig.vectors.T
    assert np.abs(rebuilt - s).max() < 1e-9


def test_sign_rule():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((10, 10))
    eig = top_eigenpairs(a + a.T, 4)
    for v in eig.vectors.T:
        assert v[np.argmax(np.abs(v))] > 0


def test_eig_errors():
    with pytest.raises(NotSymmetric):
        top_eigenpairs(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)
    with pytest.raises(KOutOfRange):
        top_eigenpairs(np.eye(3), 4)
    with pytest.raises(KOutOfRange):
        top_eigenpairs(np.eye(3), 0)


# ---- average_projector

def test_average_single_is_idempotent():
    b = random_basis(9, 3, np.random.default_rng(2))
    p = average_projector([b])
    assert np.abs(p @ p - p).max() < 1e-10


def test_average_identical():
    b = random_basis(9, 3, np.random.default_rng(3))
    vals = np.linalg.eigvalsh(average_projector([b, b]))
    np.testing.assert_allclose(np.sort(vals)[-3:], 1, atol=1e-12)
    np.testing.assert_allclose(np.sort(vals)[:-3], 0, atol=1e-12)


def test_average_orthogonal():
    e = np.eye(2)
    np.testing.assert_allclose(average_projector([e[:, :1], e[:, 1:]]), 0.5 * np.eye(2))


def test_average_mismatch():
    with pytest.raises(DimensionMismatch):
        average_projector([np.eye(3)[:, :1], np.eye(4)[:, :1]])


# ---- sketching

def test_sketch_exact_projector():
    rng = np.random.default_rng(4)
    b = random_basis(30, 3, rng)
    for width in (3, 5, 12):
        got = sketch_top_subspace(projector(b), width, 3, seed=width)
        assert projector_distance(got, b) < 1e-8


def test_sketch_errors():
    with pytest.raises(RankCollapse):
        sketch_top_subspace(np.zeros((10, 10)), 4, 2, seed=0)
    with pytest.raises(WidthTooSmall):
        sketch_top_subspace(np.eye(10), 1, 2, seed=0)


def test_sketch_gap_100():
    # a single unpowered sketch is only this accurate when the tail decays;
    # flat tails are covered by the power sketch below
    d, k = 60, 3
    dists = []
    for s in range(100):
        sigma, top = noisy_sigma(d, k, 100, np.random.default_rng(s), "geometric")
        dists.append(projector_distance(sketch_top_subspace(sigma, 2 * k, k, seed=s), top))
    assert np.median(dists) < 0.05


def test_power_sketch_gap_100_flat_tail():
    d, k = 60, 3
    dists = []
    for s in range(100):
        sigma, top = noisy_sigma(d, k, 100, np.random.default_rng(s), "flat")
        dists.append(projector_distance(power_sketch(sigma, SketchConfig.default(d, k), seed=s), top))
    assert np.median(dists) < 0.05


def test_sketch_deterministic():
    sigma = projector(random_basis(20, 2, np.random.default_rng(5)))
    a = sketch_top_subspace(sigma + 0.01 * np.eye(20), 6, 2, seed=9)
    b = sketch_top_subspace(sigma + 0.01 * np.eye(20), 6, 2, seed=9)
    assert np.array_equal(a, b)


def test_power_idempotent_any_q():
    b = random_basis(40, 2, np.random.default_rng(6))
    p = projector(b)
    one = power_sketch(p, SketchConfig(2, q=1, p_prime=9), seed=3)
    five = power_sketch(p, SketchConfig(2, q=5, p_prime=9), seed=3)
    assert projector_distance(one, five) < 1e-8
    assert projector_distance(one, b) < 1e-8


def test_power_finds_intersection():
    d, ks = 100, 2
    rng = np.random.default_rng(7)
    q = random_basis(d, ks + 4, rng)
    common = q[:, :ks]
    a = np.hstack([common, q[:, ks:ks + 2]])
    b = np.hstack([common, q[:, ks + 2:]])
    sigma = average_projector([a, b])
    cfg = SketchConfig.default(d, ks)
    assert cfg.q == math.ceil(math.log(d))
    assert projector_distance(power_sketch(sigma, cfg, seed=1), common) < 0.1


def test_power_more_q_not_worse():
    d, k = 80, 2
    lo, hi = [], []
    for s in range(50):
        rng = np.random.default_rng(100 + s)
        sigma, top = noisy_sigma(d, k, 3, rng)
        lo.append(projector_distance(power_sketch(sigma, SketchConfig(k, q=2), seed=s), top))
        hi.append(projector_distance(power_sketch(sigma, SketchConfig(k, q=4), seed=s), top))
    assert np.median(hi) <= np.median(lo)


def test_full_width_pipeline_consistency():
    d = 12
    b = random_basis(d, 3, np.random.default_rng(8))
    cfg = SketchConfig(3, n_sketches=1, q=1, p=d, p_prime=d)
    got = power_sketch(projector(b), cfg, seed=0)
    assert projector_distance(got, top_eigenpairs(projector(b), 3).vectors) < 1e-8


def test_sketch_config_invariants():
    with pytest.raises(ValueError):
        SketchConfig(2, q=3, p=5)
    with pytest.raises(ValueError):
        SketchConfig(2, p_prime=4)
    cfg = SketchConfig(2, q=3)
    assert cfg.p == max(4, 2 + 24 - 1) and cfg.p_prime == 9


# ---- distances

def test_distance_examples():
    e = np.eye(2)
    b = random_basis(6, 2, np.random.default_rng(9))
    assert projector_distance(b, b) < 1e-14
    assert projector_distance(e[:, :1], e[:, 1:]) == pytest.approx(math.sqrt(2))
    rot = random_basis(2, 2, np.random.default_rng(10))
    assert projector_distance(b, b @ rot) < 1e-12


def test_alignment_examples():
    b = random_basis(7, 3, np.random.default_rng(11))
    assert trace_alignment(b, b) == pytest.approx(3)
    e = np.eye(4)
    assert trace_alignment(e[:, :2], e[:, 2:]) == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 15), st.integers(0, 5), st.integers(0, 5), seeds)
def test_distance_alignment_identity(d, ka, kb, seed):
    rng = np.random.default_rng(seed)
    ka, kb = min(ka, d), min(kb, d)
    a, b = random_basis(d, ka, rng), random_basis(d, kb, rng)
    lhs = projector_distance(a, b) ** 2
    t = trace_alignment(a, b)
    assert abs(lhs - (ka + kb - 2 * t)) < 1e-10
    assert -1e-12 <= t <= min(ka, kb) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 15), st.data(), seeds)
def test_projector_decomposition(d, data, seed):
    rng = np.random.default_rng(seed)
    k = data.draw(st.integers(1, d))
    ks = data.draw(st.integers(0, k))
    xi = random_basis(d, k, rng)
    s, p = xi[:, :ks], xi[:, ks:]
    assert np.linalg.norm(projector(xi) - projector(s) - projector(p)) < 1e-10
    assert np.linalg.norm(projector(s) @ projector(p)) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 15), st.integers(0, 4), seeds)
def test_deflation_idempotent(d, k, seed):
    rng = np.random.default_rng(seed)
    k = min(k, d)
    a = rng.standard_normal((d, d))
    x = a + a.T
    b = random_basis(d, k, rng)
    once = deflate(x, b, b)
    assert np.abs(deflate(once, b, b) - once).max() < 1e-10


def test_deflate_examples():
    rng = np.random.default_rng(12)
    b = random_basis(8, 3, rng)
    x = (b * [3.0, -1.0, 2.0]) @ b.T
    assert np.abs(deflate(x, b, b)).max() < 1e-10
    np.testing.assert_array_equal(deflate(x, empty_basis(8), empty_basis(8)), x)
    v = np.eye(8)[:, :1]
    w = np.eye(8)[:, 1:2]
    vv = v @ v.T
    assert np.abs(deflate(vv, v, v)).max() < 1e-15
    np.testing.assert_array_equal(deflate(vv, w, w), vv)
