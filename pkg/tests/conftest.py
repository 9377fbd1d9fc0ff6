import numpy as np
import pytest

from tdcmm.model import DcmmParams, build_probability_matrix


def planted_params(d=60, k=3, seed=0, n_pure=3, p_diag=0.9, p_off=0.2):
    """Mixed-membership params with ``n_pure`` pure nodes per community."""
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(k), size=d)
    for c in range(k):
        for j in range(n_pure):
            pi[c * n_pure + j] = np.eye(k)[c]
    theta = rng.uniform(0.5, 0.9, size=d)
    p = np.full((k, k), p_off) + (p_diag - p_off) * np.eye(k)
    return DcmmParams(theta, pi, p)


def random_basis(d, k, rng):
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return q


@pytest.fixture
def planted():
    params = planted_params()
    return params, build_probability_matrix(params)


def match_communities(est_pi, true_pi):
    """Column permutation of ``est_pi`` that best matches ``true_pi``."""
    from itertools import permutations

    k = true_pi.shape[1]
    best = min(permutations(range(k)), key=lambda p: np.abs(est_pi[:, p] - true_pi).max())
    return list(best)


# ---- acceptance reporting: one line per criterion at the end of the run

_CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        _CRITERIA[number] = (bool(ok), detail)
        print(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
