import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdrsplit.errors import InvalidInputError, NumericalFailureError
from fdrsplit.linalg import Subspace, orthonormalize, project, solve_spd, spectral_norm, spectral_radius


@given(seed=st.integers(0, 10**6), n=st.integers(2, 8), k=st.integers(0, 8))
def test_subspace_projector_properties(seed, n, k):
    r = np.random.default_rng(seed)
    s = Subspace.span(r.standard_normal((n, min(k, n))), n)
    p = s.projector
    np.testing.assert_allclose(p @ p, p, atol=1e-12)
    np.testing.assert_allclose(p, p.T, atol=1e-14)
    x = r.standard_normal(n)
    np.testing.assert_allclose(project(s, x) + s.project_perp(x), x, atol=1e-12)
    c = s.complement()
    assert c.dim + s.dim == n
    np.testing.assert_allclose(c.projector + p, np.eye(n), atol=1e-12)


def test_subspace_constructors():
    assert Subspace.whole(4).dim == 4
    assert Subspace.zero(4).dim == 0
    s = Subspace.span(np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]]), 3)
    assert s.dim == 1  # dependent columns collapse
    np.testing.assert_allclose(s.project([1.0, 5.0, 7.0]), [1.0, 0.0, 0.0])
    with pytest.raises(InvalidInputError):
        Subspace.span(np.ones((2, 1)), 3)


def test_orthonormalize_dependent_vectors():
    q = orthonormalize(np.array([[1.0, 1.0, 2.0], [0.0, 1.0, 1.0]]), 2)
    assert q.shape == (2, 2)
    np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-14)


@given(seed=st.integers(0, 10**6), m=st.integers(1, 8), n=st.integers(1, 8))
def test_spectral_norm_matches_svd(seed, m, n):
    a = np.random.default_rng(seed).standard_normal((m, n))
    assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-6)


def test_spectral_norm_spot_values():
    assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)
    assert spectral_norm(np.zeros((2, 2))) == 0.0
    # all-ones start lies in the null space
    assert spectral_norm(np.array([[1.0, -1.0]])) == pytest.approx(np.sqrt(2))


def test_spectral_norm_reports_nonconvergence():
    a = np.diag([1.0, 0.999999])
    a[0, 1] = 1e-3
    with pytest.raises(NumericalFailureError) as e:
        spectral_norm(a, tol=1e-16, max_iter=2)
    assert e.value.last > 0


def test_spectral_radius():
    assert spectral_radius(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(1.0)
    assert spectral_radius(np.diag([0.3, -0.6])) == pytest.approx(0.6)
    with pytest.raises(InvalidInputError):
        spectral_radius(np.ones((2, 3)))


@given(seed=st.integers(0, 10**6), n=st.integers(1, 6))
def test_solve_spd(seed, n):
    r = np.random.default_rng(seed)
    b = r.standard_normal((n, n))
    a = b @ b.T + n * np.eye(n)
    rhs = r.standard_normal(n)
    np.testing.assert_allclose(a @ solve_spd(a, rhs), rhs, atol=1e-9)


def test_solve_spd_rejects_bad_matrices():
    with pytest.raises(InvalidInputError):
        solve_spd(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(InvalidInputError):
        solve_spd(-np.eye(2), np.ones(2))


def test_spectral_norm_contract_examples():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert spectral_norm(np.diag([2.0, 0.5])) == pytest.approx(2.0)
    assert spectral_norm(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(1.0)


@given(seed=st.integers(0, 10**6))
def test_spectral_norm_bounds_probes(seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((6, 5))
    s = spectral_norm(a)
    for v in r.standard_normal((50, 5)):
        assert np.linalg.norm(a @ v) <= s * np.linalg.norm(v) * (1 + 1e-9)
