import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import small_lasso
from fdrsplit.diagnostics import (
    Anchor,
    audit_lemma34,
    bregman,
    bregman_series,
    detect_identification,
    first_permanent_match,
    fit_log_slope,
    make_anchor,
)
from fdrsplit.errors import InvalidInputError
from fdrsplit.functions import SmoothQuadratic
from fdrsplit.linalg import Subspace
from fdrsplit.regularizers import L1Norm, zero_regularizer
from fdrsplit.solvers import (
    FBProblem,
    FDRProblem,
    RunOptions,
    Schedule,
    fb_run,
    fdr_run,
    reference_run,
)


def lasso_setup(seed=0, schedule=None):
    k, f, basis = small_lasso(seed)
    p = FDRProblem.build(k, f, L1Norm(0.1), Subspace.span(basis, k.shape[1]))
    s = schedule(p.smooth.beta_v) if schedule else Schedule.constant(p.smooth.beta_v)
    ref = reference_run(lambda o: fdr_run(p, s, o), RunOptions(max_iter=5000, residual_tol=1e-15))
    return p, s, make_anchor(ref, s.gamma, p.v)


def test_bregman_vanishes_at_solution():
    p, _, a = lasso_setup()
    assert abs(bregman(a, p, a.x_star)) <= 1e-12


def test_bregman_one_dimensional_example():
    # F = x^2/2, R = 0, V = R: D(y) = y^2/2 - 0 at x* = 0
    q = SmoothQuadratic(np.eye(1), np.zeros(1))
    fb = FBProblem(q, zero_regularizer(1))
    a = Anchor(np.zeros(1), np.zeros(1), 1.0, np.zeros(1))
    assert bregman(a, fb, np.array([2.0])) == pytest.approx(2.0)


def test_bregman_on_whole_space_is_objective_gap():
    k, f, _ = small_lasso(1)
    fb = FBProblem(SmoothQuadratic(k, f), L1Norm(0.1))
    s = Schedule.constant(fb.beta)
    ref = reference_run(lambda o: fb_run(fb, s, o), RunOptions(max_iter=5000, residual_tol=1e-15))
    a = make_anchor(ref, s.gamma)
    y = np.random.default_rng(0).standard_normal(fb.dim)
    assert bregman(a, fb, y) == pytest.approx(fb.objective(y) - fb.objective(a.x_star), rel=1e-12)


def test_bregman_is_infinite_outside_domain():
    from fdrsplit.regularizers import SubspaceIndicator

    v = Subspace.span(np.array([[1.0], [0.0]]), 2)
    p = FDRProblem.build(np.eye(2), np.zeros(2), SubspaceIndicator(v), Subspace.whole(2))
    a = Anchor(np.zeros(2), np.zeros(2), 1.0, np.zeros(2))
    assert bregman(a, p, np.array([0.0, 1.0])) == np.inf


@given(seed=st.integers(0, 10**6))
def test_bregman_is_nonnegative(seed):
    p, _, a = _CACHED
    y = np.random.default_rng(seed).standard_normal(p.dim) * 2
    assert bregman(a, p, y) >= -1e-9


_CACHED = lasso_setup(3)


def test_series_best_is_running_minimum():
    p, s, a = lasso_setup()
    tr = fdr_run(p, s, RunOptions(max_iter=300))
    ser = bregman_series(a, p, tr)
    assert np.all(np.diff(ser.best) <= 0)
    np.testing.assert_allclose(ser.best, np.minimum.accumulate(ser.d))
    assert np.all(ser.d >= -1e-9) and np.all(ser.ergodic >= -1e-9)
    assert not ser.approximate
    assert ser.at(300) == 300
    with pytest.raises(KeyError):
        ser.at(301)
    tr = fdr_run(p, s, RunOptions(max_iter=300, record_stride=7))
    assert bregman_series(a, p, tr).approximate


@pytest.mark.parametrize("schedule", [None, lambda b: Schedule.geometric(b, 0.5),
                                      lambda b: Schedule.power_decay(b, 2.0, k_offset=1)])
def test_audit_has_no_violation(schedule):
    p, s, a = lasso_setup(2, schedule)
    tr = fdr_run(p, s, RunOptions(max_iter=400))
    rep = audit_lemma34(a, p, tr, s)
    assert rep.max_violation <= 1e-8
    assert rep.slack.size == 400


def test_audit_at_fixed_point_is_tight():
    p, s, a = lasso_setup()
    tr = fdr_run(p, s, RunOptions(max_iter=5, z0=a.z_star))
    rep = audit_lemma34(a, p, tr, s)
    np.testing.assert_allclose(rep.slack, 0.0, atol=1e-12)


def test_audit_preconditions():
    p, s, a = lasso_setup()
    with pytest.raises(InvalidInputError):
        audit_lemma34(a, p, fdr_run(p, s, RunOptions(max_iter=10, record_stride=2)), s)
    r = Schedule.constant(s.gamma, lam=0.5)
    with pytest.raises(InvalidInputError):
        audit_lemma34(a, p, fdr_run(p, r, RunOptions(max_iter=10)), r)


def test_make_anchor_rejects_unconverged_reference():
    p, s, _ = lasso_setup()
    with pytest.raises(InvalidInputError):
        make_anchor(fdr_run(p, s, RunOptions(max_iter=3)), s.gamma, p.v)


def test_anchor_dual_vector_is_orthogonal_to_v():
    p, _, a = lasso_setup()
    assert np.linalg.norm(p.v.project(a.v_star)) <= 1e-10
    np.testing.assert_allclose(p.v.project(a.z_star), a.x_star, atol=1e-12)


def test_first_permanent_match():
    assert first_permanent_match(list("abbab"), "b") == 4
    assert first_permanent_match(list("abbbb"), "b") == 1
    assert first_permanent_match(list("bbb"), "b") == 0
    assert first_permanent_match(list("bba"), "b") is None
    assert first_permanent_match([], "b") is None


def test_identification_on_lasso():
    p, s, a = lasso_setup()
    tr = fdr_run(p, s, RunOptions(max_iter=2000))
    target = p.reg.signature(a.x_star)
    rep = detect_identification(tr, p.reg, target)
    assert rep.identified
    assert p.reg.signature(tr.u[rep.record_index]) == target
    if rep.record_index > 0:
        assert p.reg.signature(tr.u[rep.record_index - 1]) != target


def test_fit_log_slope_examples():
    k = np.arange(100)
    assert fit_log_slope((k, 0.9**k)) == pytest.approx(0.9, rel=1e-12)
    assert fit_log_slope((k, np.full(100, 3.0))) == pytest.approx(1.0)
    assert fit_log_slope([(0, 1.0), (10, 1e-5)]) == pytest.approx(10**-0.5)
    assert fit_log_slope((k, 0.5**k * np.where(k < 50, 100.0, 1.0)), window=(50, 99)) == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        fit_log_slope((k, 0.9**k - 0.5))
    with pytest.raises(InvalidInputError):
        fit_log_slope((k, 0.9**k), window=(5, 5))


@given(rho=st.floats(0.1, 0.99), seed=st.integers(0, 1000))
def test_fit_log_slope_with_noise(rho, seed):
    k = np.arange(200)
    noise = np.exp(0.01 * np.random.default_rng(seed).standard_normal(200))
    assert fit_log_slope((k, rho**k * noise)) == pytest.approx(rho, rel=1e-3)


def test_bregman_rows_match_single_evaluations():
    from fdrsplit.diagnostics import bregman_rows

    p, _, a = _CACHED
    ys = np.random.default_rng(5).standard_normal((7, p.dim))
    np.testing.assert_allclose(bregman_rows(a, p, ys), [bregman(a, p, y) for y in ys], rtol=1e-12, atol=1e-12)
