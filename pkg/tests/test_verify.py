import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabsvrg.objectives import (
    QuadraticEnsemble,
    bounded_saddle_make,
    matrix_sensing_hessian_form,
    matrix_sensing_make,
    quadratic_ensemble_make,
)
from stabsvrg.rng import Rng
from stabsvrg.svrg import SvrgConfig
from stabsvrg.verify import (
    FIRST_ORDER,
    NEITHER,
    SECOND_ORDER,
    UNVERIFIED,
    CoupledPair,
    certify,
    coupled_bound_ratios,
    coupled_variance_probe,
    epoch_decrease_probe,
    estimate_constants,
    estimate_lipschitz,
    fd_gradient,
    hvp,
    lambda_min,
    variance_probe,
)


@pytest.fixture(scope="module")
def quad():
    return quadratic_ensemble_make(8, 40, 0.8, 0.5, Rng(0), linear=np.ones(8))


@pytest.fixture(scope="module")
def sensing():
    return matrix_sensing_make(5, 2, 100, Rng(1))


# finite differences -------------------------------------------------------------

def test_fd_linear_exact():
    a = np.array([1.0, -2.0, 0.5])
    for h in (1e-3, 0.1, 1.0):
        np.testing.assert_allclose(fd_gradient(lambda x: a @ x + 3.0, np.array([0.3, 2.0, -1.0]), h), a, rtol=1e-9)


def test_fd_quadratic_exact(quad):
    x = Rng(2).normal(8)
    np.testing.assert_allclose(fd_gradient(quad, x, 1e-2), quad.full_gradient(x), rtol=1e-8, atol=1e-9)


def test_fd_sensing(sensing):
    rng = Rng(3)
    for _ in range(5):
        x = rng.normal(sensing.d)
        g = sensing.full_gradient(x)
        assert np.linalg.norm(fd_gradient(sensing, x, 1e-5) - g) <= 1e-5 * np.linalg.norm(g)


def test_fd_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_gradient(lambda x: 0.0, np.zeros(2), 0.0)


def test_hvp_quadratic_exact(quad):
    rng = Rng(4)
    x, v = rng.normal(8), rng.normal(8)
    np.testing.assert_allclose(hvp(quad, x, v), quad.H_mean @ v, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(hvp(quad, x, v, component=3), quad.H[3] @ v, rtol=1e-9, atol=1e-10)


def test_hvp_rejects_zero_direction(quad):
    with pytest.raises(ValueError):
        hvp(quad, np.zeros(8), np.zeros(8))


def test_hvp_matches_sensing_hessian_form(sensing):
    rng = Rng(5)
    for _ in range(5):
        U = rng.normal((sensing.dim, sensing.r))
        Z = rng.normal((sensing.dim, sensing.r))
        lhs = hvp(sensing, U.ravel(), Z.ravel()) @ Z.ravel()
        rhs = matrix_sensing_hessian_form(sensing, U, Z)
        assert abs(lhs - rhs) <= 1e-4 * abs(rhs)


def test_hvp_symmetry(sensing):
    rng = Rng(6)
    for _ in range(5):
        x, u, v = rng.normal(sensing.d), rng.normal(sensing.d), rng.normal(sensing.d)
        a = hvp(sensing, x, u) @ v
        b = hvp(sensing, x, v) @ u
        assert abs(a - b) <= 1e-6 * max(abs(a), abs(b))


# eigenvalues ---------------------------------------------------------------

def _fixed(H):
    return QuadraticEnsemble(np.asarray(H, dtype=float)[None])


@pytest.mark.parametrize("method", ["lanczos", "power"])
def test_lambda_min_diag(method):
    est = lambda_min(_fixed(np.diag([1.0, -1.0])), np.zeros(2), rng=Rng(0), method=method)
    assert abs(est.estimate + 1.0) <= 1e-8
    assert est.converged


@pytest.mark.parametrize("method", ["lanczos", "power"])
def test_lambda_min_identity(method):
    est = lambda_min(_fixed(np.eye(6)), np.zeros(6), rng=Rng(0), method=method)
    assert est.estimate == pytest.approx(1.0, abs=1e-10)
    assert est.iterations <= 2


@pytest.mark.parametrize("method", ["lanczos", "power"])
def test_lambda_min_random_ensembles(method):
    for seed in range(5):
        q = quadratic_ensemble_make(50, 10, 0.3 + 0.1 * seed, 0.5, Rng(seed), top=2.0)
        dense = np.linalg.eigvalsh(q.H_mean)[0]
        est, err = lambda_min(q, np.zeros(50), rng=Rng(seed + 100), method=method, max_iters=5000)
        assert abs(est - dense) <= 1e-3
        assert est - err - 1e-12 <= dense <= est + err + 1e-12


@given(st.integers(2, 20), st.integers(0, 2**30))
@settings(max_examples=40, deadline=None)
def test_lambda_min_sandwich(d, seed):
    q = quadratic_ensemble_make(d, 3, 0.5, 0.2, Rng(seed))
    dense = np.linalg.eigvalsh(q.H_mean)[0]
    e = lambda_min(q, np.zeros(d), rng=Rng(seed))
    assert e.estimate - e.error_bound - 1e-9 <= dense <= e.estimate + e.error_bound + 1e-9


def test_lambda_min_unconverged_flagged(quad):
    e = lambda_min(quad, np.zeros(8), max_iters=2, rng=Rng(0), method="power")
    assert not e.converged
    assert e.error_bound > 1e-6


def test_lambda_min_bad_args(quad):
    with pytest.raises(ValueError):
        lambda_min(quad, np.zeros(8), tol=0.0)
    with pytest.raises(ValueError):
        lambda_min(quad, np.zeros(8), method="qr")


def test_lambda_min_custom_matvec():
    H = np.diag([3.0, -0.5, 2.0])
    e = lambda_min(None, np.zeros(3), matvec=lambda v: H @ v, rng=Rng(0))
    assert e.estimate == pytest.approx(-0.5, abs=1e-10)


# certification ---------------------------------------------------------------

def test_certify_minimum_second_order():
    s = bounded_saddle_make(1.0, 4, 0.2, Rng(0))
    for eps in (1e-6, 1e-2, 1.0):
        rep = certify(s, np.array([0.0, 1.0]), eps, s.rho, Rng(1))
        assert rep.verdict == SECOND_ORDER
        assert rep.lambda_min_estimate == pytest.approx(1.0, abs=1e-6)


def test_certify_saddle_first_order_only():
    s = bounded_saddle_make(1.0, 4, 0.2, Rng(0))
    eps = 1e-3
    assert 1.0 > math.sqrt(s.rho * eps)
    rep = certify(s, np.zeros(2), eps, s.rho, Rng(1))
    assert rep.verdict == FIRST_ORDER
    assert not rep.curvature_ok
    assert rep.lambda_min_estimate == pytest.approx(-1.0, abs=1e-6)
    assert rep.curvature_threshold == pytest.approx(-math.sqrt(s.rho * eps))


def test_certify_neither_and_unverified():
    s = bounded_saddle_make(1.0, 4, 0.2, Rng(0))
    assert certify(s, np.array([0.5, 1.0]), 1e-2, s.rho).verdict == NEITHER
    assert certify(s, np.array([4.0, 0.0]), 1e-2, s.rho).verdict == UNVERIFIED
    with pytest.raises(ValueError):
        certify(s, np.zeros(2), 0.0, 1.0)


def test_certify_pure(sensing):
    x = Rng(7).normal(sensing.d) * 0.3
    a = certify(sensing, x, 1e-2, sensing.rho, Rng(3))
    b = certify(sensing, x, 1e-2, sensing.rho, Rng(3))
    assert a.to_dict() == b.to_dict()


def test_certify_verdict_rule(quad):
    rng = Rng(8)
    for _ in range(10):
        x = rng.normal(8) * 0.1
        rep = certify(quad, x, 5.0, 0.5, Rng(9))
        ok_grad = rep.grad_norm <= rep.epsilon
        ok_curv = rep.lambda_min_estimate + rep.lambda_min_error_bound >= -math.sqrt(rep.rho * rep.epsilon)
        expected = SECOND_ORDER if ok_grad and ok_curv else FIRST_ORDER if ok_grad else NEITHER
        assert rep.verdict == expected


# variance probes -------------------------------------------------------------

def test_variance_probe_preconditions(quad):
    x = np.ones(8)
    with pytest.raises(ValueError):
        variance_probe(quad, x, x, 4, 200, Rng(0))
    with pytest.raises(ValueError):
        variance_probe(quad, x, x + 1, 4, 99, Rng(0))


def test_variance_probe_zero_spread():
    q = quadratic_ensemble_make(4, 10, 1.0, 0.0, Rng(0))
    s = variance_probe(q, np.ones(4), np.zeros(4), 3, 100, Rng(1))
    assert np.all(s.ratios <= 1e-13)
    assert s.unbiased()


def test_variance_probe_normalization_flattens():
    q = quadratic_ensemble_make(6, 2000, 0.5, 0.5, Rng(2))
    x, snap = np.ones(6), np.zeros(6)
    p99 = [variance_probe(q, x, snap, b, 500, Rng(b)).percentiles[99] for b in (25, 100, 400)]
    assert all(np.isfinite(p99))
    assert max(p99) / min(p99) <= 1.5


def test_variance_probe_unbiased_and_bounded(sensing):
    sensing.L = estimate_lipschitz(sensing, lambda g: sensing.sample_point(g, 2.0), 100, Rng(3))
    x = sensing.sample_point(Rng(4), 1.0)
    s = variance_probe(sensing, x, x + 0.05 * Rng(5).normal(sensing.d), 10, 1000, Rng(6))
    assert s.unbiased()
    assert s.mean_sq_error <= s.bound(4.0)
    assert s.percentiles[50] <= s.percentiles[90] <= s.percentiles[99] <= s.percentiles[100]


def test_coupled_identical_start_is_zero(quad):
    x0 = np.ones(8)
    pair = CoupledPair(x0, x0.copy(), np.zeros(8))
    recs = coupled_variance_probe(quad, pair, 20, SvrgConfig(4, 5, 0.05), Rng(0))
    assert len(recs) == 20
    for r in recs:
        assert r.w_norm == 0.0 and r.xi_diff_norm == 0.0


def test_coupled_quadratic_identity(quad):
    pair = CoupledPair.along(np.zeros(8), np.full(8, 0.1), Rng(1).normal(8), 0.01)
    recs = coupled_variance_probe(quad, pair, 50, SvrgConfig(5, 4, 0.05), Rng(2))
    for r in recs:
        rhs = np.mean([(quad.H[i] - quad.H_mean) @ (r.w - r.w_snap) for i in r.batch], axis=0)
        assert np.linalg.norm(r.xi_diff - rhs) <= 1e-12 * r.scale


def test_coupled_sensing_bound_holds_out_of_sample(sensing):
    L = estimate_lipschitz(sensing, lambda g: sensing.sample_point(g, 2.0), 100, Rng(3))
    cfg = SvrgConfig(5, 10, 0.2 / L)

    def ratios(seeds):
        out = []
        for s in seeds:
            rng = Rng(s)
            anchor = sensing.sample_point(rng.fork("a"), 1.0)
            pair = CoupledPair.along(anchor, anchor + 0.01 * rng.fork("p").normal(sensing.d), rng.fork("u").normal(sensing.d), 1e-3)
            recs = coupled_variance_probe(sensing, pair, 50, cfg, rng.fork("b"))
            out.append(coupled_bound_ratios(recs, cfg.b, L, sensing.rho_prime))
        return np.concatenate(out)

    fit = ratios(range(10))
    c = float(np.percentile(fit, 99))
    held = ratios(range(100, 110))
    assert np.mean(held <= c) >= 0.95
    assert np.isfinite(c)


# decrease probe ------------------------------------------------------------------

def test_decrease_probe_small_step(sensing):
    L = estimate_lipschitz(sensing, lambda g: sensing.sample_point(g, 2.0), 100, Rng(3))
    cfg = SvrgConfig(3, 9, 1.0 / (3 * L))
    checks = [epoch_decrease_probe(sensing, sensing.sample_point(Rng(s), 1.0), cfg, Rng(s), 1.0, L) for s in range(30)]
    assert all(c.gradient_decrease and c.monotone_stop and c.distance_decrease for c in checks)
    assert {c.t_stop for c in checks} <= {1, 2, 3}


def test_decrease_probe_detects_large_step(quad):
    cfg = SvrgConfig(3, 9, 5.0 / quad.L)
    checks = [epoch_decrease_probe(quad, np.ones(8), cfg, Rng(s), 1.0, quad.L) for s in range(5)]
    assert not all(c.gradient_decrease for c in checks)


# constants -------------------------------------------------------------------

def test_constants_quadratic(quad):
    c = estimate_constants(quad, lambda g: g.normal(8), 20, Rng(0))
    assert c.rho <= 1e-6 and c.rho_prime <= 1e-6
    assert 0 < c.L <= quad.L * (1 + 1e-9)


def test_constants_linear_has_zero_L():
    lin = QuadraticEnsemble(np.zeros((5, 3, 3)), np.array([1.0, 2.0, 3.0]))
    c = estimate_constants(lin, lambda g: g.normal(3), 10, Rng(0))
    assert c.L == 0.0 and c.rho == 0.0 and c.rho_prime == 0.0


def test_constants_need_pairs(quad):
    with pytest.raises(ValueError):
        estimate_constants(quad, lambda g: g.normal(8), 9, Rng(0))


def test_constants_saddle_below_declared():
    s = bounded_saddle_make(1.0, 8, 0.3, Rng(0))

    def sampler(g):
        u = g.normal(2)
        return s.radius * g.uniform() * u / np.linalg.norm(u)

    c = estimate_constants(s, sampler, 50, Rng(1))
    assert c.L <= s.L and c.rho <= s.rho * (1 + 1e-6) and c.rho_prime <= s.rho_prime * (1 + 1e-6)
