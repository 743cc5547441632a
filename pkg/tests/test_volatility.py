from __future__ import annotations

import numpy as np
import pytest
from scipy import optimize, stats

from tensorvar import volatility as vol
from tensorvar.errors import ModelStateError


@pytest.fixture
def prior():
    return vol.VolatilityPrior()


def _phi_prior_moments(prior):
    sd = np.sqrt(prior.phi_var)
    d = stats.truncnorm((-1 - prior.phi_mean) / sd, (1 - prior.phi_mean) / sd, loc=prior.phi_mean, scale=sd)
    return d.mean(), d.std()


def test_mixture_constants():
    assert vol.MIX_PROBS.sum() == pytest.approx(1.0, abs=1e-12)
    mean = np.sum(vol.MIX_PROBS * vol.MIX_MEANS)
    var = np.sum(vol.MIX_PROBS * (vol.MIX_VARS + vol.MIX_MEANS**2)) - mean**2
    # log chi2_1 has mean psi(1/2) + log 2 and variance pi^2 / 2
    assert mean == pytest.approx(-1.2704, abs=2e-4)
    assert var == pytest.approx(np.pi**2 / 2, abs=2e-3)


def test_csv_with_zero_h_equals_homoskedastic():
    omega = np.array([[2.0, 0.3], [0.3, 1.0]])
    h = vol.Homoskedastic(omega)
    c = vol.CommonSV(np.zeros(5), 0.9, 0.1, omega)
    for t in range(5):
        assert np.array_equal(c.sigma(t), h.sigma(t))
        assert c.logdet(t) == pytest.approx(h.logdet(t), abs=1e-14)


def test_cholesky_identity_case():
    s = vol.CholeskySV(np.zeros((3, 2)), 0.0, 0.9, 0.1, np.eye(2))
    assert np.array_equal(s.sigma(1), np.eye(2))


def test_cholesky_two_by_two_expansion():
    b, h1, h2 = 0.5, 0.3, -0.7
    s = vol.CholeskySV(np.array([[h1, h2]]), 0.0, 0.9, 0.1, np.array([[1.0, 0.0], [b, 1.0]]))
    e1, e2 = np.exp(h1), np.exp(h2)
    want = np.array([[e1, -b * e1], [-b * e1, b * b * e1 + e2]])
    assert np.allclose(s.sigma(0), want, atol=1e-14)
    assert np.allclose(s.precision(0) @ s.sigma(0), np.eye(2), atol=1e-12)
    assert s.logdet(0) == pytest.approx(np.log(np.linalg.det(want)), abs=1e-12)


def test_precision_and_logdet_consistent():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3))
    omega = M @ M.T + np.eye(3)
    states = [
        vol.Homoskedastic(omega),
        vol.CommonSV(rng.normal(size=4), 0.5, 0.2, omega),
        vol.CholeskySV(rng.normal(size=(4, 3)), 0.0, 0.5, 0.2, np.tril(rng.normal(size=(3, 3)), -1) + np.eye(3)),
    ]
    for s in states:
        path = s.precision_path(4)
        for t in range(4):
            S = s.sigma(t)
            np.linalg.cholesky(S)
            assert np.allclose(path[t] @ S, np.eye(3), atol=1e-10)
            assert np.allclose(s.chol(t) @ s.chol(t).T, S, atol=1e-12)
            assert s.logdet(t) == pytest.approx(np.linalg.slogdet(S)[1], abs=1e-10)


def test_invalid_states():
    with pytest.raises(ModelStateError):
        vol.Homoskedastic(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ModelStateError):
        vol.CommonSV(np.zeros(3), 1.0, 0.1, np.eye(2))
    with pytest.raises(ModelStateError):
        vol.CommonSV(np.zeros(3), 0.5, 0.0, np.eye(2))
    with pytest.raises(ModelStateError):
        vol.CholeskySV(np.zeros((3, 2)), 0.0, 0.5, 0.1, np.array([[1.0, 0.2], [0.0, 1.0]]))
    with pytest.raises(ModelStateError):
        vol.CholeskySV(np.zeros((3, 2)), 0.0, 0.5, 0.1, np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_ar1_precision_matches_dense_inverse():
    T, phi, s2 = 6, 0.8, 0.3
    ab = vol.ar1_precision_banded(T, phi, s2)
    K = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[0, 1:], -1)
    cov = s2 / (1 - phi**2) * phi ** np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    assert np.allclose(K @ cov, np.eye(T), atol=1e-12)
    # stationary initialization: Var(h_1) = sigma2 / (1 - phi^2)
    assert np.linalg.inv(K)[0, 0] == pytest.approx(s2 / (1 - phi**2), rel=1e-12)


def test_stationary_initial_variance():
    rng = np.random.default_rng(1)
    phi, s2, N = 0.9, 0.2, 100_000
    h1 = vol.simulate_ar1(1, np.zeros(N), np.full(N, phi), np.full(N, s2), rng)[0]
    target = s2 / (1 - phi**2)
    # the sample variance of N normals has sd target * sqrt(2 / (N - 1))
    assert abs(h1.var(ddof=1) - target) < 3 * target * np.sqrt(2 / (N - 1))


def test_csv_mode_is_maximizer():
    rng = np.random.default_rng(2)
    T, n = 40, 3
    q = rng.chisquare(n, size=T) * np.exp(rng.normal(scale=0.5, size=T))
    kb = vol.ar1_precision_banded(T, 0.9, 0.1)
    mode, _ = vol.csv_mode(q, n, kb, np.zeros(T))

    def neg(h):
        return -vol._csv_log_target(h, q, n, kb)

    ref = optimize.minimize(neg, np.zeros(T), method="BFGS", options={"gtol": 1e-10})
    assert np.max(np.abs(mode - ref.x)) < 1e-5


def _csv_data(rng, T, n, phi, s2):
    h = vol.simulate_ar1(T, 0.0, phi, s2, rng)[:, 0]
    omega = np.eye(n) + 0.3
    U = np.exp(0.5 * h)[:, None] * (rng.standard_normal((T, n)) @ np.linalg.cholesky(omega).T)
    return h, U


def test_csv_recovers_path_and_acceptance(prior):
    rng = np.random.default_rng(3)
    h, U = _csv_data(rng, 200, 4, 0.95, 0.05)
    st = vol.initial_state(vol.COMMON_SV, U, prior)
    mh = vol.MHStats()
    keep = []
    for it in range(3000):
        st = vol.update_common_sv(st, U, prior, rng, mh)
        if it >= 1000:
            keep.append(st.h)
    hm = np.mean(keep, axis=0)
    assert np.corrcoef(hm, h)[0, 1] > 0.6
    assert 0.5 < mh.rate("h") < 1.0


def test_csv_flat_volatility_collapses_to_zero():
    # The level of h trades off against the scale of Omega, so a flat path is
    # only pinned at zero when the prior admits a tiny innovation variance.
    prior = vol.VolatilityPrior(sigma2_shape=5.0, sigma2_scale=1e-5)
    rng = np.random.default_rng(4)
    h, U = _csv_data(rng, 200, 4, 0.95, 1e-6)
    st = vol.initial_state(vol.COMMON_SV, U, prior)
    keep = []
    for it in range(2000):
        st = vol.update_common_sv(st, U, prior, rng)
        if it >= 500:
            keep.append(st.h)
    assert np.max(np.abs(np.mean(keep, axis=0))) < 0.05


@pytest.mark.parametrize("regime", [vol.COMMON_SV, vol.CHOLESKY_SV, vol.HOMOSKEDASTIC])
def test_update_without_data_draws_from_prior(regime, prior):
    rng = np.random.default_rng(5)
    n = 2
    st = vol.draw_from_prior(regime, n, 0, prior, rng)
    U = np.zeros((0, n))
    phis, s2s, diag = [], [], []
    N = 4000
    for _ in range(N):
        st = vol.update_volatility(st, U, prior, rng)
        if regime == vol.HOMOSKEDASTIC:
            diag.append(st.omega[0, 0])
        elif regime == vol.COMMON_SV:
            phis.append(st.phi)
            s2s.append(st.sigma2)
        else:
            phis.append(st.phi[0])
            s2s.append(st.sigma2[0])
            diag.append(st.b0[1, 0])
    if phis:
        m, s = _phi_prior_moments(prior)
        assert abs(np.mean(phis) - m) < 4 * s / np.sqrt(N)
        ig = stats.invgamma(prior.sigma2_shape, scale=prior.sigma2_scale)
        assert abs(np.mean(s2s) - ig.mean()) < 4 * ig.std() / np.sqrt(N)
    if regime == vol.HOMOSKEDASTIC:
        # IW(n + 3, I): E[Omega_11] = 1 / (nu - n - 1) = 0.5
        d = np.array(diag)
        assert abs(d.mean() - 0.5) < 4 * d.std() / np.sqrt(N)
    if regime == vol.CHOLESKY_SV:
        d = np.array(diag)
        assert abs(d.mean()) < 4 * np.sqrt(prior.b0_var / N)
        assert d.var() == pytest.approx(prior.b0_var, rel=0.1)


def test_univariate_sv_recovers_path(prior):
    rng = np.random.default_rng(6)
    T = 1000
    h = vol.simulate_ar1(T, -0.5, 0.95, 0.05, rng)[:, 0]
    U = (np.exp(0.5 * h) * rng.standard_normal(T))[:, None]
    st = vol.initial_state(vol.CHOLESKY_SV, U, prior)
    keep = []
    for it in range(2000):
        st = vol.update_cholesky_sv(st, U, prior, rng)
        if it >= 500:
            keep.append(st.h[:, 0])
    assert np.corrcoef(np.mean(keep, axis=0), h)[0, 1] > 0.8


def test_b0_near_zero_when_true_b0_is_identity(prior):
    rng = np.random.default_rng(7)
    T, n = 500, 3
    H = vol.simulate_ar1(T, np.zeros(n), np.full(n, 0.95), np.full(n, 0.05), rng)
    U = np.exp(0.5 * H) * rng.standard_normal((T, n))
    st = vol.initial_state(vol.CHOLESKY_SV, U, prior)
    keep = []
    for it in range(1000):
        st = vol.update_cholesky_sv(st, U, prior, rng)
        if it >= 300:
            keep.append(st.b0)
    off = np.mean(keep, axis=0)[np.tril_indices(n, -1)]
    assert np.all(np.abs(off) < 0.1)


def test_cholesky_update_is_deterministic(prior):
    U = np.random.default_rng(8).normal(size=(50, 3))
    st = vol.initial_state(vol.CHOLESKY_SV, U, prior)
    a = vol.update_cholesky_sv(st, U, prior, np.random.default_rng(9))
    b = vol.update_cholesky_sv(st, U, prior, np.random.default_rng(9))
    assert np.array_equal(a.h, b.h) and np.array_equal(a.b0, b.b0)


def test_forecast_homoskedastic_is_constant():
    omega = np.array([[1.0, 0.2], [0.2, 0.5]])
    path = vol.forecast_sigma(vol.Homoskedastic(omega), 4, np.random.default_rng(0))
    assert path.shape == (4, 2, 2)
    for S in path:
        assert np.allclose(S, omega, atol=1e-15)


def test_forecast_csv_degenerate_law():
    omega = np.array([[1.0, 0.2], [0.2, 0.5]])
    st = vol.CommonSV(np.array([0.4, 0.0]), 0.0, 1e-300, omega)
    for S in vol.forecast_sigma(st, 3, np.random.default_rng(0)):
        assert np.allclose(S, omega, atol=1e-14)


def test_forecast_csv_one_step_mean():
    omega = np.eye(2)
    phi, hT = 0.8, 1.5
    st = vol.CommonSV(np.array([0.0, hT]), phi, 0.1, omega)
    N = 100_000
    L = vol.forecast_chol_paths(st, 1, N, np.random.default_rng(1))
    h1 = 2 * np.log(L[:, 0, 0, 0])
    assert abs(h1.mean() - phi * hT) < 3 * np.sqrt(0.1 / N)


def test_forecast_paths_are_spd():
    rng = np.random.default_rng(2)
    st = vol.CholeskySV(rng.normal(size=(5, 3)), 0.0, 0.9, 0.2, np.tril(rng.normal(size=(3, 3)), -1) + np.eye(3))
    for S in vol.forecast_sigma(st, 6, rng):
        np.linalg.cholesky(S)
