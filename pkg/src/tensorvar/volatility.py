"""Time-varying error covariances and their Gibbs/MH updates.

Three regimes are supported:

* ``Homoskedastic``: ``Sigma_t = Omega``.
* ``CommonSV``: ``Sigma_t = exp(h_t) Omega`` with a zero-mean stationary AR(1)
  log-volatility ``h_t``.
* ``CholeskySV``: ``Sigma_t = B0^{-1} D_t B0^{-T}``, ``D_t = diag(exp(h_t))``,
  with an independent AR(1) (with mean ``mu_i``) for every ``h_{i,t}``.

Time indices are 0-based throughout.

The common log-volatility path is drawn with an independence
Metropolis-Hastings step whose Gaussian proposal is a second-order expansion
of the exact conditional around its mode. The Cholesky log-volatilities use
the 10-component Gaussian mixture approximation to ``log chi^2_1`` of Omori,
Chib, Shephard and Nakajima (2007). Both samplers work with the tridiagonal
AR(1) precision in banded storage, so a path costs O(T).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg, stats

from .errors import ModelStateError, SamplerError

HOMOSKEDASTIC = "homoskedastic"
COMMON_SV = "csv"
CHOLESKY_SV = "cholesky"
REGIMES = (HOMOSKEDASTIC, COMMON_SV, CHOLESKY_SV)

# Omori, Chib, Shephard & Nakajima (2007), 10-component mixture for log(z^2), z ~ N(0, 1).
MIX_PROBS = np.array(
    [0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115]
)
MIX_MEANS = np.array(
    [1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65]
)
MIX_VARS = np.array(
    [0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342]
)
LOG_SQ_OFFSET = 1e-4


@dataclass(frozen=True)
class VolatilityPrior:
    """Hyperparameters shared by the volatility regimes.

    ``phi ~ N(phi_mean, phi_var)`` truncated to (-1, 1); ``sigma2 ~ IG(shape, scale)``;
    ``mu ~ N(mu_mean, mu_var)``; ``Omega ~ IW(omega_df, omega_scale)`` (defaults
    ``n + 3`` and ``I_n``); free ``B0`` entries ``~ N(0, b0_var)``.
    """

    phi_mean: float = 0.95
    phi_var: float = 0.01
    sigma2_shape: float = 5.0
    sigma2_scale: float = 0.16
    mu_mean: float = 0.0
    mu_var: float = 10.0
    omega_df: Optional[float] = None
    omega_scale: Optional[np.ndarray] = None
    b0_var: float = 10.0

    def omega_params(self, n: int) -> tuple[float, np.ndarray]:
        df = float(n + 3) if self.omega_df is None else float(self.omega_df)
        scale = np.eye(n) if self.omega_scale is None else np.asarray(self.omega_scale, float)
        return df, scale


class MHStats:
    """Running accept/propose counters for Metropolis-Hastings steps."""

    def __init__(self):
        self.accepted: dict[str, int] = {}
        self.proposed: dict[str, int] = {}

    def record(self, name: str, accepted: bool) -> None:
        self.proposed[name] = self.proposed.get(name, 0) + 1
        self.accepted[name] = self.accepted.get(name, 0) + int(bool(accepted))

    def rate(self, name: str) -> float:
        k = self.proposed.get(name, 0)
        return self.accepted.get(name, 0) / k if k else float("nan")

    def rates(self) -> dict[str, float]:
        return {k: self.rate(k) for k in sorted(self.proposed)}


def _chol(mat, what="Omega") -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise ModelStateError(f"{what} is not positive definite") from None


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Homoskedastic:
    omega: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    regime = HOMOSKEDASTIC

    def __post_init__(self):
        omega = _frozen(np.atleast_2d(self.omega))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "_chol", _chol(omega))

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    def sigma(self, t: int) -> np.ndarray:
        return self.omega.copy()

    def chol(self, t: int) -> np.ndarray:
        return self._chol

    def precision(self, t: int) -> np.ndarray:
        return linalg.cho_solve((self._chol, True), np.eye(self.n))

    def logdet(self, t: int) -> float:
        return 2.0 * float(np.log(np.diag(self._chol)).sum())

    def precision_path(self, T: int) -> np.ndarray:
        return np.broadcast_to(self.precision(0), (T, self.n, self.n))


@dataclass(frozen=True)
class CommonSV:
    h: np.ndarray
    phi: float
    sigma2: float
    omega: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    regime = COMMON_SV

    def __post_init__(self):
        omega = _frozen(np.atleast_2d(self.omega))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "h", _frozen(np.ravel(self.h)))
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not -1.0 < self.phi < 1.0:
            raise ModelStateError(f"phi={self.phi} outside (-1, 1)")
        if not self.sigma2 > 0:
            raise ModelStateError(f"sigma2={self.sigma2} must be positive")
        object.__setattr__(self, "_chol", _chol(omega))

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    def sigma(self, t: int) -> np.ndarray:
        return np.exp(self.h[t]) * self.omega

    def chol(self, t: int) -> np.ndarray:
        return np.exp(0.5 * self.h[t]) * self._chol

    def precision(self, t: int) -> np.ndarray:
        return np.exp(-self.h[t]) * linalg.cho_solve((self._chol, True), np.eye(self.n))

    def logdet(self, t: int) -> float:
        return self.n * float(self.h[t]) + 2.0 * float(np.log(np.diag(self._chol)).sum())

    def precision_path(self, T: Optional[int] = None) -> np.ndarray:
        inv = linalg.cho_solve((self._chol, True), np.eye(self.n))
        return np.exp(-self.h)[:, None, None] * inv


@dataclass(frozen=True)
class CholeskySV:
    h: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    sigma2: np.ndarray
    b0: np.ndarray

    regime = CHOLESKY_SV

    def __post_init__(self):
        b0 = _frozen(np.atleast_2d(self.b0))
        n = b0.shape[0]
        h = np.array(self.h, dtype=float)
        if h.ndim == 1:
            h = h.reshape(-1, n)
        object.__setattr__(self, "h", _frozen(h))
        for name in ("mu", "phi", "sigma2"):
            object.__setattr__(self, name, _frozen(np.broadcast_to(getattr(self, name), (n,))))
        object.__setattr__(self, "b0", b0)
        if not np.allclose(np.diag(b0), 1.0) or np.any(np.triu(b0, 1) != 0):
            raise ModelStateError("B0 must be unit lower triangular")
        if np.any(np.abs(self.phi) >= 1):
            raise ModelStateError(f"phi={self.phi} has entries outside (-1, 1)")
        if np.any(self.sigma2 <= 0):
            raise ModelStateError("sigma2 entries must be positive")

    @property
    def n(self) -> int:
        return self.b0.shape[0]

    def _b0inv(self) -> np.ndarray:
        return linalg.solve_triangular(self.b0, np.eye(self.n), lower=True, unit_diagonal=True)

    def sigma(self, t: int) -> np.ndarray:
        L = self.chol(t)
        return L @ L.T

    def chol(self, t: int) -> np.ndarray:
        return self._b0inv() * np.exp(0.5 * self.h[t])[None, :]

    def precision(self, t: int) -> np.ndarray:
        return self.b0.T @ (np.exp(-self.h[t])[:, None] * self.b0)

    def logdet(self, t: int) -> float:
        return float(self.h[t].sum())

    def precision_path(self, T: Optional[int] = None) -> np.ndarray:
        return np.einsum("ki,tk,kj->tij", self.b0, np.exp(-self.h), self.b0)


VolatilityState = Union[Homoskedastic, CommonSV, CholeskySV]


def sigma_at(state: VolatilityState, t: int) -> np.ndarray:
    """Error covariance at (0-based) period ``t``."""
    return state.sigma(t)


def precision_at(state: VolatilityState, t: int) -> np.ndarray:
    return state.precision(t)


def logdet_at(state: VolatilityState, t: int) -> float:
    return state.logdet(t)


# ---------------------------------------------------------------------------
# AR(1) helpers (banded, upper storage as used by scipy.linalg.solveh_banded)


def ar1_precision_banded(T: int, phi: float, sigma2: float) -> np.ndarray:
    """Precision of a stationary zero-mean AR(1) path of length T, upper banded form."""
    ab = np.zeros((2, T))
    if T == 1:
        ab[1, 0] = (1.0 - phi * phi) / sigma2
        return ab
    ab[1, :] = (1.0 + phi * phi) / sigma2
    ab[1, 0] = ab[1, -1] = 1.0 / sigma2
    ab[0, 1:] = -phi / sigma2
    return ab


def _banded_matvec(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[0, 1:] * v[:-1]
    return out


def _upper_bidiag_matvec(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = u[1] * v
    out[:-1] += u[0, 1:] * v[1:]
    return out


def _chol_banded(ab: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky_banded(ab, lower=False)
    except np.linalg.LinAlgError:
        raise SamplerError("log-volatility precision not positive definite") from None


def _gaussian_banded(ab: np.ndarray, rhs: np.ndarray, rng) -> np.ndarray:
    """Draw from N(K^{-1} rhs, K^{-1}) for a tridiagonal precision K."""
    u = _chol_banded(ab)
    mean = linalg.cho_solve_banded((u, False), rhs)
    return mean + linalg.solve_banded((0, 1), u, rng.standard_normal(rhs.shape[0]))


def _draw_inv_gamma(shape: float, scale: float, rng) -> float:
    return float(scale / rng.gamma(shape))


def _draw_phi(hc, phi, sigma2, prior: VolatilityPrior, rng, mh: Optional[MHStats], name):
    """MH step for the AR coefficient of a demeaned stationary AR(1) path."""
    hc = np.asarray(hc, dtype=float)
    prec = 1.0 / prior.phi_var
    shift = prior.phi_mean / prior.phi_var
    if hc.size >= 2:
        prec += np.dot(hc[:-1], hc[:-1]) / sigma2
        shift += np.dot(hc[:-1], hc[1:]) / sigma2
    mean, sd = shift / prec, 1.0 / np.sqrt(prec)
    a, b = (-1.0 - mean) / sd, (1.0 - mean) / sd
    cand = float(stats.truncnorm.rvs(a, b, loc=mean, scale=sd, random_state=rng))
    cand = min(max(cand, -1.0 + 1e-12), 1.0 - 1e-12)

    def log_g(x):
        if hc.size == 0:
            return 0.0
        return 0.5 * np.log1p(-x * x) - 0.5 * (1.0 - x * x) * hc[0] ** 2 / sigma2

    accept = np.log(rng.uniform()) < log_g(cand) - log_g(phi)
    if mh is not None:
        mh.record(name, accept)
    return cand if accept else float(phi)


def _ar1_sse(hc, phi):
    hc = np.asarray(hc, dtype=float)
    if hc.size == 0:
        return 0.0
    return (1.0 - phi * phi) * hc[0] ** 2 + float(np.sum((hc[1:] - phi * hc[:-1]) ** 2))


def _draw_sigma2(hc, phi, prior: VolatilityPrior, rng) -> float:
    shape = prior.sigma2_shape + 0.5 * np.size(hc)
    scale = prior.sigma2_scale + 0.5 * _ar1_sse(hc, phi)
    return _draw_inv_gamma(shape, scale, rng)


def _draw_mu(h, phi, sigma2, prior: VolatilityPrior, rng) -> float:
    h = np.asarray(h, dtype=float)
    prec = 1.0 / prior.mu_var
    shift = prior.mu_mean / prior.mu_var
    if h.size:
        prec += ((1.0 - phi * phi) + (h.size - 1) * (1.0 - phi) ** 2) / sigma2
        shift += ((1.0 - phi * phi) * h[0] + (1.0 - phi) * np.sum(h[1:] - phi * h[:-1])) / sigma2
    return float(shift / prec + rng.standard_normal() / np.sqrt(prec))


def _draw_iw(df: float, scale: np.ndarray, rng) -> np.ndarray:
    n = scale.shape[0]
    draw = stats.invwishart.rvs(df=df, scale=scale, random_state=rng)
    return np.asarray(draw, dtype=float).reshape(n, n)


# ---------------------------------------------------------------------------
# updates


def update_homoskedastic(state: Homoskedastic, U, prior: VolatilityPrior, rng, mh=None) -> Homoskedastic:
    """Conjugate inverse-Wishart draw of ``Omega`` given residuals."""
    U = np.asarray(U, dtype=float).reshape(-1, state.n)
    df, scale = prior.omega_params(state.n)
    return Homoskedastic(_draw_iw(df + U.shape[0], scale + U.T @ U, rng))


def _csv_log_target(h, q, n, kb):
    return -0.5 * n * h.sum() - 0.5 * np.sum(np.exp(-h) * q) - 0.5 * h @ _banded_matvec(kb, h)


def csv_mode(q, n, kb, start, max_iter=100, tol=1e-8):
    """Newton-Raphson for the mode of the common log-volatility conditional.

    The conditional is concave, so a damped Newton iteration with step halving
    converges from any start. Returns ``(mode, iterations)``.
    """
    h = np.array(start, dtype=float)
    f = _csv_log_target(h, q, n, kb)
    for it in range(1, max_iter + 1):
        eq = np.exp(-h) * q
        grad = -0.5 * n + 0.5 * eq - _banded_matvec(kb, h)
        neg_hess = kb.copy()
        neg_hess[1] += 0.5 * eq
        step = linalg.solveh_banded(neg_hess, grad)
        lam = 1.0
        while True:
            cand = h + lam * step
            f_new = _csv_log_target(cand, q, n, kb)
            if f_new >= f - 1e-10 * abs(f) or lam < 1e-8:
                break
            lam *= 0.5
        h, f = cand, f_new
        if np.max(np.abs(lam * step)) < tol:
            return h, it
    raise SamplerError(
        "common log-volatility mode search did not converge",
        {"iterations": max_iter, "last_step": float(np.max(np.abs(lam * step)))},
    )


def update_common_sv(state: CommonSV, U, prior: VolatilityPrior, rng, mh: Optional[MHStats] = None) -> CommonSV:
    """One sweep over (h, phi, sigma2, Omega) for the common stochastic volatility model."""
    n = state.n
    U = np.asarray(U, dtype=float).reshape(-1, n)
    T = U.shape[0]
    h, phi, sigma2 = state.h, state.phi, state.sigma2
    if T != h.size:
        raise ValueError(f"residuals have {T} rows, volatility path has {h.size}")
    if T > 0:
        q = np.einsum("ti,ti->t", U, linalg.cho_solve((state._chol, True), U.T).T)
        kb = ar1_precision_banded(T, phi, sigma2)
        mode, _ = csv_mode(q, n, kb, h)
        prop_prec = kb.copy()
        prop_prec[1] += 0.5 * np.exp(-mode) * q
        chol_u = _chol_banded(prop_prec)
        cand = mode + linalg.solve_banded((0, 1), chol_u, rng.standard_normal(T))

        def log_q(x):
            return -0.5 * np.sum(_upper_bidiag_matvec(chol_u, x - mode) ** 2)

        log_alpha = (
            _csv_log_target(cand, q, n, kb)
            - _csv_log_target(h, q, n, kb)
            - log_q(cand)
            + log_q(h)
        )
        accept = np.log(rng.uniform()) < log_alpha
        if mh is not None:
            mh.record("h", accept)
        if accept:
            h = cand
    phi = _draw_phi(h, phi, sigma2, prior, rng, mh, "phi")
    sigma2 = _draw_sigma2(h, phi, prior, rng)
    df, scale = prior.omega_params(n)
    scaled = U * np.exp(-0.5 * h)[:, None]
    omega = _draw_iw(df + T, scale + scaled.T @ scaled, rng)
    return CommonSV(h, phi, sigma2, omega)


def sample_mixture_indicators(resid, rng) -> np.ndarray:
    """Draw component labels for ``resid = log(eps^2 + c) - h`` under the 10-point mixture."""
    resid = np.asarray(resid, dtype=float)
    logw = (
        np.log(MIX_PROBS)
        - 0.5 * np.log(MIX_VARS)
        - 0.5 * (resid[:, None] - MIX_MEANS) ** 2 / MIX_VARS
    )
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    cdf = np.cumsum(w, axis=1)
    u = rng.uniform(size=resid.size) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), MIX_PROBS.size - 1)


def draw_sv_path(ystar, mu, phi, sigma2, h_current, rng) -> np.ndarray:
    """Auxiliary-mixture draw of one log-volatility path given ``ystar = log(eps^2 + c)``."""
    T = ystar.size
    s = sample_mixture_indicators(ystar - h_current, rng)
    kb = ar1_precision_banded(T, phi, sigma2)
    prec = kb.copy()
    prec[1] += 1.0 / MIX_VARS[s]
    rhs = _banded_matvec(kb, np.full(T, mu)) + (ystar - MIX_MEANS[s]) / MIX_VARS[s]
    return _gaussian_banded(prec, rhs, rng)


def update_cholesky_sv(state: CholeskySV, U, prior: VolatilityPrior, rng, mh: Optional[MHStats] = None) -> CholeskySV:
    """One sweep over (h_i, mu_i, phi_i, sigma2_i for every i, then B0).

    Series are updated with independent child generators spawned from ``rng``,
    so the per-series work can be distributed without changing the result.
    """
    n = state.n
    U = np.asarray(U, dtype=float).reshape(-1, n)
    T = U.shape[0]
    if T != state.h.shape[0]:
        raise ValueError(f"residuals have {T} rows, volatility paths have {state.h.shape[0]}")
    eps = U @ state.b0.T
    H = np.array(state.h)
    mu, phi, sigma2 = np.array(state.mu), np.array(state.phi), np.array(state.sigma2)
    child = rng.spawn(n)
    for i in range(n):
        r = child[i]
        if T > 0:
            ystar = np.log(eps[:, i] ** 2 + LOG_SQ_OFFSET)
            H[:, i] = draw_sv_path(ystar, mu[i], phi[i], sigma2[i], H[:, i], r)
        mu[i] = _draw_mu(H[:, i], phi[i], sigma2[i], prior, r)
        phi[i] = _draw_phi(H[:, i] - mu[i], phi[i], sigma2[i], prior, r, mh, "phi")
        sigma2[i] = _draw_sigma2(H[:, i] - mu[i], phi[i], prior, r)
    b0 = np.eye(n)
    for i in range(1, n):
        x = -U[:, :i]
        w = np.exp(-H[:, i])
        prec = np.eye(i) / prior.b0_var + (x * w[:, None]).T @ x
        shift = (x * w[:, None]).T @ U[:, i]
        L = np.linalg.cholesky(prec)
        mean = linalg.cho_solve((L, True), shift)
        b0[i, :i] = mean + linalg.solve_triangular(L.T, rng.standard_normal(i), lower=False)
    return CholeskySV(H, mu, phi, sigma2, b0)


def update_volatility(state: VolatilityState, U, prior: VolatilityPrior, rng, mh=None) -> VolatilityState:
    if isinstance(state, Homoskedastic):
        return update_homoskedastic(state, U, prior, rng, mh)
    if isinstance(state, CommonSV):
        return update_common_sv(state, U, prior, rng, mh)
    if isinstance(state, CholeskySV):
        return update_cholesky_sv(state, U, prior, rng, mh)
    raise TypeError(f"unknown volatility state {type(state).__name__}")


# ---------------------------------------------------------------------------
# initialisation, prior draws, forecasting


def initial_state(regime: str, U, prior: VolatilityPrior = VolatilityPrior()) -> VolatilityState:
    """Reasonable starting values from a matrix of residuals."""
    U = np.asarray(U, dtype=float)
    T, n = U.shape
    cov = U.T @ U / max(T, 1) + 1e-6 * np.eye(n)
    if regime == HOMOSKEDASTIC:
        return Homoskedastic(cov)
    if regime == COMMON_SV:
        return CommonSV(np.zeros(T), prior.phi_mean if abs(prior.phi_mean) < 1 else 0.9, 0.04, cov)
    if regime == CHOLESKY_SV:
        level = np.log(np.maximum(np.diag(cov), 1e-8))
        return CholeskySV(np.tile(level, (T, 1)), level, np.full(n, 0.9), np.full(n, 0.04), np.eye(n))
    raise ValueError(f"unknown volatility regime {regime!r}")


def _draw_phi_prior(prior: VolatilityPrior, rng, size=None):
    sd = np.sqrt(prior.phi_var)
    a, b = (-1.0 - prior.phi_mean) / sd, (1.0 - prior.phi_mean) / sd
    return stats.truncnorm.rvs(a, b, loc=prior.phi_mean, scale=sd, size=size, random_state=rng)


def simulate_ar1(T: int, mu, phi, sigma2, rng) -> np.ndarray:
    """Stationary AR(1) path(s); vector parameters give one column per series."""
    mu, phi, sigma2 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (mu, phi, sigma2))
    k = max(mu.size, phi.size, sigma2.size)
    out = np.empty((T, k))
    if T == 0:
        return out
    sd = np.sqrt(sigma2)
    out[0] = mu + sd / np.sqrt(1.0 - phi**2) * rng.standard_normal(k)
    for t in range(1, T):
        out[t] = mu + phi * (out[t - 1] - mu) + sd * rng.standard_normal(k)
    return out


def draw_from_prior(regime: str, n: int, T: int, prior: VolatilityPrior, rng) -> VolatilityState:
    df, scale = prior.omega_params(n)
    if regime == HOMOSKEDASTIC:
        return Homoskedastic(_draw_iw(df, scale, rng))
    if regime == COMMON_SV:
        phi = float(_draw_phi_prior(prior, rng))
        sigma2 = _draw_inv_gamma(prior.sigma2_shape, prior.sigma2_scale, rng)
        h = simulate_ar1(T, 0.0, phi, sigma2, rng)[:, 0]
        return CommonSV(h, phi, sigma2, _draw_iw(df, scale, rng))
    if regime == CHOLESKY_SV:
        phi = np.asarray(_draw_phi_prior(prior, rng, size=n), dtype=float)
        sigma2 = np.array([_draw_inv_gamma(prior.sigma2_shape, prior.sigma2_scale, rng) for _ in range(n)])
        mu = prior.mu_mean + np.sqrt(prior.mu_var) * rng.standard_normal(n)
        h = simulate_ar1(T, mu, phi, sigma2, rng)
        b0 = np.eye(n)
        il = np.tril_indices(n, -1)
        b0[il] = np.sqrt(prior.b0_var) * rng.standard_normal(len(il[0]))
        return CholeskySV(h, mu, phi, sigma2, b0)
    raise ValueError(f"unknown volatility regime {regime!r}")


def forecast_chol_paths(state: VolatilityState, horizon: int, n_paths: int, rng) -> np.ndarray:
    """Lower Cholesky factors of ``Sigma_{T+1..T+horizon}``, shape ``(n_paths, horizon, n, n)``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = state.n
    if isinstance(state, Homoskedastic):
        return np.broadcast_to(state._chol, (n_paths, horizon, n, n)).copy()
    if isinstance(state, CommonSV):
        if state.h.size:
            h = np.full(n_paths, state.h[-1])
        else:
            h = np.sqrt(state.sigma2 / (1 - state.phi**2)) * rng.standard_normal(n_paths)
        sd = np.sqrt(state.sigma2)
        scale = np.empty((n_paths, horizon))
        for k in range(horizon):
            h = state.phi * h + sd * rng.standard_normal(n_paths)
            scale[:, k] = np.exp(0.5 * h)
        return scale[:, :, None, None] * state._chol
    if isinstance(state, CholeskySV):
        b0inv = state._b0inv()
        last = state.h[-1] if state.h.shape[0] else state.mu
        h = np.broadcast_to(last, (n_paths, n)).copy()
        sd = np.sqrt(state.sigma2)
        out = np.empty((n_paths, horizon, n, n))
        for k in range(horizon):
            h = state.mu + state.phi * (h - state.mu) + sd * rng.standard_normal((n_paths, n))
            out[:, k] = b0inv[None] * np.exp(0.5 * h)[:, None, :]
        return out
    raise TypeError(f"unknown volatility state {type(state).__name__}")


def forecast_sigma(state: VolatilityState, horizon: int, rng) -> np.ndarray:
    """One simulated path of ``Sigma_{T+1}, ..., Sigma_{T+horizon}``."""
    L = forecast_chol_paths(state, horizon, 1, rng)[0]
    return L @ np.swapaxes(L, -1, -2)
