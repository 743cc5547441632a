"""Minnesota-prior BVAR in natural-conjugate (matric-normal inverse-Wishart) form.

Prior::

    Sigma ~ IW(nu0, S0),   vec(A) | Sigma ~ N(vec(A0), Sigma (x) V0)

with ``V0`` diagonal. The posterior is available in closed form, so draws are
exact and no chain is needed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, stats

from . import volatility as vol
from .sampler import PosteriorDraws
from .var_data import VarDataset


@dataclass(frozen=True)
class MinnesotaSpec:
    """Hyperparameters of the natural-conjugate Minnesota prior.

    Parameters
    ----------
    lambda2 : float
        Overall shrinkage; the prior variance of lag-l coefficients on
        variable j is ``lambda2 / (l**decay * s_j**2)`` (times ``Sigma``).
    decay : float
        Lag-decay exponent.
    ar_lags : int
        Lag order of the univariate autoregressions giving ``s_j**2``.
    own_mean : float
        Prior mean of own first-lag coefficients (0 for stationary data).
    intercept_var : float
        Prior variance scale of the intercept.
    nu0_extra : int
        ``nu0 = n + nu0_extra``.
    """

    lambda2: float = 0.04
    decay: float = 2.0
    ar_lags: int = 4
    own_mean: float = 0.0
    intercept_var: float = 100.0
    nu0_extra: int = 2

    def __post_init__(self):
        if not self.lambda2 > 0:
            raise ValueError(f"lambda2 must be positive, got {self.lambda2}")
        if not self.intercept_var > 0:
            raise ValueError(f"intercept_var must be positive, got {self.intercept_var}")
        if self.ar_lags < 1:
            raise ValueError("ar_lags must be >= 1")


@dataclass(frozen=True)
class NIWPrior:
    A0: np.ndarray
    V0: np.ndarray  # diagonal of the row covariance
    S0: np.ndarray
    nu0: float


@dataclass(frozen=True)
class NIWPosterior:
    """``Sigma ~ IW(nu, S)`` and ``A | Sigma ~ MN(A_hat, K^{-1}, Sigma)``."""

    A_hat: np.ndarray
    K: np.ndarray
    S: np.ndarray
    nu: float
    n: int
    p: int
    intercept: bool

    def covariance_mean(self) -> np.ndarray:
        return self.S / (self.nu - self.n - 1)


def ar_residual_variances(series: np.ndarray, lags: int = 4) -> np.ndarray:
    """OLS residual variance of an AR(lags) with constant, one per column."""
    series = np.asarray(series, dtype=float)
    T_raw, n = series.shape
    lags = min(lags, max(T_raw - 2, 1) // 2 or 1)
    out = np.empty(n)
    for j in range(n):
        x = series[:, j]
        Y = x[lags:]
        X = np.column_stack([np.ones(Y.size)] + [x[lags - l : T_raw - l] for l in range(1, lags + 1)])
        beta = np.linalg.lstsq(X, Y, rcond=None)[0]
        e = Y - X @ beta
        dof = max(Y.size - X.shape[1], 1)
        out[j] = e @ e / dof
    if np.any(~(out > 0)):
        # degenerate (e.g. perfectly fitted) series: fall back to the raw variance
        raw = series.var(axis=0)
        out = np.where(out > 0, out, np.where(raw > 0, raw, 1.0))
    return out


def minnesota_prior(ds: VarDataset, spec: MinnesotaSpec) -> NIWPrior:
    n, p = ds.n, ds.p
    s2 = ar_residual_variances(ds.series, spec.ar_lags)
    lags = np.repeat(np.arange(1, p + 1), n)
    V0 = spec.lambda2 / (lags.astype(float) ** spec.decay * np.tile(s2, p))
    A0 = np.zeros((n * p, n))
    A0[:n, :n] = spec.own_mean * np.eye(n)
    if ds.intercept:
        V0 = np.append(V0, spec.intercept_var)
        A0 = np.vstack([A0, np.zeros((1, n))])
    return NIWPrior(A0=A0, V0=V0, S0=np.diag(s2), nu0=n + spec.nu0_extra)


def conjugate_update(prior: NIWPrior, X: np.ndarray, Y: np.ndarray) -> NIWPosterior:
    """One conjugate step; also usable with a general (non-diagonal) prior via :func:`update_posterior`."""
    V0 = np.asarray(prior.V0, dtype=float)
    if np.any(~(V0 > 0)):
        raise ValueError("prior row covariance must be positive definite")
    P0 = np.diag(1.0 / V0)
    return _update(prior.A0, P0, prior.S0, prior.nu0, X, Y)


def _update(A0, P0, S0, nu0, X, Y, n=None, p=None, intercept=False) -> NIWPosterior:
    K = P0 + X.T @ X
    try:
        cK = linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError:
        raise ValueError("posterior row precision is singular") from None
    A_hat = linalg.cho_solve(cK, P0 @ A0 + X.T @ Y)
    S = S0 + Y.T @ Y + A0.T @ P0 @ A0 - A_hat.T @ K @ A_hat
    S = 0.5 * (S + S.T)
    n = Y.shape[1] if n is None else n
    return NIWPosterior(A_hat, K, S, nu0 + Y.shape[0], n, p or 0, intercept)


def update_posterior(post: NIWPosterior, X: np.ndarray, Y: np.ndarray) -> NIWPosterior:
    """Treat ``post`` as the prior and condition on further rows ``(X, Y)``."""
    return _update(post.A_hat, post.K, post.S, post.nu, X, Y, post.n, post.p, post.intercept)


def fit_conjugate(ds: VarDataset, spec: Optional[MinnesotaSpec] = None) -> NIWPosterior:
    if ds.T < 1:
        raise ValueError("need at least one observation")
    spec = spec or MinnesotaSpec()
    prior = minnesota_prior(ds, spec)
    if np.any(~np.isfinite(prior.V0)) or np.any(~(prior.V0 > 0)):
        raise ValueError("Minnesota prior scale is singular (check the AR residual variances)")
    post = conjugate_update(prior, ds.regressors, ds.Y)
    return NIWPosterior(post.A_hat, post.K, post.S, post.nu, ds.n, ds.p, ds.intercept)


def sample_posterior(post: NIWPosterior, M: int, rng) -> PosteriorDraws:
    """``M`` exact joint draws of ``(A, Sigma)``."""
    n, p = post.n, post.p
    k = post.A_hat.shape[0]
    A = np.empty((M, n * p, n))
    c = np.empty((M, n)) if post.intercept else None
    omega = np.empty((M, n, n))
    if M:
        LK = np.linalg.cholesky(post.K)
        sig = stats.invwishart(df=post.nu, scale=post.S)
        for m in range(M):
            Sigma = np.atleast_2d(sig.rvs(random_state=rng))
            Sigma = 0.5 * (Sigma + Sigma.T)
            C = np.linalg.cholesky(Sigma)
            Z = rng.standard_normal((k, n))
            draw = post.A_hat + linalg.solve_triangular(LK.T, Z, lower=False) @ C.T
            A[m] = draw[: n * p]
            if c is not None:
                c[m] = draw[n * p]
            omega[m] = Sigma
    return PosteriorDraws(regime=vol.HOMOSKEDASTIC, n=n, p=p, A=A, intercept=c, omega=omega)


def run_bvar(ds: VarDataset, spec: Optional[MinnesotaSpec], M: int, rng) -> PosteriorDraws:
    return sample_posterior(fit_conjugate(ds, spec), M, rng)
