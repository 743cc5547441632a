"""Synthetic TVAR data with known parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import volatility as vol
from .tensor_core import CPFactors
from .var_data import SeriesPanel, simulate_var


def companion_radius(A: np.ndarray, n: int, p: int) -> float:
    """Spectral radius of the VAR companion matrix for ``A`` stacked ``(n p, n)``."""
    C = np.zeros((n * p, n * p))
    C[:n] = A.T
    if p > 1:
        C[n:, : n * (p - 1)] = np.eye(n * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(C))))


def random_factors(n: int, p: int, rank: int, rng, radius: float = 0.8, decay: float = 0.6) -> CPFactors:
    """Gaussian factors with geometrically decaying lag loadings, shrunk until
    the implied VAR is stationary with companion radius at most ``radius``."""
    theta1 = rng.standard_normal((n, rank))
    theta2 = rng.standard_normal((n, rank)) / np.sqrt(n)
    theta3 = (decay ** np.arange(p))[:, None] * (1.0 + 0.2 * rng.standard_normal((p, rank)))
    f = CPFactors(theta1, theta2, theta3)
    for _ in range(200):
        if companion_radius(f.coef_matrix(), n, p) <= radius:
            return f
        f = f.replace(theta3=0.95 * f.theta3)
    raise RuntimeError("could not scale factors to a stationary VAR")


@dataclass
class SimulationResult:
    panel: SeriesPanel
    factors: CPFactors
    A: np.ndarray
    sigmas: np.ndarray
    h: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    def truth(self) -> dict:
        out = {
            "theta1": self.factors.theta1.tolist(),
            "theta2": self.factors.theta2.tolist(),
            "theta3": self.factors.theta3.tolist(),
            "A": self.A.tolist(),
            "params": self.params,
        }
        if self.h is not None:
            out["h"] = self.h.tolist()
        return out


def volatility_path(regime: str, n: int, T: int, rng, omega=None, phi=0.95, sigma2=0.05, mu=0.0, b0=None):
    """Covariance path ``(T, n, n)`` and log-volatilities for a regime.

    ``sigma2 = 0`` is allowed here and gives a degenerate (constant) path.
    """
    omega = np.eye(n) if omega is None else np.asarray(omega, dtype=float)
    if regime == vol.HOMOSKEDASTIC:
        return np.broadcast_to(omega, (T, n, n)).copy(), None
    if regime == vol.COMMON_SV:
        h = vol.simulate_ar1(T, 0.0, phi, sigma2, rng)[:, 0] if sigma2 > 0 else np.zeros(T)
        return np.exp(h)[:, None, None] * omega, h
    if regime == vol.CHOLESKY_SV:
        b0 = np.eye(n) if b0 is None else np.asarray(b0, dtype=float)
        mu_v, phi_v, s2_v = (np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in (mu, phi, sigma2))
        h = vol.simulate_ar1(T, mu_v, phi_v, np.maximum(s2_v, 1e-300), rng)
        h = np.where(s2_v > 0, h, mu_v)
        b0inv = np.linalg.inv(b0)
        sig = np.einsum("ik,tk,jk->tij", b0inv, np.exp(h), b0inv)
        return sig, h
    raise ValueError(f"unknown volatility regime {regime!r}")


def simulate_tvar(
    factors: CPFactors,
    T: int,
    regime: str,
    rng,
    burn: int = 100,
    intercept=None,
    start: str = "1960Q1",
    names=None,
    **vol_params,
) -> SimulationResult:
    """Simulate ``p + T`` observations (``p`` presample rows, then ``T``) from the TVAR.

    The first ``burn`` periods are simulated and discarded, so the returned
    presample rows come from (approximately) the stationary distribution. The
    returned ``sigmas`` and ``h`` refer to the ``T`` modelled periods.
    """
    n, p = factors.n, factors.p
    A = factors.coef_matrix()
    if burn < p:
        raise ValueError("burn must be at least p")
    sig, h = volatility_path(regime, n, burn + T, rng, **vol_params)
    # row k of the simulated panel (k >= p) has covariance sig[k]
    y = simulate_var(A, intercept, sig[p:], np.zeros((p, n)), rng)[burn - p :]
    panel = SeriesPanel.from_array(y, names, start)
    params = {"regime": regime, "T": T, "burn": burn}
    params.update({k: (np.asarray(v).tolist() if v is not None else None) for k, v in vol_params.items()})
    return SimulationResult(panel, factors, A, sig[burn:], None if h is None else h[burn:], params)
