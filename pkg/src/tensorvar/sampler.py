"""Gibbs sampler for VARs whose coefficient tensor has a rank-R CP form.

The three factor blocks are conditionally Gaussian given everything else.
Writing ``mu_t = A' x_t`` for the conditional mean of ``y_t``:

* block 1: ``mu_t = (z_t' (x) I_n) vec(Theta1)`` with ``z_t = Theta_{-1}' x_t``;
* block 2: ``mu_t = G_t vec(Theta2')`` with ``G_t[l, (j, r)] = Theta1[l, r] w_t[j, r]``
  and ``w_t[j, r] = sum_k X[t, j, k] Theta3[k, r]``;
* block 3: the same with ``v_t[k, r] = sum_j X[t, j, k] Theta2[j, r]``.

Precisions are accumulated period by period using ``Sigma_t^{-1}``, so the
``Tn x Tn`` block-diagonal covariance is never formed. :class:`LagSumOperator`
keeps the lag-by-lag (block 2) and variable-by-variable (block 3) sum
representations with explicit commutation permutations; it is used to check
the collapsed formulas above and for reference computations.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy import linalg

from . import volatility as vol
from .errors import SamplerError
from .tensor_core import (
    CPFactors,
    Tensor3,
    commutation,
    matricize,
    theta_minus,
)
from .var_data import VarDataset

JOINT = "joint"
PER_RANK = "per-rank"
AUTO = "auto"
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


# ---------------------------------------------------------------------------
# priors and Gaussian helpers


def _rank_indices(j: int, r: int, n: int, p: int, rank: int) -> np.ndarray:
    if j == 1:
        return r * n + np.arange(n)
    if j == 2:
        return np.arange(n) * rank + r
    if j == 3:
        return np.arange(p) * rank + r
    raise ValueError(f"block must be 1, 2 or 3, got {j!r}")


@dataclass(frozen=True)
class FactorPrior:
    """Independent Gaussian priors on the stacked factor vectors.

    ``means[j-1]`` is the prior mean as a matrix shaped like the factor, and
    ``covs[j-1]`` the covariance of ``vec(Theta1)``, ``vec(Theta2')`` or
    ``vec(Theta3')`` respectively.
    """

    means: tuple[np.ndarray, np.ndarray, np.ndarray]
    covs: tuple[np.ndarray, np.ndarray, np.ndarray]
    intercept_var: float = 10.0
    _precs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        means = tuple(np.array(m, dtype=float) for m in self.means)
        covs = tuple(np.atleast_2d(np.array(c, dtype=float)) for c in self.covs)
        n, rank = means[0].shape
        p = means[2].shape[0]
        sizes = (n * rank, n * rank, p * rank)
        for j, (c, d) in enumerate(zip(covs, sizes), start=1):
            if c.shape != (d, d):
                raise ValueError(f"prior covariance {j} has shape {c.shape}, expected {(d, d)}")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise ValueError(f"prior covariance {j} is not SPD") from None
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "_precs", tuple(np.linalg.inv(c) for c in covs))

    @classmethod
    def default(cls, n: int, p: int, rank: int, variances=(1.0, 1.0, 10.0), intercept_var=10.0):
        v1, v2, v3 = variances
        return cls(
            means=(np.zeros((n, rank)), np.zeros((n, rank)), np.zeros((p, rank))),
            covs=(v1 * np.eye(n * rank), v2 * np.eye(n * rank), v3 * np.eye(p * rank)),
            intercept_var=intercept_var,
        )

    @property
    def shape(self) -> tuple[int, int, int]:
        n, rank = self.means[0].shape
        return n, self.means[2].shape[0], rank

    def mean_vec(self, j: int) -> np.ndarray:
        m = self.means[j - 1]
        return m.ravel(order="F") if j == 1 else m.ravel()

    def precision(self, j: int) -> np.ndarray:
        return self._precs[j - 1]

    def rank_block(self, j: int, r: int) -> tuple[np.ndarray, np.ndarray]:
        """Marginal prior (mean, precision) of the r-th column of block j."""
        n, p, rank = self.shape
        idx = _rank_indices(j, r, n, p, rank)
        cov = self.covs[j - 1][np.ix_(idx, idx)]
        return self.mean_vec(j)[idx], np.linalg.inv(cov)

    def sample(self, rng) -> CPFactors:
        n, p, rank = self.shape
        vecs = [
            rng.multivariate_normal(self.mean_vec(j), self.covs[j - 1], method="cholesky")
            for j in (1, 2, 3)
        ]
        return CPFactors(
            vecs[0].reshape((n, rank), order="F"), vecs[1].reshape(n, rank), vecs[2].reshape(p, rank)
        )


class Conditional(NamedTuple):
    """Gaussian full conditional: mean and precision."""

    mean: np.ndarray
    precision: np.ndarray


def _cholesky_jitter(K: np.ndarray) -> np.ndarray:
    eye = np.eye(K.shape[0])
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    raise SamplerError("conditional precision is not positive definite", {"dim": K.shape[0]})


def _conditional(K: np.ndarray, b: np.ndarray) -> tuple[Conditional, np.ndarray]:
    K = 0.5 * (K + K.T)
    L = _cholesky_jitter(K)
    return Conditional(linalg.cho_solve((L, True), b), K), L


def gaussian_draw(cond: Conditional, rng, chol: Optional[np.ndarray] = None) -> np.ndarray:
    """Draw from ``N(mean, precision^{-1})`` via the Cholesky factor of the precision."""
    L = _cholesky_jitter(cond.precision) if chol is None else chol
    z = rng.standard_normal(cond.mean.shape[0])
    return cond.mean + linalg.solve_triangular(L.T, z, lower=False)


def _precisions(sigma_path, T: int) -> np.ndarray:
    if isinstance(sigma_path, np.ndarray):
        S = sigma_path
    else:
        S = sigma_path.precision_path(T)
    S = np.asarray(S, dtype=float)
    if S.shape[0] != T:
        raise ValueError(f"precision path has {S.shape[0]} periods, data has {T}")
    return S


def _target(ds: VarDataset, target) -> np.ndarray:
    return ds.Y if target is None else np.asarray(target, dtype=float)


# ---------------------------------------------------------------------------
# block features


def _rank_means(ds: VarDataset, factors: CPFactors) -> np.ndarray:
    """``z[t, r] = x_t' (theta3_r (x) theta2_r)``: the rank-r index entering ``mu_t``."""
    return ds.X @ theta_minus(factors, 1)


def _block_features(ds: VarDataset, factors: CPFactors, j: int) -> np.ndarray:
    Xa = ds.lag_array
    if j == 2:
        return np.einsum("tjk,kr->tjr", Xa, factors.theta3)
    if j == 3:
        return np.einsum("tjk,jr->tkr", Xa, factors.theta2)
    raise ValueError(f"block must be 2 or 3, got {j!r}")


def _partial_target(y, z, theta1, r):
    """``y_t - sum_{s != r} theta1_s z[t, s]``."""
    keep = np.ones(z.shape[1], dtype=bool)
    keep[r] = False
    return y - z[:, keep] @ theta1[:, keep].T


# ---------------------------------------------------------------------------
# full conditionals


def theta1_conditional(ds, factors, sigma_path, prior: FactorPrior, rank=None, target=None) -> Conditional:
    """Full conditional of ``vec(Theta1)`` (``rank=None``) or of its column ``rank``."""
    y = _target(ds, target)
    S = _precisions(sigma_path, ds.T)
    z = _rank_means(ds, factors)
    if rank is None:
        n, R = factors.n, factors.rank
        K = prior.precision(1) + np.einsum("tr,ts,tij->risj", z, z, S).reshape(n * R, n * R)
        Sy = np.einsum("tij,tj->ti", S, y)
        b = prior.precision(1) @ prior.mean_vec(1) + np.einsum("tr,ti->ri", z, Sy).ravel()
        return _conditional(K, b)[0]
    m0, P0 = prior.rank_block(1, rank)
    yr = _partial_target(y, z, factors.theta1, rank)
    zr = z[:, rank]
    K = P0 + np.einsum("t,tij->ij", zr * zr, S)
    b = P0 @ m0 + np.einsum("t,tij,tj->i", zr, S, yr)
    return _conditional(K, b)[0]


def _loading_conditional(ds, factors, sigma_path, prior, j, rank, target) -> Conditional:
    y = _target(ds, target)
    S = _precisions(sigma_path, ds.T)
    W = _block_features(ds, factors, j)
    t1 = factors.theta1
    if rank is None:
        m, R = W.shape[1], W.shape[2]
        M = np.einsum("ir,tij,js->trs", t1, S, t1)
        K = prior.precision(j) + np.einsum("tar,tbs,trs->arbs", W, W, M).reshape(m * R, m * R)
        g = np.einsum("ir,tij,tj->tr", t1, S, y)
        b = prior.precision(j) @ prior.mean_vec(j) + np.einsum("tar,tr->ar", W, g).ravel()
        return _conditional(K, b)[0]
    m0, P0 = prior.rank_block(j, rank)
    own = factors.theta2 if j == 2 else factors.theta3
    z = np.einsum("tar,ar->tr", W, own)
    yr = _partial_target(y, z, t1, rank)
    a = t1[:, rank]
    Sa = np.einsum("tij,j->ti", S, a)
    wr = W[:, :, rank]
    K = P0 + np.einsum("ta,tb,t->ab", wr, wr, Sa @ a)
    b = P0 @ m0 + np.einsum("ta,t->a", wr, np.einsum("ti,ti->t", Sa, yr))
    return _conditional(K, b)[0]


def theta2_conditional(ds, factors, sigma_path, prior, rank=None, target=None) -> Conditional:
    """Full conditional of ``vec(Theta2')`` or, with ``rank=r``, of column r of Theta2."""
    return _loading_conditional(ds, factors, sigma_path, prior, 2, rank, target)


def theta3_conditional(ds, factors, sigma_path, prior, rank=None, target=None) -> Conditional:
    """Full conditional of ``vec(Theta3')`` or, with ``rank=r``, of column r of Theta3."""
    return _loading_conditional(ds, factors, sigma_path, prior, 3, rank, target)


def intercept_conditional(ds, A, sigma_path, prior: FactorPrior, target=None) -> Conditional:
    y = _target(ds, target)
    S = _precisions(sigma_path, ds.T)
    resid = y - ds.X @ A
    K = np.eye(ds.n) / prior.intercept_var + S.sum(axis=0)
    b = np.einsum("tij,tj->i", S, resid)
    return _conditional(K, b)[0]


# ---------------------------------------------------------------------------
# draws


def draw_theta1_joint(ds, factors, sigma_path, prior, rng, target=None) -> np.ndarray:
    cond = theta1_conditional(ds, factors, sigma_path, prior, target=target)
    return gaussian_draw(cond, rng).reshape((factors.n, factors.rank), order="F")


def draw_theta1_rank(ds, factors, r, sigma_path, prior, rng, target=None) -> np.ndarray:
    if not 0 <= r < factors.rank:
        raise ValueError(f"rank index {r} out of range for R={factors.rank}")
    return gaussian_draw(theta1_conditional(ds, factors, sigma_path, prior, rank=r, target=target), rng)


def _draw_by_rank(j, ds, factors, sigma_path, prior, rng, target):
    S = _precisions(sigma_path, ds.T)
    for r in range(factors.rank):
        if j == 1:
            cond = theta1_conditional(ds, factors, S, prior, rank=r, target=target)
        else:
            cond = _loading_conditional(ds, factors, S, prior, j, r, target)
        col = gaussian_draw(cond, rng)
        mat = np.array((factors.theta1, factors.theta2, factors.theta3)[j - 1])
        mat[:, r] = col
        factors = factors.replace(**{f"theta{j}": mat})
    return (factors.theta1, factors.theta2, factors.theta3)[j - 1]


def draw_theta1(ds, factors, sigma_path, prior, rng, mode=JOINT, target=None) -> np.ndarray:
    if mode == JOINT:
        return draw_theta1_joint(ds, factors, sigma_path, prior, rng, target)
    if mode == PER_RANK:
        return _draw_by_rank(1, ds, factors, sigma_path, prior, rng, target)
    raise ValueError(f"unknown sampler mode {mode!r}")


def draw_theta2(ds, factors, sigma_path, prior, rng, mode=JOINT, target=None) -> np.ndarray:
    if mode == JOINT:
        cond = theta2_conditional(ds, factors, sigma_path, prior, target=target)
        return gaussian_draw(cond, rng).reshape(factors.n, factors.rank)
    if mode == PER_RANK:
        return _draw_by_rank(2, ds, factors, sigma_path, prior, rng, target)
    raise ValueError(f"unknown sampler mode {mode!r}")


def draw_theta3(ds, factors, sigma_path, prior, rng, mode=JOINT, target=None) -> np.ndarray:
    if mode == JOINT:
        cond = theta3_conditional(ds, factors, sigma_path, prior, target=target)
        return gaussian_draw(cond, rng).reshape(factors.p, factors.rank)
    if mode == PER_RANK:
        return _draw_by_rank(3, ds, factors, sigma_path, prior, rng, target)
    raise ValueError(f"unknown sampler mode {mode!r}")


# ---------------------------------------------------------------------------
# sum-of-Kronecker regressor maps


class LagSumOperator:
    """Linear map ``theta -> sum_i (slices[i] (x) loadings[i]) theta``.

    ``slices[i]`` is ``T x m`` and ``loadings[i]`` is ``n x R``; ``theta`` is
    ``vec`` of an ``R x m`` matrix (the rows of the ``m x R`` factor stacked)
    and the output is ``vec(Y')`` of length ``T n`` (time-major).
    """

    def __init__(self, slices, loadings):
        self.slices = np.stack([np.asarray(s, dtype=float) for s in slices])
        self.loadings = np.stack([np.asarray(c, dtype=float) for c in loadings])
        if self.slices.shape[0] != self.loadings.shape[0]:
            raise ValueError("need one loading matrix per slice")
        self.T, self.m = self.slices.shape[1:]
        self.n, self.R = self.loadings.shape[1:]

    @property
    def shape(self) -> tuple[int, int]:
        return self.T * self.n, self.m * self.R

    def matvec(self, theta) -> np.ndarray:
        F = np.asarray(theta, dtype=float).reshape(self.m, self.R)
        return np.einsum("ita,ar,ilr->tl", self.slices, F, self.loadings).ravel()

    def rmatvec(self, v) -> np.ndarray:
        V = np.asarray(v, dtype=float).reshape(self.T, self.n)
        return np.einsum("ita,tl,ilr->ar", self.slices, V, self.loadings).ravel()

    def time_blocks(self) -> np.ndarray:
        """``(T, n, m R)`` stack of the per-period regressor matrices."""
        G = np.einsum("ita,ilr->tlar", self.slices, self.loadings)
        return G.reshape(self.T, self.n, self.m * self.R)

    def to_dense(self) -> np.ndarray:
        eye = np.eye(self.m * self.R)
        return np.column_stack([self.matvec(e) for e in eye])

    def gram(self, precisions) -> np.ndarray:
        """``sum_i sum_j (slice_i' (x) C_i') Sigma^{-1} (slice_j (x) C_j)``."""
        S = np.asarray(precisions, dtype=float)
        CSC = np.einsum("ilr,tlk,jks->tijrs", self.loadings, S, self.loadings)
        G = np.einsum("ita,jtb,tijrs->arbs", self.slices, self.slices, CSC)
        return G.reshape(self.m * self.R, self.m * self.R)

    def shift(self, precisions, y) -> np.ndarray:
        """``sum_i (slice_i' (x) C_i') Sigma^{-1} vec(Y')``."""
        Sy = np.einsum("tlk,tk->tl", np.asarray(precisions, dtype=float), np.asarray(y, dtype=float))
        return np.einsum("ita,ilr,tl->ar", self.slices, self.loadings, Sy).ravel()


def build_theta2_regressors(ds: VarDataset, factors: CPFactors) -> LagSumOperator:
    """Lag-sum form: ``vec(Y') = sum_i (P_i2 X_(2)' (x) P_i1 Theta_{-2}) vec(Theta2')``.

    ``P_i2 X_(2)'`` is the i-th block of T rows of the transposed mode-2
    unfolding and ``P_i1 Theta_{-2}`` takes every p-th row (offset i) of
    ``P' Theta_{-2}``.
    """
    T, n, p = ds.T, ds.n, ds.p
    X2t = matricize(ds.XTensor, 2).T
    Ptheta = commutation(n, p).apply_transpose(theta_minus(factors, 2))
    return LagSumOperator(
        [X2t[i * T : (i + 1) * T] for i in range(p)], [Ptheta[i::p] for i in range(p)]
    )


def build_theta3_regressors(ds: VarDataset, factors: CPFactors) -> LagSumOperator:
    """Variable-sum form: ``vec(Y') = sum_i (Q_i2 X_(3)' (x) Q_i1 Theta_{-3}) vec(Theta3')``."""
    T, n = ds.T, ds.n
    X3t = matricize(ds.XTensor, 3).T
    Qtheta = commutation(n, n).apply_transpose(theta_minus(factors, 3))
    return LagSumOperator(
        [X3t[i * T : (i + 1) * T] for i in range(n)], [Qtheta[i::n] for i in range(n)]
    )


def mean_mode1(ds: VarDataset, factors: CPFactors) -> np.ndarray:
    """``X_(1) Theta_{-1} Theta1'``."""
    return ds.X @ theta_minus(factors, 1) @ factors.theta1.T


def mean_mode2_commutation(ds: VarDataset, coef: Tensor3) -> np.ndarray:
    """``sum_i (e_i' (x) I_T) E P (I_n (x) e_i)`` with ``E = X_(2)' A_(2)``."""
    T, n, p = ds.T, ds.n, ds.p
    E = matricize(ds.XTensor, 2).T @ matricize(coef, 2)
    EP = commutation(n, p).right_multiply(E)
    return sum(EP[i * T : (i + 1) * T, i::p] for i in range(p))


# ---------------------------------------------------------------------------
# chain


@dataclass
class McmcConfig:
    burn_in: int = 1000
    draws: int = 5000
    thin: int = 1
    rank: int = 1
    regime: str = vol.HOMOSKEDASTIC
    sampler_mode: str = AUTO
    seed: int = 0
    store_paths: bool = True

    def __post_init__(self):
        if self.draws < 1 or self.thin < 1 or self.burn_in < 0 or self.rank < 1:
            raise ValueError(
                f"need draws >= 1, thin >= 1, burn_in >= 0, rank >= 1; got {self}"
            )
        if self.regime not in vol.REGIMES:
            raise ValueError(f"unknown volatility regime {self.regime!r}")
        if self.sampler_mode not in (JOINT, PER_RANK, AUTO):
            raise ValueError(f"unknown sampler mode {self.sampler_mode!r}")

    def mode_for(self, n: int) -> str:
        if self.sampler_mode != AUTO:
            return self.sampler_mode
        return JOINT if n * self.rank <= 400 else PER_RANK


@dataclass
class PosteriorDraws:
    """Stored MCMC output, one leading axis entry per retained draw."""

    regime: str
    n: int
    p: int
    A: np.ndarray
    rank: Optional[int] = None
    theta1: Optional[np.ndarray] = None
    theta2: Optional[np.ndarray] = None
    theta3: Optional[np.ndarray] = None
    intercept: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    b0: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict, repr=False)

    BLOCKS = ("theta1", "theta2", "theta3", "A", "intercept", "omega", "h", "phi", "sigma2", "mu", "b0")

    def __len__(self) -> int:
        return self.A.shape[0]

    def coef(self, m: int) -> np.ndarray:
        return self.A[m]

    def factors(self, m: int) -> CPFactors:
        return CPFactors(self.theta1[m], self.theta2[m], self.theta3[m])

    def volatility_state(self, m: int) -> vol.VolatilityState:
        if self.regime == vol.HOMOSKEDASTIC:
            return vol.Homoskedastic(self.omega[m])
        if self.regime == vol.COMMON_SV:
            return vol.CommonSV(self.h[m], self.phi[m], self.sigma2[m], self.omega[m])
        if self.regime == vol.CHOLESKY_SV:
            return vol.CholeskySV(self.h[m], self.mu[m], self.phi[m], self.sigma2[m], self.b0[m])
        raise ValueError(f"unknown regime {self.regime!r}")

    def mean_coef(self) -> np.ndarray:
        return self.A.mean(axis=0)

    def _meta(self) -> dict:
        return {"regime": self.regime, "n": self.n, "p": self.p, "rank": self.rank, "count": len(self)}

    def to_csv(self, path) -> None:
        """Long layout: one row per (draw, block) with the flattened values (C order).

        The first line is ``# tensorvar-draws v1 <json metadata>``, then the
        header ``draw,block,shape,values``. ``values`` are space-separated
        shortest round-trip float literals, so reading back is exact.
        """
        blocks = [(b, getattr(self, b)) for b in self.BLOCKS if getattr(self, b) is not None]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# tensorvar-draws v1 " + json.dumps(self._meta(), sort_keys=True) + "\n")
            fh.write("draw,block,shape,values\n")
            for m in range(len(self)):
                for name, arr in blocks:
                    a = np.asarray(arr[m], dtype=float)
                    shape = "x".join(str(s) for s in a.shape) or "scalar"
                    vals = " ".join(repr(float(v)) for v in a.ravel())
                    fh.write(f"{m},{name},{shape},{vals}\n")

    @classmethod
    def from_csv(cls, path) -> "PosteriorDraws":
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith("# tensorvar-draws v1 "):
                raise ValueError(f"{path} is not a draws file")
            meta = json.loads(first[len("# tensorvar-draws v1 ") :])
            fh.readline()
            acc: dict[str, list] = {}
            for line in fh:
                _, name, shape, vals = line.rstrip("\n").split(",", 3)
                dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
                arr = np.array([float(v) for v in vals.split()] if vals else [], dtype=float)
                acc.setdefault(name, []).append(arr.reshape(dims))
        arrays = {k: np.stack(v) for k, v in acc.items()}
        return cls(regime=meta["regime"], n=meta["n"], p=meta["p"], rank=meta["rank"], **arrays)


def initial_factors(ds: VarDataset, rank: int, prior: FactorPrior, rng, target=None) -> CPFactors:
    """Start near a low-rank least-squares fit when ``T > n p``, else draw from the prior."""
    n, p = ds.n, ds.p
    y = _target(ds, target)
    if ds.T <= n * p:
        return prior.sample(rng)
    A_ls = np.linalg.lstsq(ds.X, y, rcond=None)[0]
    U, s, Vt = np.linalg.svd(A_ls.T, full_matrices=False)
    k = min(rank, s.size)
    theta1 = np.zeros((n, rank))
    theta2 = np.zeros((n, rank))
    theta1[:, :k] = U[:, :k] * np.sqrt(s[:k])
    for r in range(k):
        v = Vt[r] * np.sqrt(s[r])
        theta2[:, r] = v.reshape(p, n).sum(axis=0)
    if k < rank:
        extra = prior.sample(rng)
        theta1[:, k:] = 1e-3 * extra.theta1[:, k:]
        theta2[:, k:] = 1e-3 * extra.theta2[:, k:]
    theta3 = np.full((p, rank), 1.0 / p)
    return CPFactors(theta1, theta2, theta3)


def gibbs_sweep(ds, factors, c, vstate, prior, vol_prior, rng, mode=JOINT, mh=None, timing=None):
    """One pass theta1 -> theta2 -> theta3 -> intercept -> volatility.

    Returns the updated ``(factors, intercept, volatility state)``. ``timing``,
    when given, accumulates seconds per block.
    """
    T = ds.T
    S = vstate.precision_path(T)
    target = ds.Y - c if ds.intercept else ds.Y
    t0 = time.perf_counter()
    factors = factors.replace(theta1=draw_theta1(ds, factors, S, prior, rng, mode, target))
    t1 = time.perf_counter()
    factors = factors.replace(theta2=draw_theta2(ds, factors, S, prior, rng, mode, target))
    t2 = time.perf_counter()
    factors = factors.replace(theta3=draw_theta3(ds, factors, S, prior, rng, mode, target))
    t3 = time.perf_counter()
    A = factors.coef_matrix()
    if ds.intercept:
        c = gaussian_draw(intercept_conditional(ds, A, S, prior), rng)
    t4 = time.perf_counter()
    vstate = vol.update_volatility(vstate, ds.Y - ds.X @ A - c, vol_prior, rng, mh)
    t5 = time.perf_counter()
    if timing is not None:
        for key, dt in zip(("theta1", "theta2", "theta3", "intercept", "volatility"),
                           (t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4)):
            timing[key] = timing.get(key, 0.0) + dt
    return factors, c, vstate


def run_chain(
    ds: VarDataset,
    config: McmcConfig,
    prior: Optional[FactorPrior] = None,
    vol_prior: Optional[vol.VolatilityPrior] = None,
    rng=None,
    init: Optional[CPFactors] = None,
    init_vol: Optional[vol.VolatilityState] = None,
) -> PosteriorDraws:
    """Run the Gibbs sampler and return ``config.draws`` retained draws.

    Each sweep updates Theta1, Theta2, Theta3, the intercept (if any) and then
    the volatility block. ``burn_in + draws * thin`` sweeps are run.
    """
    n, p, R, T = ds.n, ds.p, config.rank, ds.T
    prior = prior or FactorPrior.default(n, p, R)
    if prior.shape != (n, p, R):
        raise ValueError(f"prior is for (n, p, R)={prior.shape}, data/config need {(n, p, R)}")
    vol_prior = vol_prior or vol.VolatilityPrior()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    mode = config.mode_for(n)

    factors = init or initial_factors(ds, R, prior, rng)
    c = np.zeros(n)
    A = factors.coef_matrix()
    if init_vol is not None:
        vstate = init_vol
    else:
        vstate = vol.initial_state(config.regime, ds.Y - ds.X @ A, vol_prior)
    mh = vol.MHStats()
    timing = {"theta1": 0.0, "theta2": 0.0, "theta3": 0.0, "intercept": 0.0, "volatility": 0.0}

    M = config.draws
    out = {
        "A": np.empty((M, n * p, n)),
        "theta1": np.empty((M, n, R)),
        "theta2": np.empty((M, n, R)),
        "theta3": np.empty((M, p, R)),
    }
    if ds.intercept:
        out["intercept"] = np.empty((M, n))
    hlen = T if config.store_paths else min(T, 1)
    if config.regime in (vol.HOMOSKEDASTIC, vol.COMMON_SV):
        out["omega"] = np.empty((M, n, n))
    if config.regime == vol.COMMON_SV:
        out.update(h=np.empty((M, hlen)), phi=np.empty(M), sigma2=np.empty(M))
    if config.regime == vol.CHOLESKY_SV:
        out.update(
            h=np.empty((M, hlen, n)),
            mu=np.empty((M, n)),
            phi=np.empty((M, n)),
            sigma2=np.empty((M, n)),
            b0=np.empty((M, n, n)),
        )

    total = config.burn_in + M * config.thin
    kept = 0
    for it in range(total):
        try:
            factors, c, vstate = gibbs_sweep(ds, factors, c, vstate, prior, vol_prior, rng, mode, mh, timing)
        except SamplerError as exc:
            exc.diagnostics["sweep"] = it
            raise SamplerError(f"sweep {it}: {exc}", exc.diagnostics) from exc
        A = factors.coef_matrix()
        if it < config.burn_in or (it - config.burn_in + 1) % config.thin:
            continue
        out["A"][kept] = A
        out["theta1"][kept] = factors.theta1
        out["theta2"][kept] = factors.theta2
        out["theta3"][kept] = factors.theta3
        if ds.intercept:
            out["intercept"][kept] = c
        if "omega" in out:
            out["omega"][kept] = vstate.omega
        if config.regime == vol.COMMON_SV:
            out["h"][kept] = vstate.h[T - hlen :]
            out["phi"][kept] = vstate.phi
            out["sigma2"][kept] = vstate.sigma2
        elif config.regime == vol.CHOLESKY_SV:
            out["h"][kept] = vstate.h[T - hlen :]
            out["mu"][kept] = vstate.mu
            out["phi"][kept] = vstate.phi
            out["sigma2"][kept] = vstate.sigma2
            out["b0"][kept] = vstate.b0
        kept += 1

    draws = PosteriorDraws(regime=config.regime, n=n, p=p, rank=R, **out)
    draws.diagnostics = {"timing": timing, "acceptance": mh.rates(), "sampler_mode": mode, "sweeps": total}
    return draws
