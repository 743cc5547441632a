"""Stacked VAR objects built from a quarterly panel."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dates import from_ordinal, normalize_quarter, quarter_ordinal, quarter_range
from .errors import DataError, InsufficientDataError
from .tensor_core import Tensor3


@dataclass(frozen=True)
class SeriesPanel:
    """``T_raw x n`` block of observations with names and quarter stamps."""

    values: np.ndarray
    names: tuple[str, ...]
    dates: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        names = tuple(str(s) for s in self.names)
        dates = tuple(normalize_quarter(d) for d in self.dates)
        if values.shape != (len(dates), len(names)):
            raise DataError(
                f"values shape {values.shape} does not match {len(dates)} dates x {len(names)} names"
            )
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"missing or non-finite value at {dates[r]}, column {names[c]!r}")
        ords = [quarter_ordinal(d) for d in dates]
        for k in range(1, len(ords)):
            if ords[k] != ords[k - 1] + 1:
                raise DataError(f"dates not consecutive quarters at {dates[k - 1]} -> {dates[k]}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "dates", dates)

    @classmethod
    def from_array(cls, values, names=None, start="2000Q1") -> "SeriesPanel":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        names = names or [f"y{i + 1}" for i in range(values.shape[1])]
        start_ord = quarter_ordinal(start)
        dates = [from_ordinal(start_ord + k) for k in range(values.shape[0])]
        return cls(values, tuple(names), tuple(dates))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def index_of(self, date) -> int:
        d = normalize_quarter(date)
        try:
            return self.dates.index(d)
        except ValueError:
            raise KeyError(f"date {d} not in panel ({self.dates[0]}..{self.dates[-1]})") from None

    def slice(self, start=None, end=None) -> "SeriesPanel":
        """Sub-panel between two quarter stamps, inclusive."""
        i0 = 0 if start is None else self.index_of(start)
        i1 = len(self) - 1 if end is None else self.index_of(end)
        return SeriesPanel(self.values[i0 : i1 + 1], self.names, self.dates[i0 : i1 + 1])

    def select(self, names: Sequence[str]) -> "SeriesPanel":
        idx = []
        for nm in names:
            if nm not in self.names:
                raise KeyError(f"variable {nm!r} not in panel")
            idx.append(self.names.index(nm))
        return SeriesPanel(self.values[:, idx], tuple(names), self.dates)

    def with_values(self, values) -> "SeriesPanel":
        return SeriesPanel(values, self.names, self.dates)


@dataclass(frozen=True)
class VarDataset:
    """Y, X and the lag tensor of a VAR(p).

    Row t of ``X`` is ``(y_{t-1}', ..., y_{t-p}')``; ``x_next`` is the lag
    vector for the first out-of-sample period. When ``intercept`` is set the
    ones column is kept outside ``X`` and the tensor.
    """

    Y: np.ndarray
    X: np.ndarray
    XTensor: Tensor3 = field(repr=False)
    p: int
    intercept: bool
    x_next: np.ndarray = field(repr=False)
    series: np.ndarray = field(repr=False)
    names: tuple[str, ...] = ()
    dates: tuple[str, ...] = ()

    @property
    def T(self) -> int:
        return self.Y.shape[0]

    @property
    def n(self) -> int:
        return self.Y.shape[1]

    @property
    def regressors(self) -> np.ndarray:
        """``X`` with the ones column appended when the model has an intercept."""
        if self.intercept:
            return np.hstack([self.X, np.ones((self.T, 1))])
        return self.X

    @property
    def lag_array(self) -> np.ndarray:
        """``(T, n, p)`` array view of the lag tensor."""
        return self.XTensor.to_array()


def lag_matrix(values: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    T_raw, n = values.shape
    T = T_raw - p
    X = np.empty((T, n * p))
    for k in range(p):
        X[:, k * n : (k + 1) * n] = values[p - 1 - k : T_raw - 1 - k]
    return values[p:], X


def build_dataset(panel, p: int, intercept: bool = False) -> VarDataset:
    """Stack a panel (or raw ``T_raw x n`` array) into VAR form."""
    if isinstance(panel, SeriesPanel):
        values, names, dates = panel.values, panel.names, panel.dates
    else:
        values = np.asarray(panel, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        names, dates = tuple(f"y{i + 1}" for i in range(values.shape[1])), ()
    if p < 1:
        raise ValueError(f"lag order must be >= 1, got {p}")
    T_raw, n = values.shape
    if T_raw <= p:
        raise InsufficientDataError(f"need more than p={p} observations, got {T_raw}")
    Y, X = lag_matrix(values, p)
    # X row t is vec of the n x p matrix (y_{t-1}, ..., y_{t-p}); first index fastest.
    xt = Tensor3((Y.shape[0], n, p), X.ravel(order="F"))
    x_next = values[::-1][:p].ravel()
    Y.flags.writeable = False
    X.flags.writeable = False
    x_next.flags.writeable = False
    return VarDataset(
        Y=Y,
        X=X,
        XTensor=xt,
        p=p,
        intercept=bool(intercept),
        x_next=x_next,
        series=values,
        names=tuple(names),
        dates=tuple(dates[p:]) if dates else (),
    )


def residuals(ds: VarDataset, A) -> np.ndarray:
    """``U = Y - X A``; ``A`` has an extra last row for the intercept when present."""
    A = np.asarray(A, dtype=float)
    Xr = ds.regressors
    if A.shape != (Xr.shape[1], ds.n):
        raise ValueError(f"A has shape {A.shape}, expected {(Xr.shape[1], ds.n)}")
    return ds.Y - Xr @ A


def simulate_var(A, intercept, sigmas, y_init, rng=None, shocks=None) -> np.ndarray:
    """Simulate ``y_t = c + A' x_t + u_t`` with ``u_t ~ N(0, sigmas[t])``.

    ``y_init`` holds the ``p`` pre-sample rows in time order. Returns the
    ``(p + T) x n`` panel including the initial rows.
    """
    A = np.asarray(A, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    y_init = np.atleast_2d(np.asarray(y_init, dtype=float))
    p, n = y_init.shape
    T = sigmas.shape[0]
    c = np.zeros(n) if intercept is None else np.asarray(intercept, dtype=float)
    if shocks is None:
        z = rng.standard_normal((T, n))
        shocks = np.einsum("tij,tj->ti", np.linalg.cholesky(sigmas), z)
    out = np.empty((p + T, n))
    out[:p] = y_init
    for t in range(T):
        x = out[t : t + p][::-1].ravel()
        out[p + t] = c + x @ A + shocks[t]
    return out


__all__ = [
    "SeriesPanel",
    "VarDataset",
    "build_dataset",
    "residuals",
    "lag_matrix",
    "simulate_var",
    "quarter_range",
]
