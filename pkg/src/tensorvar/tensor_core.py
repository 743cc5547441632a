"""Dense third-order tensors, CP composition and the matricization machinery.

Storage convention: a tensor of shape ``(d1, d2, d3)`` is kept as a flat
vector in which the *first* index runs fastest (Fortran order). With this
layout the mode-1 unfolding is a plain reshape, and element ``(i1, i2, i3)``
lives at flat position ``i1 + d1 * (i2 + d2 * i3)`` (0-based).

Mode-k unfoldings put index k on the rows and keep the remaining two indices
in their original order, first one fastest, on the columns. For the mode-2
unfolding of a ``(T, n, p)`` tensor this gives column ``j = i1 + T * i3``,
i.e. ``j = (i3 - 1) T + i1`` in 1-based notation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import khatri_rao

_MODES = (1, 2, 3)


def _check_mode(mode: int) -> None:
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


@dataclass(frozen=True)
class Tensor3:
    """Third-order array with a fixed first-index-fastest linearization."""

    dims: tuple[int, int, int]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        values = np.array(self.values, dtype=float).ravel()
        if values.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(
                f"values has {values.size} entries, expected {dims[0] * dims[1] * dims[2]}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, arr) -> "Tensor3":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d array, got shape {arr.shape}")
        return cls(arr.shape, arr.ravel(order="F"))

    @classmethod
    def zeros(cls, dims) -> "Tensor3":
        return cls(dims, np.zeros(int(np.prod(dims))))

    def to_array(self) -> np.ndarray:
        return self.values.reshape(self.dims, order="F")

    def flat_index(self, i1: int, i2: int, i3: int) -> int:
        d1, d2, d3 = self.dims
        if not (0 <= i1 < d1 and 0 <= i2 < d2 and 0 <= i3 < d3):
            raise IndexError(f"index {(i1, i2, i3)} out of range for dims {self.dims}")
        return i1 + d1 * (i2 + d2 * i3)

    def __getitem__(self, idx) -> float:
        return float(self.values[self.flat_index(*idx)])

    def __add__(self, other: "Tensor3") -> "Tensor3":
        if self.dims != other.dims:
            raise ValueError("dimension mismatch")
        return Tensor3(self.dims, self.values + other.values)

    def __mul__(self, scalar: float) -> "Tensor3":
        return Tensor3(self.dims, self.values * float(scalar))

    __rmul__ = __mul__


def unfold_column(mode: int, dims, i1: int, i2: int, i3: int) -> tuple[int, int]:
    """0-based (row, column) of element ``(i1, i2, i3)`` in the mode-k unfolding."""
    _check_mode(mode)
    d1, d2, _ = dims
    if mode == 1:
        return i1, i2 + d2 * i3
    if mode == 2:
        return i2, i1 + d1 * i3
    return i3, i1 + d1 * i2


def fold_index(mode: int, dims, row: int, col: int) -> tuple[int, int, int]:
    """Inverse of :func:`unfold_column`.

    With 0-based columns the split is ``divmod``; the 1-based analogue must
    read a zero remainder as the last position of the fast index.
    """
    _check_mode(mode)
    d1, d2, _ = dims
    if mode == 1:
        i3, i2 = divmod(col, d2)
        return row, i2, i3
    if mode == 2:
        i3, i1 = divmod(col, d1)
        return i1, row, i3
    i2, i1 = divmod(col, d1)
    return i1, i2, row


def matricize(t: Tensor3, mode: int) -> np.ndarray:
    """Mode-k unfolding: ``(d_k, prod of the other two dims)``."""
    _check_mode(mode)
    arr = t.to_array()
    k = mode - 1
    return np.moveaxis(arr, k, 0).reshape(t.dims[k], -1, order="F")


def dematricize(mat, mode: int, dims) -> Tensor3:
    """Rebuild a tensor of shape ``dims`` from its mode-k unfolding."""
    _check_mode(mode)
    mat = np.asarray(mat, dtype=float)
    k = mode - 1
    rest = [d for i, d in enumerate(dims) if i != k]
    if mat.shape != (dims[k], rest[0] * rest[1]):
        raise ValueError(f"matrix shape {mat.shape} does not fit mode-{mode} of {tuple(dims)}")
    arr = mat.reshape((dims[k], rest[0], rest[1]), order="F")
    return Tensor3.from_array(np.moveaxis(arr, 0, k))


@dataclass(frozen=True)
class CPFactors:
    """Factor matrices of a rank-R CP decomposition of an ``n x n x p`` tensor.

    ``theta1`` and ``theta2`` are ``n x R``; ``theta3`` is ``p x R``. Column r
    of each matrix holds the r-th component vector.
    """

    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray

    def __post_init__(self):
        mats = []
        for name in ("theta1", "theta2", "theta3"):
            m = np.array(getattr(self, name), dtype=float)
            if m.ndim == 1:
                m = m[:, None]
            if m.ndim != 2:
                raise ValueError(f"{name} must be a matrix, got shape {m.shape}")
            m.flags.writeable = False
            object.__setattr__(self, name, m)
            mats.append(m)
        t1, t2, t3 = mats
        if not (t1.shape[1] == t2.shape[1] == t3.shape[1]):
            raise ValueError(
                f"factor matrices disagree on rank: {t1.shape}, {t2.shape}, {t3.shape}"
            )
        if t1.shape[0] != t2.shape[0]:
            raise ValueError(f"theta1 and theta2 need equal row counts: {t1.shape}, {t2.shape}")
        if t1.shape[1] < 1:
            raise ValueError("rank must be positive")

    @property
    def n(self) -> int:
        return self.theta1.shape[0]

    @property
    def p(self) -> int:
        return self.theta3.shape[0]

    @property
    def rank(self) -> int:
        return self.theta1.shape[1]

    @property
    def n_params(self) -> int:
        return (2 * self.n + self.p) * self.rank

    def vec(self, j: int) -> np.ndarray:
        """Stacked vector for block j: columns of theta1, rows of theta2/theta3."""
        if j == 1:
            return self.theta1.ravel(order="F")
        if j == 2:
            return self.theta2.ravel()
        if j == 3:
            return self.theta3.ravel()
        raise ValueError(f"block must be 1, 2 or 3, got {j!r}")

    def replace(self, **blocks) -> "CPFactors":
        kw = {"theta1": self.theta1, "theta2": self.theta2, "theta3": self.theta3}
        kw.update(blocks)
        return CPFactors(**kw)

    def coef_matrix(self) -> np.ndarray:
        """VAR coefficients stacked as ``(A_1, ..., A_p)'`` of shape ``(n p, n)``."""
        return cp_matricized(self, 1).T


def factors_from_vec(j: int, vec, n: int, p: int, rank: int) -> np.ndarray:
    """Inverse of :meth:`CPFactors.vec` for a single block."""
    vec = np.asarray(vec, dtype=float)
    if j == 1:
        return vec.reshape((n, rank), order="F")
    if j == 2:
        return vec.reshape((n, rank))
    if j == 3:
        return vec.reshape((p, rank))
    raise ValueError(f"block must be 1, 2 or 3, got {j!r}")


def cp_compose(factors: CPFactors) -> Tensor3:
    arr = np.einsum("ir,jr,kr->ijk", factors.theta1, factors.theta2, factors.theta3)
    return Tensor3.from_array(arr)


def theta_minus(factors: CPFactors, mode: int) -> np.ndarray:
    """Column-wise Kronecker products of the two factors other than ``mode``.

    mode 1: ``theta3 (x) theta2``; mode 2: ``theta3 (x) theta1``;
    mode 3: ``theta2 (x) theta1``.
    """
    _check_mode(mode)
    t1, t2, t3 = factors.theta1, factors.theta2, factors.theta3
    if mode == 1:
        return khatri_rao(t3, t2)
    if mode == 2:
        return khatri_rao(t3, t1)
    return khatri_rao(t2, t1)


def cp_matricized(factors: CPFactors, mode: int) -> np.ndarray:
    """``Theta_k Theta_{-k}'``, the mode-k unfolding of the composed tensor."""
    _check_mode(mode)
    own = (factors.theta1, factors.theta2, factors.theta3)[mode - 1]
    return own @ theta_minus(factors, mode).T


@dataclass(frozen=True)
class CommutationMatrix:
    """The permutation ``P`` with ``P' vec(Z) = vec(Z')`` for ``rows x cols`` Z.

    Stored as ``perm`` where ``(P' v)[l] = v[perm[l]]``; the dense matrix is
    never formed except by :meth:`to_dense`.
    """

    rows: int
    cols: int
    perm: np.ndarray = field(repr=False)

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        perm.flags.writeable = False
        object.__setattr__(self, "perm", perm)

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    def apply_transpose(self, v) -> np.ndarray:
        """``P' v`` (acts on the leading axis)."""
        return np.asarray(v)[self.perm]

    def apply(self, v) -> np.ndarray:
        """``P v`` (acts on the leading axis)."""
        return np.asarray(v)[self.inverse_perm]

    def right_multiply(self, m) -> np.ndarray:
        """``M P`` for a matrix with ``rows * cols`` columns."""
        return np.asarray(m)[:, self.perm]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        out[self.perm, np.arange(self.size)] = 1.0
        return out


def commutation(n: int, p: int) -> CommutationMatrix:
    """Commutation permutation for ``n x p`` matrices.

    ``P[k, l] = 1`` for ``k = (i-1) n + j`` and ``l = (j-1) p + i`` with
    ``i = 1..p`` and ``j = 1..n``; so ``perm[l] = k`` in 0-based terms.
    """
    if n < 1 or p < 1:
        raise ValueError(f"n and p must be positive, got {(n, p)}")
    i, j = np.meshgrid(np.arange(p), np.arange(n), indexing="ij")
    k = (i * n + j).ravel()
    l = (j * p + i).ravel()
    perm = np.empty(n * p, dtype=np.intp)
    perm[l] = k
    return CommutationMatrix(n, p, perm)
