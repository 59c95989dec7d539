"""Third-order tensor algebra: dense tensors, per-slice sparse stacks, and
the invertible-transform tensor product.

Storage convention: a tensor with dims (d1, d2, d3) lives in a float64 array
of shape (d3, d1, d2), so ``data[t]`` is the t-th frontal slice and
``data[:, i, j]`` is the (i, j) tube. The third axis is time everywhere in
this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericError, ParameterError, ShapeError

MAX_CONDITION = 1e12
INVERSE_TOL = 1e-10


class Tensor3:
    """Dense third-order tensor of float64 values."""

    __slots__ = ("data",)

    def __init__(self, data, copy: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"Tensor3 expects a 3-d array, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise NumericError("Tensor3 values must be finite")
        self.data = arr.copy() if copy else arr

    @classmethod
    def zeros(cls, d1: int, d2: int, d3: int) -> "Tensor3":
        return cls(np.zeros((d3, d1, d2)))

    @classmethod
    def from_slices(cls, slices) -> "Tensor3":
        """Stack 2-d frontal slices along the time axis."""
        return cls(np.stack([np.asarray(s, dtype=np.float64) for s in slices]))

    @property
    def dims(self) -> tuple[int, int, int]:
        d3, d1, d2 = self.data.shape
        return (d1, d2, d3)

    def slice(self, t: int) -> np.ndarray:
        return self.data[t]

    def tube(self, i: int, j: int) -> np.ndarray:
        return self.data[:, i, j]

    def copy(self) -> "Tensor3":
        return Tensor3(self.data, copy=True)

    def allclose(self, other: "Tensor3", atol: float = 0.0, rtol: float = 1e-12) -> bool:
        return self.dims == other.dims and np.allclose(
            self.data, other.data, atol=atol, rtol=rtol
        )

    def __repr__(self) -> str:
        return f"Tensor3(dims={self.dims})"


class SliceSparse3:
    """Stack of per-slice CSR matrices sharing one 2-d shape.

    Slices are canonicalized on construction: duplicate entries summed,
    column indices sorted within each row, explicit zeros pruned.
    """

    __slots__ = ("slices", "shape2d")

    def __init__(self, slices, shape: tuple[int, int] | None = None):
        mats = []
        for s in slices:
            m = sp.csr_matrix(s, dtype=np.float64)
            m.sum_duplicates()
            m.sort_indices()
            m.eliminate_zeros()
            if not np.all(np.isfinite(m.data)):
                raise NumericError("SliceSparse3 values must be finite")
            mats.append(m)
        shapes = {m.shape for m in mats}
        if shape is not None:
            shapes.add((int(shape[0]), int(shape[1])))
        if len(shapes) != 1:
            raise ShapeError(f"slices must share one shape, got {sorted(shapes)}")
        self.shape2d = shapes.pop()
        self.slices = mats

    @classmethod
    def from_dense(cls, x) -> "SliceSparse3":
        arr = x.data if isinstance(x, Tensor3) else np.asarray(x, dtype=np.float64)
        return cls([sp.csr_matrix(arr[t]) for t in range(arr.shape[0])], shape=arr.shape[1:])

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.shape2d[0], self.shape2d[1], len(self.slices))

    @property
    def nnz(self) -> int:
        return sum(m.nnz for m in self.slices)

    def densify(self) -> Tensor3:
        return Tensor3(np.stack([m.toarray() for m in self.slices]))

    def copy(self) -> "SliceSparse3":
        return SliceSparse3([m.copy() for m in self.slices], shape=self.shape2d)

    def __repr__(self) -> str:
        return f"SliceSparse3(dims={self.dims}, nnz={self.nnz})"


@dataclass(frozen=True)
class Transform:
    """Invertible mode-3 transform: ``kind`` is identity, dct2-orthonormal,
    or custom; ``m`` and ``minv`` are the forward and inverse matrices."""

    kind: str
    size: int
    m: np.ndarray
    minv: np.ndarray

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"


def _dct2_orthonormal(n: int) -> np.ndarray:
    # type-II DCT rows, scaled so the matrix is orthonormal
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    m = math.sqrt(2.0 / n) * np.cos(math.pi * (2 * j + 1) * k / (2 * n))
    m[0] /= math.sqrt(2.0)
    return m


def make_transform(kind: str, size: int, matrix=None) -> Transform:
    """Build a mode-3 transform of the given size.

    ``identity`` decouples the time slices; ``dct2-orthonormal`` (alias
    ``dct``) mixes them with an orthonormal type-II DCT; ``custom`` takes a
    caller-supplied square matrix whose inverse is computed numerically.
    """
    if size < 1:
        raise ParameterError(f"transform size must be >= 1, got {size}")
    if kind == "identity":
        eye = np.eye(size)
        return Transform("identity", size, eye, eye.copy())
    if kind in ("dct", "dct2-orthonormal"):
        m = _dct2_orthonormal(size)
        return Transform("dct2-orthonormal", size, m, m.T.copy())
    if kind == "custom":
        if matrix is None:
            raise ParameterError("custom transform requires a matrix")
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (size, size):
            raise ShapeError(f"custom matrix must be {size}x{size}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NumericError("custom matrix must be finite")
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise NumericError(f"custom matrix is ill-conditioned (cond={cond:.3e})")
        minv = np.linalg.inv(m)
        if np.max(np.abs(m @ minv - np.eye(size))) > INVERSE_TOL:
            raise NumericError("custom matrix inverse fails the round-trip check")
        return Transform("custom", size, m, minv)
    raise ParameterError(f"unknown transform kind {kind!r}")


def _apply_mode3(arr: np.ndarray, m: np.ndarray) -> np.ndarray:
    # out[k, ...] = sum_t m[k, t] * arr[t, ...]
    return np.tensordot(m, arr, axes=(1, 0))


def mode3_product(x: Tensor3, m) -> Tensor3:
    """Multiply every tube x(i, j, :) by the square matrix ``m``."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"mode-3 matrix must be square, got {m.shape}")
    if m.shape[0] != x.data.shape[0]:
        raise ShapeError(
            f"mode-3 matrix size {m.shape[0]} does not match d3={x.data.shape[0]}"
        )
    return Tensor3(_apply_mode3(x.data, m))


def facewise_product(x, y: Tensor3) -> Tensor3:
    """Slice-by-slice matrix product: result slice t is x_t @ y_t."""
    xd1, xd2, xd3 = x.dims
    yd1, yd2, yd3 = y.dims
    if xd2 != yd1 or xd3 != yd3:
        raise ShapeError(
            f"facewise product needs (d1,k,T)x(k,d2,T), got {x.dims} and {y.dims}"
        )
    if isinstance(x, SliceSparse3):
        out = np.empty((xd3, xd1, yd2))
        for t in range(xd3):
            out[t] = x.slices[t] @ y.data[t]
        return Tensor3(out)
    if not isinstance(x, Tensor3):
        raise ShapeError(f"unsupported left operand type {type(x).__name__}")
    return Tensor3(np.matmul(x.data, y.data))


def _union_structure(slices) -> tuple[np.ndarray, np.ndarray]:
    """CSR structure of the union of the slices' supports."""
    n_rows, n_cols = slices[0].shape
    acc = sp.csr_matrix((n_rows, n_cols))
    for s in slices:
        marker = sp.csr_matrix(
            (np.ones(s.nnz), s.indices.copy(), s.indptr.copy()), shape=s.shape
        )
        acc = acc + marker
    acc.sum_duplicates()
    acc.sort_indices()
    return acc.indptr.astype(np.int64), acc.indices.astype(np.int64)


def _union_tubes(x: SliceSparse3, u_indptr, u_indices) -> np.ndarray:
    """Gather the tubes of a sparse stack over its union support.

    Returns an array of shape (union nnz, T) whose row u holds the tube of
    the u-th union entry.
    """
    d1 = x.shape2d[0]
    tubes = np.zeros((len(u_indices), len(x.slices)))
    for t, s in enumerate(x.slices):
        for i in range(d1):
            a0, a1 = s.indptr[i], s.indptr[i + 1]
            if a0 == a1:
                continue
            u0, u1 = u_indptr[i], u_indptr[i + 1]
            pos = u0 + np.searchsorted(u_indices[u0:u1], s.indices[a0:a1])
            tubes[pos, t] = s.data[a0:a1]
    return tubes


def m_product(x, y: Tensor3, tf: Transform) -> Tensor3:
    """Tensor product under an invertible mode-3 transform.

    Computes ((x mode3 M) facewise (y mode3 M)) mode3 M^-1. With the
    identity transform this reduces to the plain face-wise product. A
    sparse left operand is never densified to full d1 x d2 x T; only the
    union of its per-slice supports is materialized.
    """
    xd1, xd2, xd3 = x.dims
    if tf.size != xd3:
        raise ShapeError(f"transform size {tf.size} does not match d3={xd3}")
    if tf.is_identity:
        return facewise_product(x, y)
    if isinstance(x, SliceSparse3):
        if xd2 != y.dims[0] or xd3 != y.dims[2]:
            raise ShapeError(
                f"facewise product needs (d1,k,T)x(k,d2,T), got {x.dims} and {y.dims}"
            )
        u_indptr, u_indices = _union_structure(x.slices)
        tubes_hat = _union_tubes(x, u_indptr, u_indices) @ tf.m.T
        y_hat = _apply_mode3(y.data, tf.m)
        out = np.empty((xd3, xd1, y.dims[1]))
        for t in range(xd3):
            xt = sp.csr_matrix(
                (tubes_hat[:, t], u_indices, u_indptr), shape=x.shape2d
            )
            out[t] = xt @ y_hat[t]
        return Tensor3(_apply_mode3(out, tf.minv))
    x_hat = mode3_product(x, tf.m)
    y_hat = mode3_product(y, tf.m)
    return mode3_product(facewise_product(x_hat, y_hat), tf.minv)


def sparse_matpower_sum(a: SliceSparse3, k_hops: int) -> SliceSparse3:
    """Per-slice sum of the first ``k_hops`` matrix powers of ``a``.

    On a 0/1 adjacency stack the result counts walks of length 1..k_hops,
    so entries are exact nonnegative integers.
    """
    if k_hops < 1:
        raise ParameterError(f"k_hops must be >= 1, got {k_hops}")
    d1, d2, _ = a.dims
    if d1 != d2:
        raise ShapeError(f"slices must be square, got {d1}x{d2}")
    out = []
    for s in a.slices:
        acc = s.copy()
        cur = s
        for _ in range(k_hops - 1):
            cur = cur @ s
            acc = acc + cur
        out.append(acc)
    return SliceSparse3(out, shape=a.shape2d)


class SlicePattern:
    """Frozen sparsity structure for a stack of T sparse slices.

    Values for the pattern live in flat float arrays: entries of slice t
    occupy ``[offsets[t], offsets[t+1])`` in CSR order (row-major, columns
    sorted within a row). ``row_splits`` delimits every (slice, row)
    segment of the flat layout, in slice-major row-minor order.
    """

    def __init__(self, indptrs, indices, n_rows: int, n_cols: int):
        self.indptrs = [np.asarray(p, dtype=np.int64) for p in indptrs]
        self.indices = [np.asarray(ix, dtype=np.int64) for ix in indices]
        if len(self.indptrs) != len(self.indices):
            raise ShapeError("indptrs and indices must pair up per slice")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.t_slots = len(self.indptrs)
        sizes = [len(ix) for ix in self.indices]
        self.offsets = np.concatenate(([0], np.cumsum(sizes, dtype=np.int64)))
        self.nnz = int(self.offsets[-1])
        self.rows = [
            np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(p))
            for p in self.indptrs
        ]
        starts = [self.indptrs[t][:-1] + self.offsets[t] for t in range(self.t_slots)]
        self.row_splits = np.concatenate(starts + [[self.nnz]]).astype(np.int64)
        self.entry_slots = np.repeat(
            np.arange(self.t_slots, dtype=np.int64), np.diff(self.offsets)
        )
        self._union: tuple | None = None

    @classmethod
    def from_sparse(cls, x: SliceSparse3) -> "SlicePattern":
        return cls(
            [s.indptr.copy() for s in x.slices],
            [s.indices.copy() for s in x.slices],
            x.shape2d[0],
            x.shape2d[1],
        )

    @classmethod
    def with_diagonal(cls, x: SliceSparse3) -> "SlicePattern":
        """Pattern of x with the full diagonal added to every slice."""
        d1, d2 = x.shape2d
        if d1 != d2:
            raise ShapeError("diagonal augmentation needs square slices")
        eye = sp.eye(d1, format="csr")
        indptrs, indices = [], []
        for s in x.slices:
            marker = sp.csr_matrix(
                (np.ones(s.nnz), s.indices.copy(), s.indptr.copy()), shape=s.shape
            )
            aug = marker + eye
            aug.sum_duplicates()
            aug.sort_indices()
            indptrs.append(aug.indptr)
            indices.append(aug.indices)
        return cls(indptrs, indices, d1, d2)

    def slice_values(self, values: np.ndarray, t: int) -> np.ndarray:
        return values[self.offsets[t] : self.offsets[t + 1]]

    def csr(self, values: np.ndarray, t: int) -> sp.csr_matrix:
        """View slice t of a flat value array as a CSR matrix (no copy of
        the structure arrays)."""
        return sp.csr_matrix(
            (self.slice_values(values, t), self.indices[t], self.indptrs[t]),
            shape=(self.n_rows, self.n_cols),
        )

    def to_sparse(self, values: np.ndarray) -> SliceSparse3:
        return SliceSparse3(
            [self.csr(values, t).copy() for t in range(self.t_slots)],
            shape=(self.n_rows, self.n_cols),
        )

    def entry_table(self) -> np.ndarray:
        """All pattern entries as an (nnz, 3) array of (t, row, col)."""
        out = np.empty((self.nnz, 3), dtype=np.int64)
        for t in range(self.t_slots):
            o0, o1 = self.offsets[t], self.offsets[t + 1]
            out[o0:o1, 0] = t
            out[o0:o1, 1] = self.rows[t]
            out[o0:o1, 2] = self.indices[t]
        return out

    @property
    def union(self):
        """Union-of-slices structure: (indptr, indices, flat-to-union map).

        The map sends flat entry e of slice t to the union column position
        shared by all slices, enabling tube-wise transforms without a full
        densification.
        """
        if self._union is None:
            mats = [
                sp.csr_matrix(
                    (np.ones(len(self.indices[t])), self.indices[t], self.indptrs[t]),
                    shape=(self.n_rows, self.n_cols),
                )
                for t in range(self.t_slots)
            ]
            u_indptr, u_indices = _union_structure(mats)
            flat_to_union = np.empty(self.nnz, dtype=np.int64)
            for t in range(self.t_slots):
                indptr = self.indptrs[t]
                for i in range(self.n_rows):
                    a0, a1 = indptr[i], indptr[i + 1]
                    if a0 == a1:
                        continue
                    u0, u1 = u_indptr[i], u_indptr[i + 1]
                    pos = u0 + np.searchsorted(
                        u_indices[u0:u1], self.indices[t][a0:a1]
                    )
                    flat_to_union[self.offsets[t] + a0 : self.offsets[t] + a1] = pos
            self._union = (u_indptr, u_indices, flat_to_union)
        return self._union

    def union_csr(self, column: np.ndarray) -> sp.csr_matrix:
        u_indptr, u_indices, _ = self.union
        return sp.csr_matrix(
            (column, u_indices, u_indptr), shape=(self.n_rows, self.n_cols)
        )
