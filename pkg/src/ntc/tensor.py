"""Tensor shapes, observed samples, rank-one binary vertices and the active set.

Indices are 0-based everywhere inside the package; the JSON instance format
uses 1-based indices and is converted on load/save.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _backend


@dataclass(frozen=True)
class Shape:
    """Dimensions ``(r_1, ..., r_p)`` of an order-``p`` tensor."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(r) for r in self.dims)
        if len(dims) < 1:
            raise ValueError("tensor order must be at least 1")
        if any(r < 1 for r in dims):
            raise ValueError(f"all dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def order(self) -> int:
        return len(self.dims)

    def rho(self) -> int:
        """Total number of binary mode coordinates."""
        return sum(self.dims)

    def pi(self) -> int:
        """Number of tensor entries."""
        return math.prod(self.dims)

    def offsets(self) -> np.ndarray:
        """Start of each mode's block in a flat length-``rho`` coordinate vector."""
        return np.concatenate(([0], np.cumsum(self.dims)[:-1])).astype(np.int64)


class ObservedData:
    """The sample set with its deduplicated index set ``U``.

    Duplicate sample indices are kept: ``multiplicity[t]`` counts how often
    ``U[t]`` was sampled and ``y_sum[t]`` adds up their values.  ``U`` is in
    first-appearance order.
    """

    def __init__(self, shape: Shape | Sequence[int], indices, values):
        if not isinstance(shape, Shape):
            shape = Shape(tuple(shape))
        self.shape = shape
        p = shape.order
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            idx = idx.reshape(0, p)
        if idx.ndim != 2 or idx.shape[1] != p:
            raise ValueError(f"sample indices must have shape (n, {p})")
        vals = np.asarray(values, dtype=np.float64).reshape(-1)
        if vals.shape[0] != idx.shape[0]:
            raise ValueError("number of indices and values differ")
        dims = np.asarray(shape.dims)
        if idx.size and ((idx < 0).any() or (idx >= dims).any()):
            raise ValueError("sample index out of range for shape")

        self.sample_indices = idx
        self.sample_values = vals
        self.n = int(idx.shape[0])

        position: dict[tuple[int, ...], int] = {}
        inverse = np.empty(self.n, dtype=np.int64)
        for i, row in enumerate(map(tuple, idx.tolist())):
            t = position.setdefault(row, len(position))
            inverse[i] = t
        u = len(position)
        self.U = np.array(list(position), dtype=np.int64).reshape(u, p)
        self.U.setflags(write=False)
        self.u = u
        self.sample_position = inverse
        self.multiplicity = np.bincount(inverse, minlength=u).astype(np.float64)
        self.y_sum = np.bincount(inverse, weights=vals, minlength=u)
        self.y_sq_sum = float(np.dot(vals, vals))

    @classmethod
    def from_one_based(cls, dims, samples: Iterable[tuple[Sequence[int], float]]):
        shape = Shape(tuple(dims))
        xs, ys = [], []
        for x, y in samples:
            x = [int(v) for v in x]
            if len(x) != shape.order:
                raise ValueError(f"index {x} has wrong length for order {shape.order}")
            for k, (xk, rk) in enumerate(zip(x, shape.dims)):
                if not 1 <= xk <= rk:
                    raise ValueError(f"index {x} out of range in mode {k + 1} (1..{rk})")
            xs.append([v - 1 for v in x])
            ys.append(float(y))
        return cls(shape, np.asarray(xs, dtype=np.int64).reshape(-1, shape.order), ys)

    def to_json_dict(self) -> dict:
        return {
            "dims": list(self.shape.dims),
            "samples": [
                {"x": [int(v) + 1 for v in row], "y": float(y)}
                for row, y in zip(self.sample_indices.tolist(), self.sample_values.tolist())
            ],
        }

    def linear_indices(self) -> np.ndarray:
        """Row-major flat positions of ``U`` in the full tensor."""
        if self.u == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(tuple(self.U.T), self.shape.dims)


def load_instance(path) -> ObservedData:
    """Read a JSON instance file (1-based indices)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "dims" not in doc or "samples" not in doc:
        raise ValueError("instance file needs 'dims' and 'samples'")
    return ObservedData.from_one_based(doc["dims"], ((s["x"], s["y"]) for s in doc["samples"]))


def dump_instance(data: ObservedData, path, extra: dict | None = None) -> None:
    doc = data.to_json_dict()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


class PatternIndex:
    """Per-mode grouping of the positions of ``U``.

    ``lists[k][j]`` holds the sorted positions ``t`` with ``U[t, k] == j``;
    ``columns[l]`` is mode ``l``'s coordinate of every position.  ``gathered[k][j]``
    caches ``columns`` restricted to ``lists[k][j]`` for every other mode, which
    is what the indexed AltMin step reads.
    """

    def __init__(self, shape: Shape, lists, columns):
        self.shape = shape
        self.lists = lists
        self.columns = columns
        p = shape.order
        self.gathered = [
            [tuple(columns[l][pos] for l in range(p) if l != k) for pos in lists[k]]
            for k in range(p)
        ]

    def __eq__(self, other):
        if not isinstance(other, PatternIndex) or other.shape != self.shape:
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for la, lb in zip(self.lists, other.lists)
            for a, b in zip(la, lb)
        ) and all(np.array_equal(a, b) for a, b in zip(self.columns, other.columns))


def group_positions(column: np.ndarray, size: int) -> list[np.ndarray]:
    """Split ``range(len(column))`` by the value of ``column`` (stable)."""
    order = np.argsort(column, kind="stable")
    bounds = np.searchsorted(column[order], np.arange(size + 1))
    return [order[bounds[j]:bounds[j + 1]] for j in range(size)]


def build_pattern_index(data: ObservedData) -> PatternIndex:
    columns = [np.ascontiguousarray(data.U[:, k]) for k in range(data.shape.order)]
    lists = [group_positions(columns[k], r) for k, r in enumerate(data.shape.dims)]
    return PatternIndex(data.shape, lists, columns)


def _check_thetas(thetas, shape: Shape) -> list[np.ndarray]:
    if len(thetas) != shape.order:
        raise ValueError(f"expected {shape.order} mode vectors, got {len(thetas)}")
    out = []
    for k, (th, r) in enumerate(zip(thetas, shape.dims)):
        th = np.asarray(th)
        if th.shape != (r,):
            raise ValueError(f"mode {k} vector has length {th.shape}, expected {r}")
        out.append(th.astype(np.int8))
    return out


def vertex_values_on_U(thetas, data: ObservedData) -> np.ndarray:
    """Entries of the rank-one binary tensor ``theta_1 x ... x theta_p`` on ``U``."""
    thetas = _check_thetas(thetas, data.shape)
    values = np.ones(data.u, dtype=np.float64)
    for k, th in enumerate(thetas):
        values *= th[data.U[:, k]]
    return values


@dataclass(eq=False)
class Vertex:
    """An element of S_1: binary mode vectors and their product restricted to U."""

    thetas: tuple[np.ndarray, ...]
    values_on_U: np.ndarray

    @classmethod
    def from_thetas(cls, thetas, data: ObservedData) -> "Vertex":
        ths = tuple(_check_thetas(thetas, data.shape))
        for th in ths:
            th.setflags(write=False)
        vals = vertex_values_on_U(ths, data)
        vals.setflags(write=False)
        return cls(ths, vals)

    @property
    def key(self) -> bytes:
        return b"|".join(th.tobytes() for th in self.thetas)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values_on_U).astype(np.int32)

    def full_tensor(self) -> np.ndarray:
        out = np.ones((), dtype=np.float64)
        for th in self.thetas:
            out = np.multiply.outer(out, th.astype(np.float64))
        return out


class _RowCompressed:
    """Binary k x u matrix kept as per-row column lists."""

    def __init__(self, u: int):
        self.u = u
        self.rows: list[np.ndarray] = []
        self._packed = None

    def append(self, cols: np.ndarray):
        self.rows.append(np.asarray(cols, dtype=np.int32))
        self._packed = None

    def keep(self, mask: np.ndarray):
        self.rows = [r for r, m in zip(self.rows, mask) if m]
        self._packed = None

    def packed(self):
        if self._packed is None:
            lengths = np.fromiter((len(r) for r in self.rows), dtype=np.int64, count=len(self.rows))
            indptr = np.zeros(len(self.rows) + 1, dtype=np.int64)
            np.cumsum(lengths, out=indptr[1:])
            indices = (np.concatenate(self.rows) if self.rows else np.zeros(0, np.int32)).astype(np.int32)
            self._packed = (indptr, indices)
        return self._packed

    def matvec(self, x: np.ndarray) -> np.ndarray:
        indptr, indices = self.packed()
        return _backend.kernels.csr_binary_matvec(indptr, indices, np.ascontiguousarray(x, dtype=np.float64))

    def rmatvec(self, w: np.ndarray) -> np.ndarray:
        indptr, indices = self.packed()
        return _backend.kernels.csr_binary_rmatvec(
            indptr, indices, np.ascontiguousarray(w, dtype=np.float64), self.u
        )

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.rows), self.u))
        for i, r in enumerate(self.rows):
            out[i, r] = 1.0
        return out


class _Dense:
    def __init__(self, u: int):
        self.u = u
        self.matrix = np.zeros((0, u))

    def append(self, values: np.ndarray):
        self.matrix = np.vstack([self.matrix, values[None, :]])

    def keep(self, mask: np.ndarray):
        self.matrix = self.matrix[mask]

    def matvec(self, x):
        return self.matrix @ x

    def rmatvec(self, w):
        return w @ self.matrix

    def dense(self):
        return self.matrix


class ActiveSet:
    """Vertices carrying the iterate, their simplex weights and value matrix.

    ``version`` increases whenever the vertex list changes (not when only
    the weights move); the NAG descent uses it to reset momentum.
    """

    def __init__(self, u: int, sparse: bool = False):
        self.u = u
        self.sparse = sparse
        self.vertices: list[Vertex] = []
        self.weights = np.zeros(0)
        self.value_matrix = _RowCompressed(u) if sparse else _Dense(u)
        self._keys: dict[bytes, int] = {}
        self.version = 0

    def __len__(self):
        return len(self.vertices)

    def index_of(self, vertex: Vertex) -> int | None:
        return self._keys.get(vertex.key)

    def add(self, vertex: Vertex, weight: float = 0.0) -> int:
        """Append ``vertex`` (or find it) and add ``weight`` to it; returns its row."""
        j = self.index_of(vertex)
        if j is not None:
            self.weights[j] += weight
            return j
        self.vertices.append(vertex)
        self.weights = np.append(self.weights, weight)
        if self.sparse:
            self.value_matrix.append(vertex.support())
        else:
            self.value_matrix.append(np.asarray(vertex.values_on_U, dtype=np.float64))
        self._keys[vertex.key] = len(self.vertices) - 1
        self.version += 1
        return len(self.vertices) - 1

    def drop_zero_weights(self) -> bool:
        mask = self.weights > 0.0
        if mask.all():
            return False
        self.keep(mask)
        return True

    def keep(self, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        self.vertices = [v for v, m in zip(self.vertices, mask) if m]
        self.weights = self.weights[mask]
        self.value_matrix.keep(mask)
        self._keys = {v.key: i for i, v in enumerate(self.vertices)}
        self.version += 1

    def collapse_to(self, j: int):
        mask = np.zeros(len(self), dtype=bool)
        mask[j] = True
        self.keep(mask)
        self.weights[:] = 1.0

    def pro(self, x: np.ndarray) -> np.ndarray:
        """Inner product of every active vertex with ``x`` (length ``u``)."""
        return self.value_matrix.matvec(x)

    def combine(self, weights: np.ndarray | None = None) -> np.ndarray:
        """``sum_j w_j v_j`` on U; defaults to the current weights."""
        w = self.weights if weights is None else weights
        return self.value_matrix.rmatvec(w)

    def full_tensor(self, shape: Shape) -> np.ndarray:
        out = np.zeros(shape.dims)
        for w, v in zip(self.weights, self.vertices):
            if w != 0.0:
                out += w * v.full_tensor()
        return out
