"""Weak-separation oracle over the rank-one binary vertices.

The heuristic is alternating minimization (AltMin): with all but one mode
vector fixed, ``<g, theta_1 x ... x theta_p>`` is linear in the free vector,
so the sign rule minimizes it exactly.  When restarts of the heuristic fail
to find any improving vertex an exact branch and bound settles the question.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _backend
from .tensor import ObservedData, PatternIndex, Vertex, group_positions

DEFAULT_MAX_RHO = 60


class OracleTooLarge(ValueError):
    """The exact oracle refuses instances above its size guard."""


class Status(enum.Enum):
    SEPARATED_AT_TARGET = "SeparatedAtTarget"
    SEPARATED_BELOW_TARGET = "SeparatedBelowTarget"
    EXACT_MINIMUM = "ExactMinimum"


@dataclass(frozen=True)
class OracleRequest:
    scaled_gradient: np.ndarray
    cmin: float
    gap: float
    tol: float

    def __post_init__(self):
        if not self.gap > 0:
            raise ValueError("gap target must be positive")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class OracleAnswer:
    vertex: Vertex
    improvement: float
    status: Status
    heuristic_runs: int = 0
    exact_nodes: int = 0


def vertex_objective(scaled_gradient, vertex: Vertex) -> float:
    return float(np.dot(scaled_gradient, vertex.values_on_U))


# ---------------------------------------------------------------- AltMin steps

def _row_tuples(data: ObservedData) -> list[tuple[int, ...]]:
    rows = getattr(data, "_row_tuples", None)
    if rows is None:
        rows = [tuple(r) for r in data.U.tolist()]
        data._row_tuples = rows
    return rows


def altmin_step_naive(k: int, thetas, scaled_gradient, data: ObservedData) -> np.ndarray:
    """Reduced cost of mode ``k`` by one pass over the positions of U."""
    th = [np.asarray(v).tolist() for v in thetas]
    g = np.asarray(scaled_gradient, dtype=np.float64).tolist()
    others = [l for l in range(len(th)) if l != k]
    out = [0.0] * data.shape.dims[k]
    for t, row in enumerate(_row_tuples(data)):
        prod = g[t]
        for l in others:
            prod *= th[l][row[l]]
        out[row[k]] += prod
    return np.asarray(out, dtype=np.float64)


def altmin_step_indexed(k: int, thetas, scaled_gradient, source) -> np.ndarray:
    """Same reduced cost, looping over the ``r_k`` values of mode ``k``.

    ``source`` is a :class:`PatternIndex` (positions and coordinates
    precomputed) or the :class:`ObservedData` itself, in which case each
    group is extracted from U on the fly.
    """
    g = np.asarray(scaled_gradient, dtype=np.float64)
    p = len(thetas)
    r_k = len(thetas[k])
    out = np.zeros(r_k)
    others = [np.asarray(thetas[l]) for l in range(p) if l != k]
    if isinstance(source, PatternIndex):
        lists, gathered = source.lists[k], source.gathered[k]
        for j in range(r_k):
            pos = lists[j]
            if len(pos) == 0:
                continue
            prod = g[pos]
            for th, col in zip(others, gathered[j]):
                prod = prod * th[col]
            out[j] = prod.sum()
        return out
    U = source.U
    other_modes = [l for l in range(p) if l != k]
    for j in range(r_k):
        pos = np.flatnonzero(U[:, k] == j)
        if len(pos) == 0:
            continue
        prod = g[pos]
        for th, l in zip(others, other_modes):
            prod = prod * th[U[pos, l]]
        out[j] = prod.sum()
    return out


def altmin(start_thetas, scaled_gradient, data: ObservedData, tol: float,
           pattern: PatternIndex | None = None, indexed: bool = False,
           max_sweeps: int = 1000, history: list | None = None) -> Vertex:
    """Block-coordinate sign-rule descent from ``start_thetas``.

    Uses the naive step unless ``indexed`` is set; the indexed step reads
    ``pattern`` when given.  Stops once a full sweep improves the linear
    objective by less than ``tol``.
    """
    thetas = [np.asarray(th, dtype=np.int8).copy() for th in start_thetas]
    g = np.asarray(scaled_gradient, dtype=np.float64)
    p = len(thetas)
    if indexed:
        source = pattern if pattern is not None else data
        step = lambda k: altmin_step_indexed(k, thetas, g, source)
    else:
        step = lambda k: altmin_step_naive(k, thetas, g, data)
    prev = float(np.dot(g, _values(thetas, data)))
    if history is not None:
        history.append(prev)
    for _ in range(max_sweeps):
        for k in range(p):
            reduced = step(k)
            thetas[k] = (reduced < 0.0).astype(np.int8)
        obj = float(np.dot(reduced, thetas[p - 1]))
        if history is not None:
            history.append(obj)
        if prev - obj < tol:
            break
        prev = obj
    return Vertex.from_thetas(thetas, data)


def _values(thetas, data):
    vals = np.ones(data.u)
    for k, th in enumerate(thetas):
        vals *= th[data.U[:, k]]
    return vals


# ---------------------------------------------------------------- exact oracle

def branch_order(scaled_gradient, data: ObservedData) -> tuple[np.ndarray, int]:
    """Branching sequence of flat coordinates and the sign-rule leaf mode.

    The largest mode is left to the sign rule at the leaves.  The remaining
    modes are branched in decreasing size; inside a mode, coordinates by
    decreasing total ``|g|`` over the positions they touch.  Coordinates that
    touch no position of U are never branched (they are set to 0).
    """
    dims = data.shape.dims
    offsets = data.shape.offsets()
    g_abs = np.abs(np.asarray(scaled_gradient, dtype=np.float64))
    leaf = int(np.argmax(dims))
    modes = sorted((m for m in range(len(dims)) if m != leaf), key=lambda m: -dims[m])
    order = []
    for m in modes:
        impact = np.bincount(data.U[:, m], weights=g_abs, minlength=dims[m])
        touched = np.bincount(data.U[:, m], minlength=dims[m]) > 0
        js = [j for j in np.argsort(-impact, kind="stable") if touched[j]]
        order.extend(int(offsets[m] + j) for j in js)
    return np.asarray(order, dtype=np.int64), leaf


def exact_vertex_min(scaled_gradient, data: ObservedData, incumbent: Vertex | None = None,
                     max_rho: int = DEFAULT_MAX_RHO) -> tuple[Vertex, float, int]:
    """Global minimizer of ``<g, v>`` over the binary rank-one vertices on U.

    Returns ``(vertex, objective, nodes)``.  ``incumbent`` only seeds the
    pruning bound; the result is exact either way.
    """
    rho = data.shape.rho()
    if rho > max_rho:
        raise OracleTooLarge(
            f"instance too large for exact oracle: rho={rho} exceeds guard {max_rho}"
        )
    g = np.ascontiguousarray(scaled_gradient, dtype=np.float64)
    if g.shape != (data.u,):
        raise ValueError(f"gradient length {g.shape} does not match u={data.u}")
    # the zero vertex (objective 0) is always available
    inc_theta = np.zeros(rho, dtype=np.int8)
    inc_value = 0.0
    if incumbent is not None and vertex_objective(g, incumbent) < 0.0:
        inc_theta = np.concatenate(incumbent.thetas).astype(np.int8)
        inc_value = vertex_objective(g, incumbent)
    # each observed position alone is a vertex with objective g_t
    t = int(np.argmin(g)) if data.u else 0
    if data.u and g[t] < inc_value:
        inc_theta = np.zeros(rho, dtype=np.int8)
        inc_theta[data.shape.offsets() + data.U[t]] = 1
        inc_value = float(g[t])
    order, leaf = branch_order(g, data)
    theta, _, nodes = _backend.kernels.bnb_vertex_min(
        np.ascontiguousarray(data.U, dtype=np.int64), g,
        np.asarray(data.shape.dims, dtype=np.int64), order, leaf, inc_value, inc_theta,
    )
    theta = np.asarray(theta, dtype=np.int8)
    offsets = data.shape.offsets()
    thetas = [theta[o:o + r] for o, r in zip(offsets, data.shape.dims)]
    vertex = Vertex.from_thetas(thetas, data)
    return vertex, vertex_objective(g, vertex), int(nodes)


# ---------------------------------------------------------------- model output

def _num(x: float) -> str:
    return repr(float(x))


def emit_ip_model(scaled_gradient, data: ObservedData, lam: float) -> str:
    """The oracle's integer program restricted to U in CPLEX LP format.

    Variables are ``phi_t`` (t = 1..u) and binaries ``theta_k_j`` (1-based).
    The constant ``-<c, psi>`` of the objective is omitted.
    """
    g = np.asarray(scaled_gradient, dtype=np.float64)
    p = data.shape.order
    lam = float(lam)
    lines = ["\\ nonnegative tensor completion: linear minimization over rank-one binary tensors",
             "Minimize"]
    terms = [f"{'-' if c < 0 else '+'} {_num(abs(c))} phi_{t + 1}" for t, c in enumerate(g)]
    lines.append(" obj: " + (" ".join(terms) if terms else "0 phi_dummy"))
    lines.append("Subject To")
    for t, row in enumerate(data.U.tolist()):
        thetas = " ".join(f"- {_num(lam)} theta_{k + 1}_{row[k] + 1}" for k in range(p))
        lines.append(f" lb_{t + 1}: phi_{t + 1} {thetas} >= {_num(lam * (1 - p))}")
        for k in range(p):
            lines.append(
                f" ub_{t + 1}_{k + 1}: phi_{t + 1} - {_num(lam)} theta_{k + 1}_{row[k] + 1} <= 0"
            )
    lines.append("Bounds")
    for t in range(data.u):
        lines.append(f" 0 <= phi_{t + 1} <= {_num(lam)}")
    if data.u == 0:
        lines.append(" phi_dummy = 0")
    lines.append("Binaries")
    names = [f"theta_{k + 1}_{j + 1}" for k, r in enumerate(data.shape.dims) for j in range(r)]
    for i in range(0, len(names), 8):
        lines.append(" " + " ".join(names[i:i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- weak separation

def random_thetas(rng: np.random.Generator, dims) -> list[np.ndarray]:
    return [rng.integers(0, 2, size=r).astype(np.int8) for r in dims]


def weak_separation(request: OracleRequest, data: ObservedData, rng: np.random.Generator,
                    altmin_restarts: int = 100,
                    exact_fallback: Callable | None = None,
                    pattern: PatternIndex | None = None, indexed: bool = False,
                    all_ones_first: bool = False, force_exact: bool = False) -> OracleAnswer:
    """Find a vertex improving ``cmin`` by ``request.gap``, or certify none exists.

    AltMin is restarted from independent Bernoulli(1/2) starts (the first one
    from all ones when ``all_ones_first``).  An infinite gap, or
    ``force_exact``, disables the target check: the restarts then only seed
    the exact search with an incumbent.
    """
    if exact_fallback is None:
        exact_fallback = exact_vertex_min
    g = np.asarray(request.scaled_gradient, dtype=np.float64)
    dims = data.shape.dims
    check_target = np.isfinite(request.gap) and not force_exact
    best = None
    best_impr = -np.inf
    runs = 0
    for r in range(altmin_restarts):
        if r == 0 and all_ones_first:
            start = [np.ones(d, dtype=np.int8) for d in dims]
        else:
            start = random_thetas(rng, dims)
        vertex = altmin(start, g, data, request.tol, pattern=pattern, indexed=indexed)
        runs += 1
        impr = request.cmin - vertex_objective(g, vertex)
        if impr > best_impr:
            best, best_impr = vertex, impr
        if check_target and impr >= request.gap:
            return OracleAnswer(vertex, impr, Status.SEPARATED_AT_TARGET, runs)
    if check_target and best_impr > 0.0:
        return OracleAnswer(best, best_impr, Status.SEPARATED_BELOW_TARGET, runs)
    vertex, obj, nodes = exact_fallback(g, data, incumbent=best)
    return OracleAnswer(vertex, request.cmin - obj, Status.EXACT_MINIMUM, runs, nodes)
