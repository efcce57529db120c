"""Blended conditional gradients for nonnegative tensor completion.

The solver works on the normalized feasible set (vertices are 0/1 on U)
and multiplies by ``lambda`` only when evaluating the loss and when
reconstructing the completed tensor.  Each iteration either takes a descent
step over the active set (simplex gradient, accelerated, or pairwise, per
the variant) or calls the weak-separation oracle, depending on how the
active-set gap compares with the current gap estimate ``phi``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .objective import LossContext, exact_line_search, gradient, loss
from .oracle import (
    DEFAULT_MAX_RHO,
    OracleRequest,
    OracleTooLarge,
    Status,
    emit_ip_model,
    exact_vertex_min,
    weak_separation,
)
from .tensor import ActiveSet, ObservedData, Vertex, build_pattern_index

log = logging.getLogger(__name__)

# (sparse, nag, bpcg, index, pattern) for versions 0..10
VARIANT_TABLE = {
    0: (False, False, False, False, False),
    1: (False, False, False, True, True),
    2: (True, False, False, False, False),
    3: (False, True, False, False, False),
    4: (True, False, False, True, True),
    5: (False, True, False, True, True),
    6: (True, True, False, True, True),
    7: (False, False, True, False, False),
    8: (False, False, True, True, True),
    9: (True, False, True, False, False),
    10: (True, False, True, True, True),
}


@dataclass(frozen=True)
class VariantConfig:
    sparse: bool = False
    nag: bool = False
    bpcg: bool = False
    index: bool = False
    pattern: bool = False
    version: int | None = None

    def __post_init__(self):
        if self.nag and self.bpcg:
            raise ValueError("NAG and BPCG cannot be combined")
        if self.pattern and not self.index:
            raise ValueError("Pattern requires Index")

    @property
    def descent(self) -> str:
        return "bpcg" if self.bpcg else ("nag" if self.nag else "sigd")


def make_variant(version: int) -> VariantConfig:
    if version not in VARIANT_TABLE:
        raise ValueError(f"version must be in 0..10, got {version}")
    sparse, nag, bpcg, index, pattern = VARIANT_TABLE[version]
    return VariantConfig(sparse, nag, bpcg, index, pattern, version)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    n = len(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    k = ind[cond][-1]
    tau = css[cond][-1] / k
    return np.maximum(v - tau, 0.0)


@dataclass
class SolverState:
    """Mutable state of one solve.

    ``iterate`` lives in the normalized space (entries in [0, 1]); ``phi`` is
    the full gap estimate.
    """

    ctx: LossContext
    variant: VariantConfig
    tol: float
    active: ActiveSet
    iterate: np.ndarray
    phi: float
    obj: float
    bestbd: float = 0.0
    iteration: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    pattern: object = None
    altmin_restarts: int = 100
    max_rho: int = DEFAULT_MAX_RHO
    nag_max_iter: int = 100
    counts: dict = field(default_factory=lambda: {
        "sigd_steps": 0, "nag_steps": 0, "bpcg_steps": 0, "lpsep_steps": 0,
        "oracle_calls": 0, "altmin_runs": 0, "exact_ip_calls": 0,
    })
    first_oracle_call: bool = True
    nag_memory: tuple | None = None
    dump_ip: Path | None = None
    certify: bool = False

    @property
    def lam(self) -> float:
        return self.ctx.lam

    @property
    def data(self) -> ObservedData:
        return self.ctx.data

    def objective(self, z: np.ndarray) -> float:
        return loss(self.lam * z, self.ctx)

    def scaled_gradient(self) -> np.ndarray:
        """Gradient of the loss with respect to the normalized iterate."""
        return self.lam * gradient(self.lam * self.iterate, self.ctx)

    def set_weights(self, weights: np.ndarray, obj: float | None = None, z: np.ndarray | None = None):
        w = np.maximum(weights, 0.0)
        w = w / w.sum()
        self.active.weights = w
        self.iterate = self.active.combine() if z is None else z
        self.obj = self.objective(self.iterate) if obj is None else obj


@dataclass
class SolveResult:
    tensor: np.ndarray
    objective: float
    gap: float
    bestbd: float
    iterations: int
    counts: dict
    time_s: float
    converged: bool
    vertices: list
    weights: np.ndarray
    lam: float
    trace: list

    @property
    def steps(self) -> int:
        return self.counts["sigd_steps"] + self.counts["nag_steps"] + self.counts["bpcg_steps"]


# ---------------------------------------------------------------- descent steps

def simplex_ratio_step(gamma: np.ndarray, d: np.ndarray) -> tuple[float, int]:
    """Largest ``eta >= 0`` keeping ``gamma - eta * d >= 0`` and the index that hits 0.

    ``d`` must sum to zero and not vanish, so some entry is positive.
    """
    pos = np.flatnonzero(d > 0)
    ratios = gamma[pos] / d[pos]
    i = int(np.argmin(ratios))
    return float(ratios[i]), int(pos[i])


def sigd_step(state: SolverState, pro: np.ndarray) -> str:
    """One simplex gradient descent step on the active-set weights."""
    active = state.active
    gamma = active.weights
    d = pro - pro.mean()
    state.counts["sigd_steps"] += 1
    if not np.any(d):
        active.collapse_to(0)
        state.set_weights(active.weights)
        return "sigd-collapse"
    eta, i = simplex_ratio_step(gamma, d)
    new_w = gamma - eta * d
    new_w[i] = 0.0
    new_w = np.maximum(new_w, 0.0)
    z_new = active.combine(new_w)
    if state.objective(z_new) <= state.obj:
        _commit(state, new_w)
        return "sigd"
    s, _ = exact_line_search(state.lam * state.iterate, state.lam * z_new, state.ctx)
    if s > 0.0:
        _commit(state, gamma + s * (new_w - gamma))
    return "sigd-ls"


def nag_descent(state: SolverState) -> str:
    """Accelerated projected gradient on the barycentric weights.

    Momentum is carried between calls while the active set and its weights
    are exactly as the previous call left them; otherwise it restarts.
    """
    active = state.active
    k = len(active)
    state.counts["nag_steps"] += 1
    if k == 1:
        return "nag"
    gamma = active.weights.copy()
    mem = state.nag_memory
    if mem is not None and mem[0] == active.version and np.array_equal(mem[1], gamma):
        t, x_prev = mem[2], mem[3]
    else:
        t, x_prev = 1.0, gamma.copy()
    ctx, lam = state.ctx, state.lam
    # trace of the weight-space Hessian bounds its largest eigenvalue
    L = 2.0 * lam * lam * float(active.pro(ctx.mult).sum()) / ctx.n
    if L <= 0.0:
        return "nag"
    x = gamma
    best_w, best_f = gamma, state.obj
    for _ in range(state.nag_max_iter):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x + ((t - 1.0) / t_next) * (x - x_prev)
        z_y = active.combine(y)
        grad_y = active.pro(lam * gradient(lam * z_y, ctx))
        x_new = project_simplex(y - grad_y / L)
        f_new = state.objective(active.combine(x_new))
        x_prev, x, t = x, x_new, t_next
        if f_new > best_f:
            # lost monotonicity: restart momentum from the best point
            x, x_prev, t = best_w, best_w, 1.0
            continue
        improvement = best_f - f_new
        best_w, best_f = x_new, f_new
        if improvement < state.tol / 10.0:
            break
    if best_f < state.obj:
        _commit(state, best_w)
    # dropped vertices change the weight space: momentum cannot carry over
    state.nag_memory = ((active.version, active.weights.copy(), t, x_prev)
                        if len(active) == k else None)
    return "nag"


def _commit(state: SolverState, weights: np.ndarray) -> bool:
    """Adopt ``weights`` (dropping zeros) unless the loss would go up."""
    active = state.active
    mask = weights > 0.0
    total = weights[mask].sum()
    w = weights[mask] / total
    z = active.combine(np.where(mask, weights, 0.0) / total)
    obj = state.objective(z)
    if obj > state.obj:
        return False
    if not mask.all():
        active.keep(mask)
    state.set_weights(w, obj, z)
    return True


def bpcg_step(state: SolverState, pro: np.ndarray, grad: np.ndarray | None = None) -> str:
    """Pairwise step moving weight from the away vertex to the local FW vertex."""
    active = state.active
    state.counts["bpcg_steps"] += 1
    a = int(np.argmax(pro))
    f = int(np.argmin(pro))
    if a == f:
        return "bpcg"
    gamma = active.weights
    ga = float(gamma[a])
    v_a = active.vertices[a].values_on_U
    v_f = active.vertices[f].values_on_U
    end = state.iterate + ga * (v_f - v_a)
    s, _ = exact_line_search(state.lam * state.iterate, state.lam * end, state.ctx)
    if s <= 0.0:
        return "bpcg"
    w = gamma.copy()
    if s >= 1.0:
        w[f] += w[a]
        w[a] = 0.0
    else:
        eta = s * ga
        w[a] -= eta
        w[f] += eta
    _commit(state, w)
    return "bpcg"


def _move_toward(state: SolverState, vertex: Vertex) -> float:
    """Exact line search from the iterate toward ``vertex``; returns the step."""
    start = state.lam * state.iterate
    s, _ = exact_line_search(start, state.lam * vertex.values_on_U, state.ctx)
    if s <= 0.0:
        return 0.0
    active = state.active
    if s >= 1.0:
        if state.objective(vertex.values_on_U) > state.obj:
            return 0.0
        j = active.add(vertex)
        active.collapse_to(j)
        state.set_weights(active.weights)
        return 1.0
    w_old = active.weights.copy()
    n_old = len(active)
    j = active.add(vertex)
    w = np.append(w_old * (1.0 - s), 0.0) if len(active) > n_old else w_old * (1.0 - s)
    w[j] += s
    z = active.combine(w)
    obj = state.objective(z)
    if obj > state.obj:
        # numerically no progress: undo the addition
        if len(active) > n_old:
            active.keep(np.arange(len(active)) < n_old)
        active.weights = w_old
        return 0.0
    state.set_weights(w, obj, z)
    # weights of an existing vertex changed: invalidate accelerated momentum
    state.active.version += 1
    return s


def lpsep_step(state: SolverState, grad: np.ndarray | None = None) -> tuple[str, Status]:
    """Oracle step: separate with AltMin, fall back to the exact search.

    The exact path runs whenever ``phi`` is infinite (first iteration) and,
    in certifying mode, once ``phi`` has dropped below ``tol``, so that
    stopping is backed by a certified lower bound.
    """
    if grad is None:
        grad = gradient(state.lam * state.iterate, state.ctx)
    g = state.lam * grad
    cmin = float(np.dot(g, state.iterate))
    force_exact = not math.isfinite(state.phi) or (state.certify and state.phi < state.tol)
    gap = state.phi if state.phi > 0 else state.tol
    request = OracleRequest(g, cmin, gap, state.tol)
    variant = state.variant
    state.counts["lpsep_steps"] += 1
    state.counts["oracle_calls"] += 1

    def exact(gr, data, incumbent=None):
        state.counts["exact_ip_calls"] += 1
        if state.dump_ip is not None:
            path = Path(state.dump_ip) / f"oracle_{state.iteration}.lp"
            path.write_text(emit_ip_model(grad, data, state.lam), encoding="utf-8")
        return exact_vertex_min(gr, data, incumbent=incumbent, max_rho=state.max_rho)

    answer = weak_separation(
        request, state.data, state.rng,
        altmin_restarts=state.altmin_restarts,
        exact_fallback=exact,
        pattern=state.pattern if variant.pattern else None,
        indexed=variant.index,
        all_ones_first=state.first_oracle_call,
        force_exact=force_exact,
    )
    state.first_oracle_call = False
    state.counts["altmin_runs"] += answer.heuristic_runs
    impr = answer.improvement
    if answer.status is Status.EXACT_MINIMUM:
        state.bestbd = max(state.bestbd, state.obj - impr)
        if impr > 0.0:
            _move_toward(state, answer.vertex)
        state.phi = impr / 2.0
        if (state.certify and force_exact and math.isfinite(request.gap)
                and state.obj - state.bestbd >= state.tol):
            # not certified yet: resume blending at the stopping scale
            state.phi = max(state.phi, state.tol)
    else:
        _move_toward(state, answer.vertex)
        if answer.status is Status.SEPARATED_BELOW_TARGET:
            state.phi = max(impr, state.phi / 2.0)
    return "lpsep", answer.status


# ---------------------------------------------------------------- driver

def solve(data: ObservedData, lam: float, tol: float = 1e-4, variant: VariantConfig | int = 0,
          seed: int | None = 0, *, max_iter: int = 100_000, altmin_restarts: int = 100,
          max_rho: int = DEFAULT_MAX_RHO, nag_max_iter: int = 100, trace: bool = True,
          check: bool = False, dump_ip=None, time_limit: float | None = None,
          certify: bool = False) -> SolveResult:
    """Complete the tensor observed in ``data`` within the ball of radius ``lam``.

    ``variant`` is a :class:`VariantConfig` or a version number 0..10.  With
    ``check`` set, every iteration also verifies the iterate/weight
    invariants and the dense/sparse agreement of the vertex products; the
    worst deviations are kept in the trace rows.

    The loop stops once ``phi < tol`` or the certified gap
    ``objVal - bestbd`` is below ``tol``.  ``certify`` keeps only the second
    test: a small ``phi`` then triggers the exact oracle until the gap is
    certified, which can be expensive on large instances.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if data.n == 0:
        raise ValueError("no observations")
    if isinstance(variant, int):
        variant = make_variant(variant)
    t0 = time.perf_counter()
    ctx = LossContext(data, float(lam))
    pattern = build_pattern_index(data) if variant.pattern else None
    active = ActiveSet(data.u, sparse=variant.sparse)
    ones = Vertex.from_thetas([np.ones(r, dtype=np.int8) for r in data.shape.dims], data)
    active.add(ones, 1.0)
    z = active.combine()
    state = SolverState(
        ctx=ctx, variant=variant, tol=float(tol), active=active, iterate=z, phi=math.inf,
        obj=loss(lam * z, ctx), rng=np.random.default_rng(seed), pattern=pattern,
        altmin_restarts=altmin_restarts, max_rho=max_rho, nag_max_iter=nag_max_iter,
        dump_ip=Path(dump_ip) if dump_ip is not None else None, certify=certify,
    )
    rows = []
    converged = False
    while state.iteration < max_iter:
        if state.obj - state.bestbd < tol or (not certify and state.phi < tol):
            converged = True
            break
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            break
        state.iteration += 1
        grad = gradient(lam * state.iterate, ctx)
        g = lam * grad
        pro = active.pro(g)
        pro_err = _check_pro(active, g, pro) if check else None
        a, f = int(np.argmax(pro)), int(np.argmin(pro))
        obj_before = state.obj
        use_descent = (math.isfinite(state.phi) and state.phi >= tol
                       and pro[a] - pro[f] >= state.phi and pro[a] > pro[f])
        try:
            if use_descent:
                if variant.bpcg:
                    step = bpcg_step(state, pro, grad)
                elif variant.nag:
                    step = nag_descent(state)
                else:
                    step = sigd_step(state, pro)
            else:
                step, _ = lpsep_step(state, grad)
        except OracleTooLarge as exc:
            raise OracleTooLarge(f"iteration {state.iteration}: {exc}") from exc
        if trace or check:
            row = {
                "iteration": state.iteration, "step_type": step, "obj_val": state.obj,
                "phi": state.phi, "bestbd": state.bestbd, "active_set_size": len(active),
            }
            if check:
                row.update(_invariants(state, obj_before))
                row["pro_dense_sparse_diff"] = pro_err
            rows.append(row)
    else:
        converged = state.obj - state.bestbd < tol or (not certify and state.phi < tol)
    if not converged:
        log.warning("stopped after %d iterations with gap %.3g", state.iteration,
                    state.obj - state.bestbd)
    tensor = lam * active.full_tensor(data.shape)
    elapsed = time.perf_counter() - t0
    return SolveResult(
        tensor=tensor, objective=state.obj, gap=state.obj - state.bestbd, bestbd=state.bestbd,
        iterations=state.iteration, counts=dict(state.counts), time_s=elapsed,
        converged=converged, vertices=list(active.vertices), weights=active.weights.copy(),
        lam=float(lam), trace=rows,
    )


def _check_pro(active: ActiveSet, g: np.ndarray, pro: np.ndarray) -> float:
    """Recompute the vertex products with the other storage format."""
    if active.sparse:
        dense = np.array([v.values_on_U for v in active.vertices])
        other = dense @ g
    else:
        supports = [v.support() for v in active.vertices]
        indptr = np.zeros(len(supports) + 1, dtype=np.int64)
        np.cumsum([len(s) for s in supports], out=indptr[1:])
        indices = np.concatenate(supports).astype(np.int32) if supports else np.zeros(0, np.int32)
        other = _backend.kernels.csr_binary_matvec(indptr, indices, np.ascontiguousarray(g))
    return float(np.max(np.abs(other - pro))) if len(pro) else 0.0


def _invariants(state: SolverState, obj_before: float) -> dict:
    w = state.active.weights
    recon = np.array([v.values_on_U for v in state.active.vertices]).T @ w
    return {
        "weight_sum_err": abs(float(w.sum()) - 1.0),
        "weight_min": float(w.min()),
        "iterate_min": float(state.iterate.min()) if state.iterate.size else 0.0,
        "iterate_max": float(state.iterate.max()) if state.iterate.size else 0.0,
        "recon_err": float(np.max(np.abs(recon - state.iterate))) if recon.size else 0.0,
        "obj_increase": state.obj - obj_before,
        "exact_obj_err": abs(state.objective(state.iterate) - state.obj),
    }


def write_trace(rows: list, path) -> None:
    cols = ["iteration", "step_type", "obj_val", "phi", "bestbd", "active_set_size"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols])
