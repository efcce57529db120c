"""Pure-Python/NumPy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same results; the
compiled one is picked at import by ``ntc._backend``.
"""

import numpy as np

BACKEND = "python"


def csr_binary_matvec(indptr, indices, x):
    """``out[i] = sum(x[indices[indptr[i]:indptr[i+1]]])``."""
    k = len(indptr) - 1
    out = np.zeros(k)
    if k == 0 or len(indices) == 0:
        return out
    gathered = x[indices]
    lengths = np.diff(indptr)
    nonempty = lengths > 0
    out[nonempty] = np.add.reduceat(gathered, indptr[:-1][nonempty])
    return out


def csr_binary_rmatvec(indptr, indices, w, u):
    """``out[t] = sum(w[i] for rows i containing column t)``."""
    lengths = np.diff(indptr)
    return np.bincount(indices, weights=np.repeat(w, lengths), minlength=u).astype(np.float64)


def _node(fix, coords, offsets, dims, g, neg, rho, leaf_mode):
    """Group sums, sign counts of free coordinates, bound and leaf-mode term."""
    flat = coords + offsets[None, :]
    f = fix[flat]
    alive = ~(f == 0).any(axis=1)
    flat, f, ga, na = flat[alive], f[alive], g[alive], neg[alive]
    free = f == -1
    others_free = free.sum(axis=1)[:, None] - free
    term = np.where(others_free == 0, ga[:, None], na[:, None])
    S = np.bincount(flat.ravel(), weights=term.ravel(), minlength=rho)
    pos_flat = flat[free & (ga[:, None] > 0.0)]
    neg_flat = flat[free & (ga[:, None] < 0.0)]
    posc = np.bincount(pos_flat, minlength=rho)
    negc = np.bincount(neg_flat, minlength=rho)
    contrib = np.where(fix == 1, S, np.where((fix < 0) & (S < 0.0), S, 0.0))
    per_mode = [contrib[o:o + r].sum() for o, r in zip(offsets, dims)]
    return S, posc, negc, max(per_mode), per_mode[leaf_mode]


def bnb_vertex_min(coords, g, dims, order, leaf_mode, incumbent, incumbent_theta):
    """Minimize ``sum_t g[t] * prod_k theta_k[coords[t, k]]`` over binary thetas.

    Depth-first branch and bound over the coordinates listed in ``order``
    (flat ids into a length-``sum(dims)`` vector, never from ``leaf_mode``).
    Once those are fixed the ``leaf_mode`` vector is set by the sign rule.

    The bound at a node is the largest over modes ``m`` of the sum over
    ``j`` of ``S_mj`` (``theta_mj`` fixed to 1) or ``min(0, S_mj)`` (free),
    where ``S_mj`` adds, over live positions with ``coords[t, m] == j``,
    ``g[t]`` when every other coordinate of ``t`` is fixed to 1 and
    ``min(0, g[t])`` otherwise.  Before branching, a free coordinate whose
    live positions all have ``g >= 0`` is fixed to 0 and one whose live
    positions all have ``g <= 0`` is fixed to 1; both keep an optimum.
    Returns ``(theta_flat, value, nodes)``.
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(dims))
    g = np.asarray(g, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(dims)[:-1])).astype(np.int64)
    rho = int(dims.sum())
    neg = np.minimum(g, 0.0)
    order = np.asarray(order, dtype=np.int64)
    leaf_lo, leaf_hi = offsets[leaf_mode], offsets[leaf_mode] + dims[leaf_mode]
    fix = np.full(rho, -1, dtype=np.int8)
    best = {"value": float(incumbent), "theta": np.asarray(incumbent_theta, dtype=np.int8).copy()}
    nodes = 0

    def dfs():
        nonlocal nodes
        nodes += 1
        forced = []
        while True:
            S, posc, negc, bound, leaf_value = _node(fix, coords, offsets, dims, g, neg, rho,
                                                     leaf_mode)
            if bound >= best["value"]:
                fix[forced] = -1
                return
            free_vars = order[fix[order] < 0]
            zero = free_vars[negc[free_vars] == 0]
            one = free_vars[(negc[free_vars] > 0) & (posc[free_vars] == 0)]
            if len(zero) == 0 and len(one) == 0:
                break
            fix[zero] = 0
            fix[one] = 1
            forced.extend(zero.tolist())
            forced.extend(one.tolist())
        free_vars = order[fix[order] < 0]
        if len(free_vars) == 0:
            if leaf_value < best["value"]:
                theta = (fix == 1).astype(np.int8)
                theta[leaf_lo:leaf_hi] = (S[leaf_lo:leaf_hi] < 0.0).astype(np.int8)
                best["value"], best["theta"] = leaf_value, theta
            fix[forced] = -1
            return
        var = free_vars[0]
        first = 1 if S[var] < 0.0 else 0
        for val in (first, 1 - first):
            fix[var] = val
            dfs()
        fix[var] = -1
        fix[forced] = -1

    dfs()
    return best["theta"], best["value"], nodes
