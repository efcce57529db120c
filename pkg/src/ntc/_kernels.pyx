# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: binary row-compressed matvecs and the exact vertex B&B.

Mirrors ``_kernels_py`` function for function.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def csr_binary_matvec(const cnp.int64_t[::1] indptr, const cnp.int32_t[::1] indices,
                      const double[::1] x):
    cdef Py_ssize_t k = indptr.shape[0] - 1
    cdef Py_ssize_t i, q
    cdef double acc
    out = np.zeros(k if k > 0 else 0)
    cdef double[::1] o = out
    for i in range(k):
        acc = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            acc += x[indices[q]]
        o[i] = acc
    return out


def csr_binary_rmatvec(const cnp.int64_t[::1] indptr, const cnp.int32_t[::1] indices,
                       const double[::1] w, Py_ssize_t u):
    cdef Py_ssize_t k = indptr.shape[0] - 1
    cdef Py_ssize_t i, q
    cdef double wi
    out = np.zeros(u)
    cdef double[::1] o = out
    for i in range(k):
        wi = w[i]
        for q in range(indptr[i], indptr[i + 1]):
            o[indices[q]] += wi
    return out


cdef class _Search:
    cdef Py_ssize_t u, p, rho, nvars, leaf_mode, ntrail
    cdef const cnp.int64_t[:, ::1] coords
    cdef const double[::1] g
    cdef cnp.int64_t[::1] dims, offsets, order, trail
    cdef signed char[::1] fix, best_theta, branchable
    cdef double[::1] S
    cdef cnp.int32_t[::1] posc, negc
    cdef Py_ssize_t[::1] isfree
    cdef double best_value, leaf_value
    cdef long nodes

    cdef double node_sums(self):
        """Group sums, sign counts and the node bound.

        ``leaf_value`` receives the leaf mode's term, which is the exact
        optimum of the node once every branchable coordinate is fixed.
        """
        cdef Py_ssize_t t, m, c, nfree, j
        cdef bint dead
        cdef signed char f
        cdef double gt, neg, term, s, val, bound
        self.S[:] = 0.0
        self.posc[:] = 0
        self.negc[:] = 0
        for t in range(self.u):
            dead = False
            nfree = 0
            for m in range(self.p):
                c = self.offsets[m] + self.coords[t, m]
                f = self.fix[c]
                if f == 0:
                    dead = True
                    break
                if f < 0:
                    nfree += 1
                    self.isfree[m] = 1
                else:
                    self.isfree[m] = 0
            if dead:
                continue
            gt = self.g[t]
            neg = gt if gt < 0.0 else 0.0
            for m in range(self.p):
                c = self.offsets[m] + self.coords[t, m]
                term = gt if nfree - self.isfree[m] == 0 else neg
                self.S[c] += term
                if self.isfree[m]:
                    if gt > 0.0:
                        self.posc[c] += 1
                    elif gt < 0.0:
                        self.negc[c] += 1
        bound = -1e308
        for m in range(self.p):
            val = 0.0
            for j in range(self.dims[m]):
                c = self.offsets[m] + j
                s = self.S[c]
                f = self.fix[c]
                if f == 1:
                    val += s
                elif f < 0 and s < 0.0:
                    val += s
            if m == self.leaf_mode:
                self.leaf_value = val
            if val > bound:
                bound = val
        return bound

    cdef void undo(self, Py_ssize_t mark):
        while self.ntrail > mark:
            self.ntrail -= 1
            self.fix[self.trail[self.ntrail]] = -1

    cdef void record_leaf(self):
        cdef Py_ssize_t c, j, lo
        self.best_value = self.leaf_value
        for c in range(self.rho):
            self.best_theta[c] = 1 if self.fix[c] == 1 else 0
        lo = self.offsets[self.leaf_mode]
        for j in range(self.dims[self.leaf_mode]):
            self.best_theta[lo + j] = 1 if self.S[lo + j] < 0.0 else 0

    cdef void dfs(self):
        cdef double bound
        cdef Py_ssize_t var, q, c, mark
        cdef signed char first
        cdef int side
        cdef bint changed
        mark = self.ntrail
        self.nodes += 1
        while True:
            bound = self.node_sums()
            if bound >= self.best_value:
                self.undo(mark)
                return
            # dominance: a coordinate whose live positions all share one sign
            changed = False
            for q in range(self.nvars):
                c = self.order[q]
                if self.fix[c] >= 0:
                    continue
                if self.negc[c] == 0:
                    self.fix[c] = 0
                elif self.posc[c] == 0:
                    self.fix[c] = 1
                else:
                    continue
                self.trail[self.ntrail] = c
                self.ntrail += 1
                changed = True
            if not changed:
                break
        var = -1
        for q in range(self.nvars):
            if self.fix[self.order[q]] < 0:
                var = self.order[q]
                break
        if var < 0:
            if self.leaf_value < self.best_value:
                self.record_leaf()
            self.undo(mark)
            return
        first = 1 if self.S[var] < 0.0 else 0
        for side in range(2):
            self.fix[var] = first if side == 0 else 1 - first
            self.dfs()
        self.fix[var] = -1
        self.undo(mark)


def bnb_vertex_min(coords, g, dims, order, Py_ssize_t leaf_mode, double incumbent,
                   incumbent_theta):
    cdef _Search s = _Search()
    s.coords = np.ascontiguousarray(coords, dtype=np.int64)
    s.g = np.ascontiguousarray(g, dtype=np.float64)
    s.dims = np.ascontiguousarray(dims, dtype=np.int64)
    s.u = s.coords.shape[0]
    s.p = s.dims.shape[0]
    s.offsets = np.concatenate(([0], np.cumsum(dims)[:-1])).astype(np.int64)
    s.rho = int(np.sum(dims))
    s.order = np.ascontiguousarray(order, dtype=np.int64)
    s.nvars = s.order.shape[0]
    s.leaf_mode = leaf_mode
    s.fix = np.full(s.rho, -1, dtype=np.int8)
    s.best_theta = np.array(incumbent_theta, dtype=np.int8)
    s.S = np.zeros(s.rho)
    s.posc = np.zeros(s.rho, dtype=np.int32)
    s.negc = np.zeros(s.rho, dtype=np.int32)
    s.trail = np.zeros(s.rho + 1, dtype=np.int64)
    s.ntrail = 0
    s.isfree = np.zeros(s.p, dtype=np.intp)
    s.best_value = incumbent
    s.nodes = 0
    s.dfs()
    return np.asarray(s.best_theta), s.best_value, s.nodes
