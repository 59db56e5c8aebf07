# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: exhaustive partition search and tabular training steps.

Semantics match ``ibpl._pykernels`` exactly; only summation order may differ.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY, isfinite

cnp.import_array()

cdef double PROB_CLAMP = 1e-300


# -- exhaustive deterministic IB search -------------------------------------

cdef double _row_term(const double[:] acc, double mass, Py_ssize_t m) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t y
    for y in range(m):
        if acc[y] > 0.0:
            s += acc[y] * log(acc[y] / mass)
    return s


cdef class _Search:
    cdef Py_ssize_t n, m
    cdef const double[:] p_x
    cdef const double[:, :] joint
    cdef const unsigned char[:, :] identical
    cdef double epsilon, tie_tol, const_term
    cdef long[:] a
    cdef double[:, :] acc
    cdef double[:, :] saved
    cdef double[:] mass
    cdef double[:] term
    cdef unsigned char[:] ok
    cdef long[:] best_a
    cdef double best_loss, best_h
    cdef Py_ssize_t best_k
    cdef long count

    def __init__(self, p_x, joint, identical, double epsilon, double tie_tol):
        self.p_x = np.ascontiguousarray(p_x, dtype=np.float64)
        self.joint = np.ascontiguousarray(joint, dtype=np.float64)
        self.identical = np.ascontiguousarray(identical, dtype=np.uint8)
        self.n = self.joint.shape[0]
        self.m = self.joint.shape[1]
        self.epsilon = epsilon
        self.tie_tol = tie_tol
        self.a = np.zeros(self.n, dtype=np.int_)
        self.best_a = np.zeros(self.n, dtype=np.int_)
        self.acc = np.zeros((self.n, self.m))
        self.saved = np.zeros((self.n, self.m))
        self.mass = np.zeros(self.n)
        self.term = np.zeros(self.n)
        self.ok = np.ones(self.n, dtype=np.uint8)
        self.best_loss = 0.0
        self.best_h = INFINITY
        self.best_k = self.n + 1
        self.count = 0
        cdef Py_ssize_t x, y
        cdef double rowmass
        self.const_term = 0.0
        for x in range(self.n):
            rowmass = 0.0
            for y in range(self.m):
                rowmass += self.joint[x, y]
            self.const_term += _row_term(self.joint[x], rowmass, self.m)

    cdef void _leaf(self, Py_ssize_t k) nogil:
        cdef double total = 0.0, h = 0.0, loss
        cdef bint all_ok = True
        cdef Py_ssize_t c
        for c in range(k):
            total += self.term[c]
            if not self.ok[c]:
                all_ok = False
        loss = self.const_term - total
        if loss < 0.0:
            loss = 0.0
        if not (loss <= self.epsilon or all_ok):
            return
        self.count += 1
        for c in range(k):
            if self.mass[c] > 0.0:
                h -= self.mass[c] * log(self.mass[c])
        if h < self.best_h - self.tie_tol or (fabs(h - self.best_h) <= self.tie_tol and k < self.best_k):
            self.best_h = h
            self.best_loss = loss
            self.best_k = k
            for c in range(self.n):
                self.best_a[c] = self.a[c]

    cdef void _visit(self, Py_ssize_t i, Py_ssize_t k) nogil:
        cdef Py_ssize_t c, j, y, newk
        cdef double old_mass, old_term
        cdef unsigned char old_ok, members_ok
        if i == self.n:
            self._leaf(k)
            return
        for c in range(k + 1):
            for y in range(self.m):
                self.saved[i, y] = self.acc[c, y]
            old_mass = self.mass[c]
            old_term = self.term[c]
            old_ok = self.ok[c]
            if c == k:
                for y in range(self.m):
                    self.acc[c, y] = 0.0
                self.mass[c] = 0.0
                self.ok[c] = 1
            members_ok = self.ok[c]
            if members_ok:
                for j in range(i):
                    if self.a[j] == c and not self.identical[i, j]:
                        members_ok = 0
                        break
            for y in range(self.m):
                self.acc[c, y] += self.joint[i, y]
            self.mass[c] += self.p_x[i]
            self.term[c] = _row_term(self.acc[c], self.mass[c], self.m)
            self.ok[c] = members_ok
            self.a[i] = c
            newk = k + 1 if c == k else k
            self._visit(i + 1, newk)
            for y in range(self.m):
                self.acc[c, y] = self.saved[i, y]
            self.mass[c] = old_mass
            self.term[c] = old_term
            self.ok[c] = old_ok

    def run(self):
        with nogil:
            self._visit(0, 0)
        return (np.asarray(self.best_a, dtype=np.int64).copy(), self.best_loss,
                self.best_h, self.count)


def exhaustive_search(p_x, joint, identical, double epsilon, double tie_tol):
    """See ``ibpl._pykernels.exhaustive_search``."""
    return _Search(p_x, joint, identical, epsilon, tie_tol).run()


# -- tabular adversarial training ------------------------------------------

cdef void _softmax(double[:, :] logits, double[:, :] out) nogil:
    cdef Py_ssize_t r, c
    cdef double mx, s
    for r in range(logits.shape[0]):
        mx = logits[r, 0]
        for c in range(1, logits.shape[1]):
            if logits[r, c] > mx:
                mx = logits[r, c]
        s = 0.0
        for c in range(logits.shape[1]):
            out[r, c] = exp(logits[r, c] - mx)
            s += out[r, c]
        for c in range(logits.shape[1]):
            out[r, c] /= s


cdef void _softmax_backward_step(double[:, :] probs, double[:, :] grad,
                                 double[:, :] logits, double lr) nogil:
    """logits -= lr * probs * (grad - rowsum(probs * grad))."""
    cdef Py_ssize_t r, c
    cdef double dot
    for r in range(probs.shape[0]):
        dot = 0.0
        for c in range(probs.shape[1]):
            dot += probs[r, c] * grad[r, c]
        for c in range(probs.shape[1]):
            logits[r, c] -= lr * probs[r, c] * (grad[r, c] - dot)


cdef class _Trainer:
    cdef Py_ssize_t nx, nt, ny
    cdef double[:, :] W, V, U
    cdef const double[:, :] joint
    cdef const double[:] px
    cdef double[:, :] E, D, Q, M, gE, gD, gQ
    cdef double[:] a
    cdef double l_mt, l_adv

    def __init__(self, W, V, U, joint):
        self.W = W
        self.V = V
        self.U = U
        self.joint = np.ascontiguousarray(joint, dtype=np.float64)
        self.nx = W.shape[0]
        self.nt = W.shape[1]
        self.ny = V.shape[1]
        self.px = np.ascontiguousarray(np.asarray(joint).sum(axis=1), dtype=np.float64)
        self.E = np.zeros((self.nx, self.nt))
        self.D = np.zeros((self.nt, self.ny))
        self.Q = np.zeros((self.nt, self.nx))
        self.M = np.zeros((self.nx, self.ny))
        self.gE = np.zeros((self.nx, self.nt))
        self.gD = np.zeros((self.nt, self.ny))
        self.gQ = np.zeros((self.nt, self.nx))
        self.a = np.zeros(self.nx)

    cdef void forward(self) nogil:
        cdef Py_ssize_t x, t, y
        cdef double s
        _softmax(self.W, self.E)
        _softmax(self.V, self.D)
        _softmax(self.U, self.Q)
        self.l_mt = 0.0
        self.l_adv = 0.0
        for x in range(self.nx):
            for y in range(self.ny):
                s = 0.0
                for t in range(self.nt):
                    s += self.E[x, t] * self.D[t, y]
                if s < PROB_CLAMP:
                    s = PROB_CLAMP
                self.M[x, y] = s
                if self.joint[x, y] > 0.0:
                    self.l_mt -= self.joint[x, y] * log(s)
            s = 0.0
            for t in range(self.nt):
                s += self.E[x, t] * self.Q[t, x]
            if s < PROB_CLAMP:
                s = PROB_CLAMP
            self.a[x] = s
            if self.px[x] > 0.0:
                self.l_adv -= self.px[x] * log(s)

    cdef void step(self, bint adversarial, double lam, double lr) nogil:
        cdef Py_ssize_t x, t, y
        cdef double g, ga
        if adversarial:
            for t in range(self.nt):
                for x in range(self.nx):
                    ga = -self.px[x] / self.a[x] if self.px[x] > 0.0 else 0.0
                    self.gQ[t, x] = ga * self.E[x, t]
            _softmax_backward_step(self.Q, self.gQ, self.U, lr)
            return
        for x in range(self.nx):
            ga = -self.px[x] / self.a[x] if self.px[x] > 0.0 else 0.0
            for t in range(self.nt):
                g = 0.0
                for y in range(self.ny):
                    if self.joint[x, y] > 0.0:
                        g -= self.joint[x, y] / self.M[x, y] * self.D[t, y]
                self.gE[x, t] = lam * g - (1.0 - lam) * ga * self.Q[t, x]
        for t in range(self.nt):
            for y in range(self.ny):
                g = 0.0
                for x in range(self.nx):
                    if self.joint[x, y] > 0.0:
                        g -= self.E[x, t] * self.joint[x, y] / self.M[x, y]
                self.gD[t, y] = lam * g
        _softmax_backward_step(self.E, self.gE, self.W, lr)
        _softmax_backward_step(self.D, self.gD, self.V, lr)


def run_steps(double[:, :] W, double[:, :] V, double[:, :] U, joint,
              unsigned char[:] flags, double lam, double lr, double[:, :] trace):
    """See ``ibpl._pykernels.run_steps``."""
    cdef _Trainer tr = _Trainer(W, V, U, joint)
    cdef Py_ssize_t s, n = flags.shape[0]
    cdef double obj
    cdef long bad = -1
    with nogil:
        tr.forward()
        for s in range(n):
            tr.step(flags[s], lam, lr)
            tr.forward()
            obj = lam * tr.l_mt - (1.0 - lam) * tr.l_adv
            trace[s, 0] = tr.l_mt
            trace[s, 1] = tr.l_adv
            trace[s, 2] = obj
            if not isfinite(obj):
                bad = s
                break
    return bad
