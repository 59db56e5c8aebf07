"""Pure-Python/numpy versions of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module; selected at
import time when the extension is unavailable or IBPL_PURE_PYTHON is set.
"""

import math

import numpy as np

PROB_CLAMP = 1e-300


# -- exhaustive deterministic IB search -------------------------------------

def exhaustive_search(p_x, joint, identical, epsilon, tie_tol):
    """Scan every set partition in restricted-growth lexicographic order.

    Returns ``(assignment, loss, h_t, n_feasible)`` for the feasible partition
    of least H(T); near-ties (within tie_tol) go to fewer clusters, then to the
    earlier partition. A partition is feasible when its information loss is
    at most ``epsilon`` or when each of its clusters only groups sources
    flagged pairwise ``identical``.
    """
    p_x = np.asarray(p_x, dtype=float)
    joint = np.asarray(joint, dtype=float)
    identical = np.asarray(identical, dtype=bool)
    n, m = joint.shape
    const = _cluster_term(joint)

    a = [0] * n
    acc = np.zeros((n, m))
    mass = [0.0] * n
    term = [0.0] * n
    ok = [True] * n
    best = {"a": None, "loss": 0.0, "h": math.inf, "k": n + 1, "count": 0}

    def leaf(k):
        loss = max(0.0, const - sum(term[:k]))
        all_ok = all(ok[:k])
        if not (loss <= epsilon or all_ok):
            return
        best["count"] += 1
        h = -sum(pc * math.log(pc) for pc in mass[:k] if pc > 0)
        if h < best["h"] - tie_tol or (abs(h - best["h"]) <= tie_tol and k < best["k"]):
            best.update(a=list(a), loss=loss, h=h, k=k)

    def visit(i, k):
        if i == n:
            leaf(k)
            return
        for c in range(k + 1):
            saved = (acc[c].copy(), mass[c], term[c], ok[c])
            if c == k:
                acc[c] = 0.0
                mass[c] = 0.0
                ok[c] = True
            members_ok = ok[c] and all(identical[i, j] for j in range(i) if a[j] == c)
            acc[c] += joint[i]
            mass[c] += p_x[i]
            term[c] = _row_term(acc[c], mass[c])
            ok[c] = members_ok
            a[i] = c
            visit(i + 1, max(k, c + 1))
            acc[c], mass[c], term[c], ok[c] = saved

    visit(0, 0)
    return np.asarray(best["a"], dtype=np.int64), best["loss"], best["h"], best["count"]


def _row_term(acc_row, mass):
    nz = acc_row > 0
    return float(np.sum(acc_row[nz] * np.log(acc_row[nz] / mass)))


def _cluster_term(joint):
    """sum_x sum_y P(x,y) ln P(y|x): the singleton-partition value of the cluster terms."""
    return sum(_row_term(row, row.sum()) for row in joint)


# -- tabular adversarial training ------------------------------------------

def softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_backward(probs, grad):
    return probs * (grad - np.sum(probs * grad, axis=1, keepdims=True))


def forward(W, V, U, joint):
    """Returns (E, D, Q, M, a, l_mt, l_adv, clamped)."""
    E, D, Q = softmax_rows(W), softmax_rows(V), softmax_rows(U)
    M = E @ D
    a = np.einsum("xt,tx->x", E, Q)
    px = joint.sum(axis=1)
    support = joint > 0
    clamped = bool(np.any(M[support] < PROB_CLAMP) or np.any(a[px > 0] < PROB_CLAMP))
    Mc = np.maximum(M, PROB_CLAMP)
    ac = np.maximum(a, PROB_CLAMP)
    l_mt = float(-np.sum(joint[support] * np.log(Mc[support])))
    l_adv = float(-np.sum(px[px > 0] * np.log(ac[px > 0])))
    return E, D, Q, Mc, ac, l_mt, l_adv, clamped


def backward(E, D, Q, M, a, joint, lam):
    """Gradients (encoder dJ/dW, MT decoder dJ/dV, adversarial decoder dL_adv/dU)."""
    px = joint.sum(axis=1)
    gM = np.where(joint > 0, -joint / M, 0.0)
    ga = np.where(px > 0, -px / a, 0.0)
    dE_mt = gM @ D.T
    dD_mt = E.T @ gM
    dE_adv = ga[:, None] * Q.T
    dQ_adv = (ga[:, None] * E).T
    dW = _softmax_backward(E, lam * dE_mt - (1.0 - lam) * dE_adv)
    dV = _softmax_backward(D, lam * dD_mt)
    dU = _softmax_backward(Q, dQ_adv)
    return dW, dV, dU


def run_steps(W, V, U, joint, flags, lam, lr, trace):
    """Apply ``len(flags)`` descent steps in place.

    ``flags[s]`` selects the adversarial-decoder branch for step s. Row s of
    ``trace`` receives (l_mt, l_adv, objective) after step s. Returns the index
    of the first step whose objective is not finite, or -1.
    """
    joint = np.asarray(joint, dtype=float)
    # non-finite values are reported through the return value, as in the compiled kernel
    with np.errstate(invalid="ignore", over="ignore"):
        return _run_steps(W, V, U, joint, flags, lam, lr, trace)


def _run_steps(W, V, U, joint, flags, lam, lr, trace):
    E, D, Q, M, a, _, _, _ = forward(W, V, U, joint)
    for s in range(len(flags)):
        dW, dV, dU = backward(E, D, Q, M, a, joint, lam)
        if flags[s]:
            U -= lr * dU
        else:
            W -= lr * dW
            V -= lr * dV
        E, D, Q, M, a, l_mt, l_adv, _ = forward(W, V, U, joint)
        obj = lam * l_mt - (1.0 - lam) * l_adv
        trace[s, 0] = l_mt
        trace[s, 1] = l_adv
        trace[s, 2] = obj
        if not math.isfinite(obj):
            return s
    return -1
