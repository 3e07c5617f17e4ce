"""Independent oracles shared by the test modules."""

import numpy as np

from sthcss.tensor import Tape, backward

FD_EPS = 1e-5


def numeric_grad(f, arrays, eps=FD_EPS):
    """Central differences of the scalar function ``f()`` w.r.t. every entry
    of every array in ``arrays`` (perturbed in place, then restored)."""
    out = []
    for a in arrays:
        g = np.zeros(a.shape)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = float(f())
            flat[i] = old - eps
            fm = float(f())
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def rel_error(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def gradcheck(build, leaves, eps=FD_EPS):
    """Compare tape gradients of ``build()`` (returns a scalar Tensor) with
    central differences. Returns the worst per-leaf relative error."""
    with Tape() as tape:
        loss = build()
    analytic = backward(tape, loss, leaves)
    numeric = numeric_grad(lambda: build().data, [t.data for t in leaves], eps)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))


def brute_knn(features, k):
    """Hyperedge membership sets from sorting every distance in plain Python."""
    X = np.asarray(features, dtype=float)
    n = X.shape[0]
    edges = []
    for j in range(n):
        d = [(sum((X[i, c] - X[j, c]) ** 2 for c in range(X.shape[1])) ** 0.5, i)
             for i in range(n) if i != j]
        d.sort()
        edges.append({j} | {i for _, i in d[:k - 1]})
    return edges
