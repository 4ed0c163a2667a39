"""Independent reference implementations used by the tests.

Forms are dicts mapping sorted tuples of generator labels to coefficients;
generators are ``("z", j)`` and ``("zb", j)`` ordered as all dz before all dzbar.
"""
import itertools

import numpy as np


def _order(label, n):
    kind, j = label
    return j if kind == "z" else n + j


def _sort_sign(labels, n):
    keys = [_order(l, n) for l in labels]
    if len(set(keys)) < len(keys):
        return 0, None
    sign = 1
    keys = list(keys)
    # bubble sort counting transpositions
    for i in range(len(keys)):
        for j in range(len(keys) - 1 - i):
            if keys[j] > keys[j + 1]:
                keys[j], keys[j + 1] = keys[j + 1], keys[j]
                sign = -sign
    labels = sorted(labels, key=lambda l: _order(l, n))
    return sign, tuple(labels)


def to_dict(form):
    """Pointwise (unbatched) PQForm -> dict."""
    n = form.n
    out = {}
    I_list = list(itertools.combinations(range(n), form.p))
    J_list = list(itertools.combinations(range(n), form.q))
    for a, I in enumerate(I_list):
        for b, J in enumerate(J_list):
            c = form.coeffs[a, b]
            if c != 0:
                key = tuple(("z", i) for i in I) + tuple(("zb", j) for j in J)
                out[key] = out.get(key, 0) + c
    return out


def wedge_dict(a, b, n):
    out = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            sign, key = _sort_sign(ka + kb, n)
            if sign:
                out[key] = out.get(key, 0) + sign * va * vb
    return out


def dict_to_array(d, n, p, q):
    from math import comb
    I_list = list(itertools.combinations(range(n), p))
    J_list = list(itertools.combinations(range(n), q))
    arr = np.zeros((comb(n, p), comb(n, q)), dtype=complex)
    for key, v in d.items():
        I = tuple(j for kind, j in key if kind == "z")
        J = tuple(j for kind, j in key if kind == "zb")
        arr[I_list.index(I), J_list.index(J)] += v
    return arr


def compound(A, p):
    """p-th compound matrix (minors over increasing index sets)."""
    r = A.shape[0]
    subsets = list(itertools.combinations(range(r), p))
    return np.array([[np.linalg.det(A[np.ix_(I, J)]) for J in subsets] for I in subsets])


def exterior_derivation(A, p, t=1e-5):
    """Derivative at 0 of C_p(I + tA); the compound is polynomial in t."""
    r = A.shape[0]
    ts = np.array([-2, -1, 1, 2]) * t
    vals = [compound(np.eye(r) + s * A, p) for s in ts]
    # five-point stencil without the centre
    return (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * t)
