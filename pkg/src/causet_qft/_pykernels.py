"""Pure-Python reference implementations of the hot kernels.

Monomials are sorted index tuples; polynomials are dicts monomial -> complex.
Every function here has a drop-in twin in ``_kernels.pyx``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


@lru_cache(maxsize=1 << 18)
def removals(mono):
    """Distinct single-index removals of a sorted monomial.

    Returns a tuple of ``(index, multiplicity, reduced_monomial)``.
    """
    out = []
    n = len(mono)
    p = 0
    while p < n:
        i = mono[p]
        q = p + 1
        while q < n and mono[q] == i:
            q += 1
        out.append((i, q - p, mono[:p] + mono[p + 1:]))
        p = q
    return tuple(out)


def merge(a, b):
    if not a:
        return b
    if not b:
        return a
    return tuple(sorted(a + b))


def bilinear(fa, fb, M, nmax):
    """All contractions ``m o D_M^n (F x G)`` for ``n = 0..nmax``.

    Parameters
    ----------
    fa, fb : dict
        Sparse coefficient data of F and G.
    M : sequence of sequences
        Contraction kernel, ``M[i][j]`` pairs slot ``i`` of F with slot ``j`` of G.
    nmax : int
        Highest contraction order.

    Returns
    -------
    list of dict
        Entry ``n`` holds the coefficient data of the n-fold contraction.
    """
    out = [dict() for _ in range(nmax + 1)]
    state = {}
    for a, ca in fa.items():
        for b, cb in fb.items():
            state[(a, b)] = ca * cb
    for n in range(nmax + 1):
        res = out[n]
        for (a, b), c in state.items():
            key = merge(a, b)
            res[key] = res.get(key, 0j) + c
        if n == nmax:
            break
        nxt = {}
        for (a, b), c in state.items():
            if not a or not b:
                continue
            rb = removals(b)
            for i, mi, ar in removals(a):
                row = M[i]
                for j, mj, br in rb:
                    m = row[j]
                    if m == 0:
                        continue
                    k = (ar, br)
                    nxt[k] = nxt.get(k, 0j) + c * (mi * mj) * m
        state = nxt
        if not state:
            break
    return out


def self_contract(fa, H):
    """``sum_ij H[i][j] d_i d_j F`` on sparse coefficient data."""
    out = {}
    for a, c in fa.items():
        if len(a) < 2:
            continue
        for i, mi, ar in removals(a):
            row = H[i]
            for j, mj, arr in removals(ar):
                h = row[j]
                if h == 0:
                    continue
                out[arr] = out.get(arr, 0j) + c * (mi * mj) * h
    return out


def link_ranks(pred, n):
    """Shortest link-path lengths; ``pred[z]`` lists link predecessors of ``z``.

    Entry ``[x, y]`` is the rank of ``y`` below ``x`` or -1 when no path exists.
    """
    ranks = np.full((n, n), -1, dtype=np.int32)
    for x in range(n):
        row = [-1] * n
        row[x] = 0
        frontier = [x]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for z in frontier:
                for y in pred[z]:
                    if row[y] < 0:
                        row[y] = d
                        nxt.append(y)
            frontier = nxt
        ranks[x] = row
    return ranks


def fnv1a64(data):
    h = FNV_OFFSET
    for byte in bytes(data):
        h = ((h ^ byte) * FNV_PRIME) & _MASK
    return h
