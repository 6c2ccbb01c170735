# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``; identical signatures."""
import numpy as np

cdef unsigned long long FNV_OFFSET = 0xCBF29CE484222325ULL
cdef unsigned long long FNV_PRIME = 0x100000001B3ULL

cdef dict _removal_cache = {}


cdef tuple _removals(tuple mono):
    cdef object hit = _removal_cache.get(mono)
    if hit is not None:
        return <tuple>hit
    cdef Py_ssize_t n = len(mono)
    cdef Py_ssize_t p = 0, q
    cdef list out = []
    cdef long i
    while p < n:
        i = mono[p]
        q = p + 1
        while q < n and mono[q] == i:
            q += 1
        out.append((i, q - p, mono[:p] + mono[p + 1:]))
        p = q
    res = tuple(out)
    if len(_removal_cache) > 1000000:
        _removal_cache.clear()
    _removal_cache[mono] = res
    return res


def removals(mono):
    return _removals(tuple(mono))


cdef inline tuple _merge(tuple a, tuple b):
    if not a:
        return b
    if not b:
        return a
    return tuple(sorted(a + b))


def merge(a, b):
    return _merge(a, b)


def bilinear(dict fa, dict fb, M, int nmax):
    cdef double complex[:, ::1] mv = np.ascontiguousarray(np.asarray(M, dtype=np.complex128))
    cdef list out = [dict() for _ in range(nmax + 1)]
    cdef dict state = {}
    cdef dict nxt, res
    cdef tuple a, b, ar, br, key, ra, rb, ka, kb
    cdef double complex c, m, ca, cb
    cdef long i, j, mi, mj
    cdef int n
    for a, ca in fa.items():
        for b, cb in fb.items():
            state[(a, b)] = ca * cb
    for n in range(nmax + 1):
        res = <dict>out[n]
        for key, c in state.items():
            a = <tuple>key[0]
            b = <tuple>key[1]
            k2 = _merge(a, b)
            res[k2] = res.get(k2, 0j) + c
        if n == nmax:
            break
        nxt = {}
        for key, c in state.items():
            a = <tuple>key[0]
            b = <tuple>key[1]
            if not a or not b:
                continue
            ra = _removals(a)
            rb = _removals(b)
            for ka in ra:
                i = ka[0]
                mi = ka[1]
                ar = <tuple>ka[2]
                for kb in rb:
                    j = kb[0]
                    m = mv[i, j]
                    if m.real == 0.0 and m.imag == 0.0:
                        continue
                    mj = kb[1]
                    br = <tuple>kb[2]
                    k2 = (ar, br)
                    nxt[k2] = nxt.get(k2, 0j) + c * (mi * mj) * m
        state = nxt
        if not state:
            break
    return out


def self_contract(dict fa, H):
    cdef double complex[:, ::1] hv = np.ascontiguousarray(np.asarray(H, dtype=np.complex128))
    cdef dict out = {}
    cdef tuple a, ar, arr, ki, kj
    cdef double complex c, h
    cdef long i, j, mi, mj
    for a, c in fa.items():
        if len(a) < 2:
            continue
        for ki in _removals(a):
            i = ki[0]
            mi = ki[1]
            ar = <tuple>ki[2]
            for kj in _removals(ar):
                j = kj[0]
                h = hv[i, j]
                if h.real == 0.0 and h.imag == 0.0:
                    continue
                mj = kj[1]
                arr = <tuple>kj[2]
                out[arr] = out.get(arr, 0j) + c * (mi * mj) * h
    return out


def link_ranks(pred, int n):
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t z, k, x, y, head, tail, d
    for z in range(n):
        total += len(pred[z])
    cdef long[::1] ptr = np.zeros(n + 1, dtype=np.int_)
    cdef long[::1] idx = np.zeros(max(total, 1), dtype=np.int_)
    k = 0
    for z in range(n):
        ptr[z] = k
        for y in pred[z]:
            idx[k] = y
            k += 1
    ptr[n] = k
    ranks_arr = np.full((n, n), -1, dtype=np.int32)
    cdef int[:, ::1] ranks = ranks_arr
    cdef long[::1] queue = np.zeros(max(n, 1), dtype=np.int_)
    for x in range(n):
        ranks[x, x] = 0
        queue[0] = x
        head = 0
        tail = 1
        while head < tail:
            z = queue[head]
            head += 1
            d = ranks[x, z] + 1
            for k in range(ptr[z], ptr[z + 1]):
                y = idx[k]
                if ranks[x, y] < 0:
                    ranks[x, y] = <int>d
                    queue[tail] = y
                    tail += 1
    return ranks_arr


def fnv1a64(data):
    cdef const unsigned char[::1] buf = memoryview(bytes(data))
    cdef unsigned long long h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(buf.shape[0]):
        h = (h ^ buf[i]) * FNV_PRIME
    return int(h)
