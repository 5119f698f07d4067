# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Signatures mirror ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def strict_local_maxima(channel):
    cdef const double[:, ::1] a = np.ascontiguousarray(channel, dtype=np.float64)
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef Py_ssize_t y, x, yy, xx
    cdef int dy, dx
    cdef double v
    cdef bint is_max
    ys = []
    xs = []
    for y in range(h):
        for x in range(w):
            v = a[y, x]
            is_max = True
            for dy in range(-1, 2):
                yy = y + dy
                if yy < 0 or yy >= h:
                    continue
                for dx in range(-1, 2):
                    xx = x + dx
                    if (dy == 0 and dx == 0) or xx < 0 or xx >= w:
                        continue
                    if not v > a[yy, xx]:
                        is_max = False
                        break
                if not is_max:
                    break
            if is_max:
                ys.append(y)
                xs.append(x)
    return np.array(ys, dtype=np.int64), np.array(xs, dtype=np.int64)


cdef double _quad(const double[:, ::1] p, double* q, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, row
    for i in range(k):
        row = 0.0
        for j in range(k):
            row += p[i, j] * q[j]
        acc += q[i] * row
    return acc


def score_combinations(cand_xy, counts, proj, int bank_dim, double rank_tol):
    cdef const double[:, :, ::1] c = np.ascontiguousarray(cand_xy, dtype=np.float64)
    cdef const long long[::1] cnt = np.ascontiguousarray(counts, dtype=np.int64)
    cdef const double[:, ::1] p = np.ascontiguousarray(proj, dtype=np.float64)
    cdef Py_ssize_t k = cnt.shape[0]
    cdef Py_ssize_t n = 1, j, i
    for i in range(k):
        n *= cnt[i]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] scores = out
    cdef long long[::1] digit = np.zeros(k, dtype=np.int64)
    cdef double[::1] ca = np.empty(k), cb = np.empty(k), q1 = np.empty(k), q2 = np.empty(k)
    cdef double mx, my, na, nb, r11, r12, r22, corr, s, prod, s1, s2, disc, val
    cdef double *first
    cdef double *second
    with nogil:
        for j in range(n):
            mx = 0.0
            my = 0.0
            for i in range(k):
                mx += c[i, digit[i], 0]
                my += c[i, digit[i], 1]
            mx /= k
            my /= k
            na = 0.0
            nb = 0.0
            for i in range(k):
                ca[i] = c[i, digit[i], 0] - mx
                cb[i] = c[i, digit[i], 1] - my
                na += ca[i] * ca[i]
                nb += cb[i] * cb[i]
            # larger column first keeps Gram-Schmidt well conditioned
            if na >= nb:
                first = &ca[0]
                second = &cb[0]
                r11 = sqrt(na)
            else:
                first = &cb[0]
                second = &ca[0]
                r11 = sqrt(nb)
            if r11 == 0.0:
                scores[j] = -INFINITY
            else:
                for i in range(k):
                    q1[i] = first[i] / r11
                r12 = 0.0
                for i in range(k):
                    r12 += q1[i] * second[i]
                for i in range(k):
                    q2[i] = second[i] - r12 * q1[i]
                corr = 0.0
                for i in range(k):
                    corr += q1[i] * q2[i]
                r12 += corr
                r22 = 0.0
                for i in range(k):
                    q2[i] -= corr * q1[i]
                    r22 += q2[i] * q2[i]
                r22 = sqrt(r22)
                # singular values of R = [[r11, r12], [0, r22]]
                s = r11 * r11 + r12 * r12 + r22 * r22
                prod = r11 * r22
                disc = (s - 2.0 * prod) * (s + 2.0 * prod)
                if disc < 0.0:
                    disc = 0.0
                s1 = sqrt(0.5 * (s + sqrt(disc)))
                s2 = prod / s1
                if s2 > rank_tol * s1:
                    if bank_dim == 2:
                        for i in range(k):
                            q2[i] /= r22
                        val = 0.5 * (_quad(p, &q1[0], k) + _quad(p, &q2[0], k))
                        scores[j] = val
                    else:
                        scores[j] = -INFINITY
                else:
                    if bank_dim == 1:
                        scores[j] = _quad(p, &q1[0], k)
                    else:
                        scores[j] = -INFINITY
            # odometer increment, last landmark fastest
            i = k - 1
            while i >= 0:
                digit[i] += 1
                if digit[i] < cnt[i]:
                    break
                digit[i] = 0
                i -= 1
    return out
