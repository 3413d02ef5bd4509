# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel lane: WKV recurrence and depthwise convolution.

Same contract as the numpy lane (`_numpy.py`). Compiled with
-ffp-contract=off so float64 accumulation matches numpy op for op. Inner
loops run over the contiguous last axis so the compiler can vectorize;
the depthwise convolution parallelizes over (n, c) planes, which are
independent, so results do not depend on the schedule.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cimport openmp

cnp.import_array()

NAME = "compiled"


def wkv6_forward(cnp.float32_t[:, :, ::1] r,
                 cnp.float32_t[:, :, ::1] k,
                 cnp.float32_t[:, :, ::1] v,
                 cnp.float32_t[:, :, ::1] d,
                 cnp.float32_t[::1] u,
                 int heads):
    cdef Py_ssize_t B = r.shape[0], T = r.shape[1], C = r.shape[2]
    cdef Py_ssize_t D = C // heads
    cdef int nthreads = openmp.omp_get_max_threads()
    out_arr = np.empty((B, T, C), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    work = np.empty((nthreads, D, D), dtype=np.float64)
    rows = np.empty((nthreads, D), dtype=np.float64)
    cdef double[:, :, ::1] S = work
    cdef double[:, ::1] orow = rows
    cdef Py_ssize_t p, b, h, t, i, j, base, tid
    cdef double bonus, ri, ki, di

    for p in prange(B * heads, nogil=True):
        tid = openmp.omp_get_thread_num()
        b = p // heads
        h = p % heads
        base = h * D
        for i in range(D):
            for j in range(D):
                S[tid, i, j] = 0.0
        for t in range(T):
            bonus = 0.0
            for i in range(D):
                bonus = bonus + (<double> r[b, t, base + i]) * u[base + i] * k[b, t, base + i]
            for j in range(D):
                orow[tid, j] = bonus * (<double> v[b, t, base + j])
            for i in range(D):
                ri = r[b, t, base + i]
                for j in range(D):
                    orow[tid, j] += ri * S[tid, i, j]
            for j in range(D):
                out[b, t, base + j] = <cnp.float32_t> orow[tid, j]
            for i in range(D):
                ki = k[b, t, base + i]
                di = d[b, t, base + i]
                for j in range(D):
                    S[tid, i, j] = di * S[tid, i, j] + ki * (<double> v[b, t, base + j])
    return out_arr


def wkv6_backward(cnp.float32_t[:, :, ::1] r,
                  cnp.float32_t[:, :, ::1] k,
                  cnp.float32_t[:, :, ::1] v,
                  cnp.float32_t[:, :, ::1] d,
                  cnp.float32_t[::1] u,
                  int heads,
                  cnp.float32_t[:, :, ::1] gy):
    cdef Py_ssize_t B = r.shape[0], T = r.shape[1], C = r.shape[2]
    cdef Py_ssize_t D = C // heads
    cdef int nthreads = openmp.omp_get_max_threads()
    dr_arr = np.empty((B, T, C), dtype=np.float32)
    dk_arr = np.empty((B, T, C), dtype=np.float32)
    dv_arr = np.empty((B, T, C), dtype=np.float32)
    dd_arr = np.empty((B, T, C), dtype=np.float32)
    # per-batch bonus-grad partials, reduced in fixed order afterwards
    du_arr = np.zeros((B, C), dtype=np.float64)
    # pre-update states for every step of one (b, h) lane, recomputed forward
    states_arr = np.empty((nthreads, T, D, D), dtype=np.float64)
    adj_arr = np.empty((nthreads, D, D), dtype=np.float64)
    buf_arr = np.empty((nthreads, 4, D), dtype=np.float64)
    cdef cnp.float32_t[:, :, ::1] dr = dr_arr
    cdef cnp.float32_t[:, :, ::1] dk = dk_arr
    cdef cnp.float32_t[:, :, ::1] dv = dv_arr
    cdef cnp.float32_t[:, :, ::1] dd = dd_arr
    cdef double[:, ::1] du = du_arr
    cdef double[:, :, :, ::1] P = states_arr
    cdef double[:, :, ::1] G = adj_arr
    cdef double[:, :, ::1] buf = buf_arr
    cdef Py_ssize_t p, b, h, t, i, j, base, tid
    cdef double acc, gv, ruk, ri, ki, di, ui

    for p in prange(B * heads, nogil=True):
        tid = openmp.omp_get_thread_num()
        b = p // heads
        h = p % heads
        base = h * D
        for i in range(D):
            for j in range(D):
                P[tid, 0, i, j] = 0.0
        for t in range(T - 1):
            for i in range(D):
                ki = k[b, t, base + i]
                di = d[b, t, base + i]
                for j in range(D):
                    P[tid, t + 1, i, j] = di * P[tid, t, i, j] + ki * (<double> v[b, t, base + j])
        for i in range(D):
            for j in range(D):
                G[tid, i, j] = 0.0
        for t in range(T - 1, -1, -1):
            # buf rows: 0 = g_t, 1 = v_t, 2 = k_t, 3 = dv accumulator
            gv = 0.0
            ruk = 0.0
            for j in range(D):
                buf[tid, 0, j] = gy[b, t, base + j]
                buf[tid, 1, j] = v[b, t, base + j]
                buf[tid, 2, j] = k[b, t, base + j]
                gv = gv + buf[tid, 0, j] * buf[tid, 1, j]
            for i in range(D):
                ruk = ruk + (<double> r[b, t, base + i]) * u[base + i] * buf[tid, 2, i]
            for j in range(D):
                buf[tid, 3, j] = ruk * buf[tid, 0, j]
            for i in range(D):
                ri = r[b, t, base + i]
                ki = buf[tid, 2, i]
                ui = u[base + i]
                acc = ui * ki * gv
                for j in range(D):
                    acc = acc + P[tid, t, i, j] * buf[tid, 0, j]
                dr[b, t, base + i] = <cnp.float32_t> acc
                acc = ui * ri * gv
                for j in range(D):
                    acc = acc + G[tid, i, j] * buf[tid, 1, j]
                dk[b, t, base + i] = <cnp.float32_t> acc
                for j in range(D):
                    buf[tid, 3, j] += G[tid, i, j] * ki
                du[b, base + i] += ri * ki * gv
                acc = 0.0
                for j in range(D):
                    acc = acc + G[tid, i, j] * P[tid, t, i, j]
                dd[b, t, base + i] = <cnp.float32_t> acc
            for j in range(D):
                dv[b, t, base + j] = <cnp.float32_t> buf[tid, 3, j]
            for i in range(D):
                ri = r[b, t, base + i]
                di = d[b, t, base + i]
                for j in range(D):
                    G[tid, i, j] = ri * buf[tid, 0, j] + di * G[tid, i, j]
    return dr_arr, dk_arr, dv_arr, dd_arr, du_arr.sum(axis=0).astype(np.float32)


def dwconv2d_forward(cnp.float32_t[:, :, :, ::1] x,
                     cnp.float32_t[:, :, :, ::1] kern,
                     int dilation):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t KH = kern.shape[2], KW = kern.shape[3]
    cdef Py_ssize_t pad = dilation * (KH - 1) // 2
    cdef int nthreads = openmp.omp_get_max_threads()
    out_arr = np.empty((N, C, H, W), dtype=np.float32)
    planes_arr = np.empty((nthreads, H, W), dtype=np.float64)
    cdef cnp.float32_t[:, :, :, ::1] out = out_arr
    cdef double[:, :, ::1] planes = planes_arr
    cdef Py_ssize_t p, n, c, ky, kx, y, xx, oy, ox, y0, y1, x0, x1, tid
    cdef double wv

    for p in prange(N * C, nogil=True):
        tid = openmp.omp_get_thread_num()
        n = p // C
        c = p % C
        for y in range(H):
            for xx in range(W):
                planes[tid, y, xx] = 0.0
        for ky in range(KH):
            oy = ky * dilation - pad
            y0 = -oy if oy < 0 else 0
            y1 = H - oy if oy > 0 else H
            for kx in range(KW):
                ox = kx * dilation - pad
                x0 = -ox if ox < 0 else 0
                x1 = W - ox if ox > 0 else W
                wv = kern[c, 0, ky, kx]
                for y in range(y0, y1):
                    for xx in range(x0, x1):
                        planes[tid, y, xx] += wv * (<double> x[n, c, y + oy, xx + ox])
        for y in range(H):
            for xx in range(W):
                out[n, c, y, xx] = <cnp.float32_t> planes[tid, y, xx]
    return out_arr


def dwconv2d_backward(cnp.float32_t[:, :, :, ::1] x,
                      cnp.float32_t[:, :, :, ::1] kern,
                      int dilation,
                      cnp.float32_t[:, :, :, ::1] gy):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t KH = kern.shape[2], KW = kern.shape[3]
    cdef Py_ssize_t pad = dilation * (KH - 1) // 2
    cdef int nthreads = openmp.omp_get_max_threads()
    dx_arr = np.empty((N, C, H, W), dtype=np.float32)
    # per-(n, c) kernel-grad partials, reduced in fixed order afterwards
    dk_arr = np.zeros((N, C, KH, KW), dtype=np.float32)
    planes_arr = np.empty((nthreads, H, W), dtype=np.float32)
    cdef cnp.float32_t[:, :, :, ::1] dx = dx_arr
    cdef cnp.float32_t[:, :, :, ::1] dkk = dk_arr
    cdef cnp.float32_t[:, :, ::1] planes = planes_arr
    cdef Py_ssize_t p, n, c, ky, kx, y, xx, oy, ox, y0, y1, x0, x1, tid
    cdef cnp.float32_t wv
    cdef double s

    for p in prange(N * C, nogil=True):
        tid = openmp.omp_get_thread_num()
        n = p // C
        c = p % C
        for y in range(H):
            for xx in range(W):
                planes[tid, y, xx] = 0.0
        for ky in range(KH):
            oy = ky * dilation - pad
            y0 = -oy if oy < 0 else 0
            y1 = H - oy if oy > 0 else H
            for kx in range(KW):
                ox = kx * dilation - pad
                x0 = -ox if ox < 0 else 0
                x1 = W - ox if ox > 0 else W
                wv = kern[c, 0, ky, kx]
                s = 0.0
                # dx is gy correlated with the mirrored tap; dk is the
                # tap-aligned inner product of x and gy
                for y in range(y0, y1):
                    for xx in range(x0, x1):
                        planes[tid, y + oy, xx + ox] += wv * gy[n, c, y, xx]
                        s = s + (<double> x[n, c, y + oy, xx + ox]) * gy[n, c, y, xx]
                dkk[n, c, ky, kx] = <cnp.float32_t> s
        for y in range(H):
            for xx in range(W):
                dx[n, c, y, xx] = planes[tid, y, xx]
    return dx_arr, dk_arr.sum(axis=0, dtype=np.float64).astype(np.float32).reshape(C, 1, KH, KW)
