# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Signatures and semantics match ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, isfinite, M_PI, INFINITY

cnp.import_array()

OK = 0
DEGENERATE = 1
NOT_CONVERGED = 2

cdef double LOG_BETA_LO = -30.0 * 0.6931471805599453
cdef double LOG_BETA_HI = 30.0 * 0.6931471805599453
cdef double LN2 = 0.6931471805599453
cdef int MAX_EXPANSIONS = 64
cdef double STOP_TOL = 1e-13


def sqdist(X):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j, k
    out = np.zeros((n, n))
    cdef double[:, ::1] d = out
    cdef double s, t
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for k in range(m):
                    t = x[i, k] - x[j, k]
                    s += t * t
                d[i, j] = s
                d[j, i] = s
    return out


def tsne_gradient(P, Y):
    cdef const double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = y.shape[0], i, j
    W_arr = np.empty((n, n))
    grad = np.zeros((n, 2))
    cdef double[:, ::1] w = W_arr
    cdef double[:, ::1] g = grad
    cdef double dx, dy, wij, z = 0.0, m, gx, gy
    with nogil:
        for i in range(n):
            w[i, i] = 0.0
            for j in range(i + 1, n):
                dx = y[i, 0] - y[j, 0]
                dy = y[i, 1] - y[j, 1]
                wij = 1.0 / (1.0 + dx * dx + dy * dy)
                w[i, j] = wij
                w[j, i] = wij
                z += 2.0 * wij
        for i in range(n):
            gx = 0.0
            gy = 0.0
            for j in range(n):
                if j == i:
                    continue
                wij = w[i, j]
                m = (p[i, j] - wij / z) * wij
                gx += m * (y[i, 0] - y[j, 0])
                gy += m * (y[i, 1] - y[j, 1])
            g[i, 0] = 4.0 * gx
            g[i, 1] = 4.0 * gy
    return grad


def cross_entropy(P, Y):
    cdef const double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = y.shape[0], i, j
    cdef double dx, dy, z = 0.0, acc = 0.0, psum = 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = y[i, 0] - y[j, 0]
                dy = y[i, 1] - y[j, 1]
                z += 2.0 / (1.0 + dx * dx + dy * dy)
        for i in range(n):
            for j in range(n):
                if j == i or p[i, j] == 0.0:
                    continue
                dx = y[i, 0] - y[j, 0]
                dy = y[i, 1] - y[j, 1]
                acc += p[i, j] * log1p(dx * dx + dy * dy)
                psum += p[i, j]
    return acc + log(z) * psum


cdef inline void _entropy(const double* d, Py_ssize_t k, double u,
                          double* H, double* slope) noexcept nogil:
    cdef double beta = exp(u), c = 0.0, m1 = 0.0, m2 = 0.0, e
    cdef Py_ssize_t j
    for j in range(k):
        e = exp(-beta * d[j])
        c += e
        m1 += d[j] * e
        m2 += d[j] * d[j] * e
    m1 /= c
    m2 /= c
    H[0] = log(c) + beta * m1
    slope[0] = -beta * beta * (m2 - m1 * m1)


cdef int _search_row(double* d, Py_ssize_t k, double target, double tol, int max_iters,
                     double* beta_out, double* h_out) noexcept nogil:
    cdef Py_ssize_t j
    cdef double dmin = d[0], dmax, lo, hi, u, H, slope, f, newton, h_lo, h_hi, s
    cdef int it
    for j in range(k):
        if d[j] < dmin:
            dmin = d[j]
    dmax = 0.0
    for j in range(k):
        d[j] -= dmin
        if d[j] > dmax:
            dmax = d[j]
    if dmax == 0.0:
        h_out[0] = log(<double>k)
        if fabs(h_out[0] - target) <= tol:
            beta_out[0] = 1.0
            return 0
        beta_out[0] = 0.0
        return 1

    lo = LOG_BETA_LO
    hi = LOG_BETA_HI
    for it in range(MAX_EXPANSIONS):
        _entropy(d, k, lo, &h_lo, &s)
        if h_lo >= target:
            break
        lo -= LN2
    for it in range(MAX_EXPANSIONS):
        _entropy(d, k, hi, &h_hi, &s)
        if h_hi <= target:
            break
        hi += LN2

    u = 0.0
    if u < lo:
        u = lo
    if u > hi:
        u = hi
    _entropy(d, k, u, &H, &slope)
    for it in range(max_iters):
        f = H - target
        if fabs(f) <= STOP_TOL or hi - lo <= 1e-14 * (fabs(u) if fabs(u) > 1.0 else 1.0):
            break
        if f > 0:
            lo = u
        else:
            hi = u
        newton = u - f / slope
        if isfinite(newton) and newton > lo and newton < hi:
            u = newton
        else:
            u = 0.5 * (lo + hi)
        _entropy(d, k, u, &H, &slope)
    beta_out[0] = exp(u)
    h_out[0] = H
    return 0 if fabs(H - target) <= tol else 2


def beta_search(D2, double target_ln, double tol, int max_iters, bint skip_diag):
    cdef const double[:, ::1] src = np.ascontiguousarray(D2, dtype=np.float64)
    cdef Py_ssize_t r = src.shape[0], ncol = src.shape[1]
    cdef Py_ssize_t k = ncol - 1 if skip_diag else ncol
    cdef Py_ssize_t i, j, c
    betas = np.zeros(r)
    ln_ppx = np.zeros(r)
    status = np.zeros(r, dtype=np.int8)
    cdef double[::1] b = betas
    cdef double[::1] h = ln_ppx
    cdef signed char[::1] st = status
    cdef double[::1] row = np.empty(max(k, 1))
    with nogil:
        for i in range(r):
            c = 0
            for j in range(ncol):
                if skip_diag and j == i:
                    continue
                row[c] = src[i, j]
                c += 1
            st[i] = _search_row(&row[0], k, target_ln, tol, max_iters, &b[i], &h[i])
    return betas, ln_ppx, status


def kde_grid(points, betas, xc, yc, double trunc):
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[::1] bet = np.ascontiguousarray(betas, dtype=np.float64)
    cdef const double[::1] xs = np.ascontiguousarray(xc, dtype=np.float64)
    cdef const double[::1] ys = np.ascontiguousarray(yc, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0], nx = xs.shape[0], ny = ys.shape[0], j, ix, iy
    out = np.zeros((ny, nx))
    cdef double[:, ::1] o = out
    cdef double[::1] ex = np.empty(nx), dx2 = np.empty(nx)
    cdef double b, a, ey, dy2, r2max, t
    cdef bint truncated = isfinite(trunc)
    with nogil:
        for j in range(n):
            b = bet[j]
            a = b / M_PI
            r2max = trunc * trunc / b if truncated else INFINITY
            for ix in range(nx):
                t = xs[ix] - pts[j, 0]
                dx2[ix] = t * t
                ex[ix] = exp(-b * dx2[ix])
            for iy in range(ny):
                t = ys[iy] - pts[j, 1]
                dy2 = t * t
                if truncated and dy2 > r2max:
                    continue
                ey = exp(-b * dy2) * a
                for ix in range(nx):
                    if truncated and dy2 + dx2[ix] > r2max:
                        continue
                    o[iy, ix] += ey * ex[ix]
    return out


cdef inline bint _try_label(Py_ssize_t c, const double* v, int* labels, Py_ssize_t nx,
                            Py_ssize_t ny, long long* peaks, Py_ssize_t* npeaks) noexcept nogil:
    cdef Py_ssize_t iy = c // nx, ix = c % nx, y, x, q, best = -1
    cdef int dy, dx
    # strict maximum: every neighbour lower (unlabelled neighbours are never higher)
    cdef bint strict = True
    for dy in range(-1, 2):
        y = iy + dy
        if y < 0 or y >= ny:
            continue
        for dx in range(-1, 2):
            x = ix + dx
            if (dy == 0 and dx == 0) or x < 0 or x >= nx:
                continue
            q = y * nx + x
            if labels[q]:
                if best < 0 or v[q] > v[best] or (v[q] == v[best] and labels[q] < labels[best]):
                    best = q
            elif v[q] >= v[c]:
                strict = False
    if best >= 0:
        labels[c] = labels[best]
        return True
    if strict:
        peaks[npeaks[0]] = c
        npeaks[0] += 1
        labels[c] = <int>npeaks[0]
        return True
    return False


def water_track(values, order):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64).ravel()
    cdef Py_ssize_t ny = values.shape[0], nx = values.shape[1], g = ny * nx
    cdef const long long[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    labels_arr = np.zeros(g, dtype=np.int32)
    peaks_arr = np.zeros(g, dtype=np.int64)
    cdef int[::1] labels = labels_arr
    cdef long long[::1] peaks = peaks_arr
    # ring buffer over the current equal-value run
    cdef long long[::1] queue = np.empty(max(g, 1), dtype=np.int64)
    cdef Py_ssize_t npeaks = 0, pos = 0, end, head, tail, size, stalled, c
    with nogil:
        while pos < g:
            end = pos + 1
            while end < g and v[od[end]] == v[od[pos]]:
                end += 1
            size = end - pos
            for c in range(size):
                queue[c] = od[pos + c]
            head = 0
            tail = size  # pending count
            stalled = 0
            while tail > 0:
                c = queue[head]
                head = (head + 1) % size
                tail -= 1
                if _try_label(c, &v[0], &labels[0], nx, ny, &peaks[0], &npeaks):
                    stalled = 0
                    continue
                queue[(head + tail) % size] = c
                tail += 1
                stalled += 1
                if stalled == tail:
                    c = queue[head]
                    head = (head + 1) % size
                    tail -= 1
                    peaks[npeaks] = c
                    npeaks += 1
                    labels[c] = <int>npeaks
                    stalled = 0
            pos = end
    return labels_arr.reshape(ny, nx), peaks_arr[:npeaks].copy()
