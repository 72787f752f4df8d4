# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, lgamma, sqrt, cos, sin, fabs, pow

cnp.import_array()

cdef enum:
    _LF_SIZE = 1026
JMAX_CAP = 256

cdef double _lf[_LF_SIZE]
cdef int _i
for _i in range(_LF_SIZE):
    _lf[_i] = lgamma(_i + 1.0)


cdef inline int _imax3(int a, int b, int c) nogil:
    if b > a:
        a = b
    if c > a:
        a = c
    return a


cdef inline int _imin3(int a, int b, int c) nogil:
    if b < a:
        a = b
    if c < a:
        a = c
    return a


cdef double _three_j(int j1, int j2, int j3, int m1, int m2, int m3) nogil:
    cdef int t, tmin, tmax
    cdef double pref, term, total
    if m1 + m2 + m3 != 0:
        return 0.0
    if m1 > j1 or -m1 > j1 or m2 > j2 or -m2 > j2 or m3 > j3 or -m3 > j3:
        return 0.0
    if j3 < (j1 - j2 if j1 > j2 else j2 - j1) or j3 > j1 + j2:
        return 0.0
    if m1 == 0 and m2 == 0 and m3 == 0 and (j1 + j2 + j3) % 2 == 1:
        return 0.0
    tmin = _imax3(0, j2 - j3 - m1, j1 - j3 + m2)
    tmax = _imin3(j1 + j2 - j3, j1 - m1, j2 + m2)
    pref = 0.5 * (
        _lf[j1 + j2 - j3] + _lf[j1 - j2 + j3] + _lf[-j1 + j2 + j3] - _lf[j1 + j2 + j3 + 1]
        + _lf[j1 + m1] + _lf[j1 - m1] + _lf[j2 + m2] + _lf[j2 - m2] + _lf[j3 + m3] + _lf[j3 - m3]
    )
    total = 0.0
    for t in range(tmin, tmax + 1):
        term = exp(
            pref
            - (_lf[t] + _lf[j3 - j2 + t + m1] + _lf[j3 - j1 + t - m2]
               + _lf[j1 + j2 - j3 - t] + _lf[j1 - t - m1] + _lf[j2 - t + m2])
        )
        if t & 1:
            total -= term
        else:
            total += term
    if (j1 - j2 - m3) & 1:
        total = -total
    return total


def three_j(int j1, int j2, int j3, int m1, int m2, int m3):
    return _three_j(j1, j2, j3, m1, m2, m3)


def small_d(int j, int m, int k, theta):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] th = np.ascontiguousarray(
        np.ravel(np.asarray(theta, dtype=np.float64)))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(th.shape[0])
    cdef Py_ssize_t i, n = th.shape[0]
    cdef int q, qlo, qhi, pc, ps
    cdef double pref, coef, c, s
    if m > j or -m > j or k > j or -k > j:
        return out.reshape(np.shape(theta))
    pref = 0.5 * (_lf[j + m] + _lf[j - m] + _lf[j + k] + _lf[j - k])
    qlo = k - m if k - m > 0 else 0
    qhi = j + k if j + k < j - m else j - m
    for q in range(qlo, qhi + 1):
        coef = exp(pref - (_lf[j + k - q] + _lf[q] + _lf[m - k + q] + _lf[j - m - q]))
        if (m - k + q) & 1:
            coef = -coef
        pc = 2 * j + k - m - 2 * q
        ps = m - k + 2 * q
        for i in range(n):
            c = cos(0.5 * th[i])
            s = sin(0.5 * th[i])
            out[i] += coef * pow(c, pc) * pow(s, ps)
    return out.reshape(np.shape(theta))


def multipole_upper(cnp.ndarray states, cnp.ndarray lookup, int jmax,
                    terms_L, terms_p, terms_q, coef):
    cdef const int[:, ::1] st = np.ascontiguousarray(states, dtype=np.intc)
    cdef const long[:, :, ::1] lk = np.ascontiguousarray(lookup, dtype=np.int_)
    cdef int[::1] tL = np.ascontiguousarray(terms_L, dtype=np.intc)
    cdef int[::1] tp = np.ascontiguousarray(terms_p, dtype=np.intc)
    cdef int[::1] tq = np.ascontiguousarray(terms_q, dtype=np.intc)
    cdef double complex[::1] cf = np.ascontiguousarray(coef, dtype=np.complex128)
    cdef Py_ssize_t n = st.shape[0], nterm = tL.shape[0]
    cdef Py_ssize_t b, t, cap, cnt = 0
    cdef int j, k, m, L, p, q, kp, mp, jp, jlo, jhi, a
    cdef double w3, w3k, val
    # worst case: every term reaches 2L+1 rows per column
    cap = 0
    for t in range(nterm):
        cap += 2 * tL[t] + 1
    cap *= n
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rows = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cols = np.empty(cap, dtype=np.int64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] vals = np.empty(cap, dtype=np.complex128)
    for b in range(n):
        j = st[b, 0]
        k = st[b, 1]
        m = st[b, 2]
        for t in range(nterm):
            L = tL[t]
            p = tp[t]
            q = tq[t]
            kp = k - q
            mp = m - p
            jlo = j - L if j > L else L - j
            jhi = j + L if j + L < jmax else jmax
            for jp in range(jlo, jhi + 1):
                if kp > jp or -kp > jp or mp > jp or -mp > jp:
                    continue
                a = <int>lk[jp, kp + jmax, mp + jmax]
                if a < 0 or a > b:
                    continue
                w3 = _three_j(jp, L, j, mp, p, -m)
                if w3 == 0.0:
                    continue
                w3k = _three_j(jp, L, j, kp, q, -k)
                if w3k == 0.0:
                    continue
                val = sqrt((2.0 * jp + 1.0) * (2.0 * j + 1.0)) * w3 * w3k
                if (m - k) & 1:
                    val = -val
                rows[cnt] = a
                cols[cnt] = b
                vals[cnt] = cf[t] * val
                cnt += 1
    return rows[:cnt], cols[:cnt], vals[:cnt]


# Dormand-Prince 5(4)
cdef double _A[7][6]
cdef double _B[7]
cdef double _E[7]
_A[1][:1] = [1.0 / 5]
_A[2][:2] = [3.0 / 40, 9.0 / 40]
_A[3][:3] = [44.0 / 45, -56.0 / 15, 32.0 / 9]
_A[4][:4] = [19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729]
_A[5][:5] = [9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656]
_A[6][:6] = [35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84]
_B[:] = [35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0]
_E[:] = [71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200, 22.0 / 525, -1.0 / 40]


cdef inline void _rhs(double* y, double ax, double ay, double az, double* f) nogil:
    cdef double wx = ax * y[0], wy = ay * y[1], wz = az * y[2]
    f[0] = y[1] * wz - y[2] * wy
    f[1] = y[2] * wx - y[0] * wz
    f[2] = y[0] * wy - y[1] * wx
    f[3] = 0.5 * (-y[4] * wx - y[5] * wy - y[6] * wz)
    f[4] = 0.5 * (y[3] * wx + y[5] * wz - y[6] * wy)
    f[5] = 0.5 * (y[3] * wy + y[6] * wx - y[4] * wz)
    f[6] = 0.5 * (y[3] * wz + y[4] * wy - y[5] * wx)


cdef inline void _project(double* J, double ax, double ay, double az,
                          double j2_0, double e2_0) nogil:
    cdef double aJ[3]
    cdef double g1, g2, p11, p12, p22, det, al, be, sc
    cdef int c
    aJ[0] = ax * J[0]
    aJ[1] = ay * J[1]
    aJ[2] = az * J[2]
    g1 = J[0] * J[0] + J[1] * J[1] + J[2] * J[2] - j2_0
    g2 = J[0] * aJ[0] + J[1] * aJ[1] + J[2] * aJ[2] - e2_0
    p11 = J[0] * J[0] + J[1] * J[1] + J[2] * J[2]
    p12 = J[0] * aJ[0] + J[1] * aJ[1] + J[2] * aJ[2]
    p22 = aJ[0] * aJ[0] + aJ[1] * aJ[1] + aJ[2] * aJ[2]
    det = p11 * p22 - p12 * p12
    if det > 1e-10 * p11 * p22:
        al = -0.5 * (g1 * p22 - g2 * p12) / det
        be = -0.5 * (g2 * p11 - g1 * p12) / det
        for c in range(3):
            J[c] += al * J[c] + be * aJ[c]
    else:
        sc = sqrt(j2_0 / p11)
        for c in range(3):
            J[c] *= sc


def rigid_body_dp45(inertia, y0, t_eval, double rtol, double atol, double h0, long max_steps):
    cdef double ax = 1.0 / inertia[0], ay = 1.0 / inertia[1], az = 1.0 / inertia[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] te = np.ascontiguousarray(t_eval, dtype=np.float64)
    cdef Py_ssize_t nt = te.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nt, 7))
    cdef double y[7]
    cdef double yi[7]
    cdef double ynew[7]
    cdef double ks[7][7]
    cdef double t, t_target, h, h_try, err, e, inc, sc, fac, nq, j2_0, e2_0
    cdef long n_acc = 0, n_rej = 0
    cdef int s, r, c, last
    cdef Py_ssize_t i
    for c in range(7):
        y[c] = y0[c]
        out[0, c] = y[c]
    j2_0 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2]
    e2_0 = ax * y[0] * y[0] + ay * y[1] * y[1] + az * y[2] * y[2]
    t = te[0]
    h = h0
    for i in range(1, nt):
        t_target = te[i]
        while t < t_target:
            if n_acc + n_rej > max_steps:
                raise RuntimeError("rigid-body integrator exceeded max_steps")
            if t + h >= t_target:
                h_try = t_target - t
                last = 1
            else:
                h_try = h
                last = 0
            for s in range(7):
                for c in range(7):
                    yi[c] = y[c]
                for r in range(s):
                    if _A[s][r] != 0.0:
                        for c in range(7):
                            yi[c] += h_try * _A[s][r] * ks[r][c]
                _rhs(yi, ax, ay, az, ks[s])
            err = 0.0
            for c in range(7):
                inc = 0.0
                e = 0.0
                for s in range(7):
                    inc += _B[s] * ks[s][c]
                    e += _E[s] * ks[s][c]
                ynew[c] = y[c] + h_try * inc
                sc = atol + rtol * (fabs(y[c]) if fabs(y[c]) > fabs(ynew[c]) else fabs(ynew[c]))
                e = fabs(h_try * e) / sc
                if e > err:
                    err = e
            if err <= 1.0:
                t = t_target if last else t + h_try
                nq = sqrt(ynew[3] * ynew[3] + ynew[4] * ynew[4] + ynew[5] * ynew[5] + ynew[6] * ynew[6])
                for c in range(3, 7):
                    ynew[c] /= nq
                _project(ynew, ax, ay, az, j2_0, e2_0)
                for c in range(7):
                    y[c] = ynew[c]
                n_acc += 1
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = 0.9 * pow(err, -0.2)
                    if fac > 5.0:
                        fac = 5.0
                if not last:
                    h = h_try * fac
            else:
                n_rej += 1
                fac = 0.9 * pow(err, -0.2)
                if fac < 0.2:
                    fac = 0.2
                h = h_try * fac
        for c in range(7):
            out[i, c] = y[c]
    return out, n_acc, n_rej
