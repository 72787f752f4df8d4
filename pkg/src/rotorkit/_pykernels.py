"""Pure-Python versions of the numerical kernels.

These mirror ``_ckernels.pyx`` line for line and are used when the compiled
extension is unavailable (or when ``ROTORKIT_PURE_PYTHON=1``).
"""
from math import exp, lgamma, sqrt

import numpy as np

JMAX_CAP = 256
_LF = [lgamma(n + 1.0) for n in range(4 * JMAX_CAP + 2)]


def three_j(j1, j2, j3, m1, m2, m3):
    if m1 + m2 + m3 != 0:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if j3 < abs(j1 - j2) or j3 > j1 + j2:
        return 0.0
    if m1 == 0 and m2 == 0 and m3 == 0 and (j1 + j2 + j3) % 2 == 1:
        return 0.0
    lf = _LF
    tmin = max(0, j2 - j3 - m1, j1 - j3 + m2)
    tmax = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    pref = 0.5 * (
        lf[j1 + j2 - j3] + lf[j1 - j2 + j3] + lf[-j1 + j2 + j3] - lf[j1 + j2 + j3 + 1]
        + lf[j1 + m1] + lf[j1 - m1] + lf[j2 + m2] + lf[j2 - m2] + lf[j3 + m3] + lf[j3 - m3]
    )
    total = 0.0
    for t in range(tmin, tmax + 1):
        term = exp(
            pref
            - (lf[t] + lf[j3 - j2 + t + m1] + lf[j3 - j1 + t - m2]
               + lf[j1 + j2 - j3 - t] + lf[j1 - t - m1] + lf[j2 - t + m2])
        )
        total += -term if t & 1 else term
    if (j1 - j2 - m3) & 1:
        total = -total
    return total


def small_d(j, m, k, theta):
    """Wigner d^j_{mk} on an array of angles."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape)
    if abs(m) > j or abs(k) > j:
        return out
    lf = _LF
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    pref = 0.5 * (lf[j + m] + lf[j - m] + lf[j + k] + lf[j - k])
    for q in range(max(0, k - m), min(j + k, j - m) + 1):
        coef = exp(pref - (lf[j + k - q] + lf[q] + lf[m - k + q] + lf[j - m - q]))
        if (m - k + q) & 1:
            coef = -coef
        out += coef * c ** (2 * j + k - m - 2 * q) * s ** (m - k + 2 * q)
    return out


def multipole_upper(states, lookup, jmax, terms_L, terms_p, terms_q, coef):
    """Upper-triangle elements of sum_t coef_t D^{L_t}_{p_t q_t}.

    ``states`` is an (N, 3) array of (j, k, m); ``lookup[j, k+jmax, m+jmax]``
    gives the basis index or -1. Returns (rows, cols, values) with rows <= cols.
    """
    rows, cols, vals = [], [], []
    n = states.shape[0]
    nterm = len(terms_L)
    st = states.tolist()
    for b in range(n):
        j, k, m = st[b]
        acc = {}
        for t in range(nterm):
            L, p, q = int(terms_L[t]), int(terms_p[t]), int(terms_q[t])
            kp = k - q
            mp = m - p
            for jp in range(abs(j - L), min(j + L, jmax) + 1):
                if abs(kp) > jp or abs(mp) > jp:
                    continue
                a = int(lookup[jp, kp + jmax, mp + jmax])
                if a < 0 or a > b:
                    continue
                w3 = three_j(jp, L, j, mp, p, -m)
                if w3 == 0.0:
                    continue
                w3k = three_j(jp, L, j, kp, q, -k)
                if w3k == 0.0:
                    continue
                val = sqrt((2 * jp + 1) * (2 * j + 1)) * w3 * w3k
                if (m - k) & 1:
                    val = -val
                acc[a] = acc.get(a, 0.0) + coef[t] * val
        for a in sorted(acc):
            rows.append(a)
            cols.append(b)
            vals.append(acc[a])
    return (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=complex))


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)


def _rigid_rhs(y, ax, ay, az):
    jx, jy, jz, q0, q1, q2, q3 = y
    wx, wy, wz = ax * jx, ay * jy, az * jz
    return (
        jy * wz - jz * wy,
        jz * wx - jx * wz,
        jx * wy - jy * wx,
        0.5 * (-q1 * wx - q2 * wy - q3 * wz),
        0.5 * (q0 * wx + q2 * wz - q3 * wy),
        0.5 * (q0 * wy + q3 * wx - q1 * wz),
        0.5 * (q0 * wz + q1 * wy - q2 * wx),
    )


def _project(J, ax, ay, az, j2_0, e2_0):
    """One Newton step putting J back on |J|^2 = j2_0 and sum a_k J_k^2 = e2_0
    along the gradients J and a*J; sphere rescaling only if they are parallel."""
    aJ = (ax * J[0], ay * J[1], az * J[2])
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


def rigid_body_dp45(inertia, y0, t_eval, rtol, atol, h0, max_steps):
    """Adaptive DP5(4) integration of the free rigid body.

    State is (J_body[3], q[4]) with q the body->space attitude quaternion.
    Output is sampled exactly at ``t_eval`` (steps are clipped to land on it).
    After each accepted step the quaternion is renormalized and J is
    projected back onto the conserved |J|^2 and energy surfaces.
    Returns (ys, n_accepted, n_rejected).
    """
    ax, ay, az = 1.0 / inertia[0], 1.0 / inertia[1], 1.0 / inertia[2]
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.empty((t_eval.size, 7))
    y = [float(v) for v in y0]
    j2_0 = y[0] ** 2 + y[1] ** 2 + y[2] ** 2
    e2_0 = ax * y[0] ** 2 + ay * y[1] ** 2 + az * y[2] ** 2
    t = float(t_eval[0])
    out[0] = y
    h = h0
    n_acc = n_rej = 0
    for i in range(1, t_eval.size):
        t_target = float(t_eval[i])
        while t < t_target:
            if n_acc + n_rej > max_steps:
                raise RuntimeError("rigid-body integrator exceeded max_steps")
            last = False
            if t + h >= t_target:
                h_try = t_target - t
                last = True
            else:
                h_try = h
            ks = []
            for s in range(7):
                yi = list(y)
                for r, a in enumerate(_A[s]):
                    if a != 0.0:
                        kr = ks[r]
                        for c in range(7):
                            yi[c] += h_try * a * kr[c]
                ks.append(_rigid_rhs(yi, ax, ay, az))
            ynew = list(y)
            err = 0.0
            for c in range(7):
                inc = 0.0
                e = 0.0
                for s in range(7):
                    inc += _B[s] * ks[s][c]
                    e += _E[s] * ks[s][c]
                ynew[c] += h_try * inc
                sc = atol + rtol * max(abs(y[c]), abs(ynew[c]))
                e = abs(h_try * e) / sc
                if e > err:
                    err = e
            if err <= 1.0:
                t = t_target if last else t + h_try
                nq = sqrt(ynew[3] ** 2 + ynew[4] ** 2 + ynew[5] ** 2 + ynew[6] ** 2)
                for c in range(3, 7):
                    ynew[c] /= nq
                _project(ynew, ax, ay, az, j2_0, e2_0)
                y = ynew
                n_acc += 1
                fac = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
                if not last:
                    h = h_try * fac
            else:
                n_rej += 1
                h = h_try * max(0.2, 0.9 * err ** -0.2)
        out[i] = y
    return out, n_acc, n_rej
