# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled plant integrator; see ``_kernel_py.py`` for the layout contract."""

from libc.math cimport sqrt, pow

import numpy as np


cdef void _rhs(double[::1] x, double[::1] u, double d, double[::1] gp,
               double[:, ::1] sync, double[:, ::1] units,
               double[::1] dx, double[::1] pm, double[::1] hh) noexcept nogil:
    cdef double H_tot = gp[0], D = gp[1], K_b = gp[2], S_b = gp[3], T_b = gp[4]
    cdef double T_wc = gp[5], f_c = gp[6], h_s = gp[7]
    cdef double eta_max = gp[8], a_s = gp[9], a_g = gp[10], g_pk = gp[11]
    cdef double w0 = gp[12], w1 = gp[13], kk = gp[14]
    cdef Py_ssize_t m = sync.shape[0], n = units.shape[0]
    cdef Py_ssize_t base = 2 + 2 * m
    cdef Py_ssize_t i, j, k
    cdef double dw = x[0], wp = 1.0 + dw
    cdef double Q = 0.0, num = 0.0, den = 0.0, dQ, q, G, h, r
    cdef double gen = 0.0, wr, pe, v, eta, p, gs, rate, pb, target, g1, g2

    for i in range(n):
        Q += x[base + 4 * i + 3]
    for i in range(n):
        q = x[base + 4 * i + 3]
        G = x[base + 4 * i + 2]
        h = (q / G) * (q / G)
        hh[i] = h
        r = h_s - f_c * Q * Q - units[i, 7] * q * q - h
        dx[base + 4 * i + 3] = r
        num += r / units[i, 6]
        den += 1.0 / units[i, 6]
    dQ = num / (1.0 + T_wc * den)

    for i in range(n):
        j = base + 4 * i
        wr = x[j]
        pe = x[j + 1]
        G = x[j + 2]
        h = hh[i]
        if units[i, 0] != 0.0:
            wr = wp
        v = wr / sqrt(h) - (w0 + w1 * G)
        eta = eta_max - a_s * v * v - a_g * (G - g_pk) * (G - g_pk)
        p = kk * eta * G * pow(h, 1.5)
        pm[i] = p
        if units[i, 0] == 0.0:
            dx[j] = (p - pe) / (2.0 * units[i, 2] * wr)
            dx[j + 1] = (u[2 * i] - pe) / units[i, 3]
            gen += units[i, 1] * (pe - units[i, 9])
        else:
            dx[j] = 0.0
            dx[j + 1] = 0.0
            gen += units[i, 1] * (p - units[i, 9])
        gs = u[2 * i + 1]
        if gs < units[i, 8]:
            gs = units[i, 8]
        if gs > 1.0:
            gs = 1.0
        rate = (gs - G) / units[i, 4]
        if rate > units[i, 5]:
            rate = units[i, 5]
        elif rate < -units[i, 5]:
            rate = -units[i, 5]
        dx[j + 2] = rate
        dx[j + 3] = (dx[j + 3] - T_wc * dQ) / units[i, 6]

    pb = x[1]
    gen += pb
    for k in range(m):
        gen += x[2 + 2 * k + 1]
    dx[0] = (gen - d - D * dw) / (2.0 * H_tot)
    target = -K_b * dw
    if target > S_b:
        target = S_b
    elif target < -S_b:
        target = -S_b
    dx[1] = (target - pb) / T_b
    for k in range(m):
        g1 = x[2 + 2 * k]
        g2 = x[2 + 2 * k + 1]
        dx[2 + 2 * k] = (-sync[k, 0] * dw - g1) / sync[k, 1]
        dx[2 + 2 * k + 1] = (g1 - g2) / sync[k, 2]


def integrate(double[::1] x, u, double d, gp, sync, units, double dt,
              Py_ssize_t nsteps, Py_ssize_t record_every, double[:, ::1] out,
              Py_ssize_t rec_start):
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] gpv = np.ascontiguousarray(gp, dtype=np.float64)
    cdef double[:, ::1] sv = np.ascontiguousarray(np.asarray(sync, dtype=np.float64).reshape(-1, 3))
    cdef double[:, ::1] unv = np.ascontiguousarray(units, dtype=np.float64)
    cdef Py_ssize_t nx = x.shape[0], n = unv.shape[0], m = sv.shape[0]
    cdef Py_ssize_t base = 2 + 2 * m
    cdef double[::1] k1 = np.zeros(nx), k2 = np.zeros(nx), k3 = np.zeros(nx)
    cdef double[::1] k4 = np.zeros(nx), xt = np.zeros(nx)
    cdef double[::1] pm = np.zeros(max(n, 1)), hh = np.zeros(max(n, 1))
    cdef Py_ssize_t step, i, j, rows = 0, clamp_steps = 0
    cdef double half = 0.5 * dt, sixth = dt / 6.0, rate, wr
    cdef bint limited
    with nogil:
        for step in range(nsteps):
            _rhs(x, uv, d, gpv, sv, unv, k1, pm, hh)
            for i in range(nx):
                xt[i] = x[i] + half * k1[i]
            _rhs(xt, uv, d, gpv, sv, unv, k2, pm, hh)
            for i in range(nx):
                xt[i] = x[i] + half * k2[i]
            _rhs(xt, uv, d, gpv, sv, unv, k3, pm, hh)
            for i in range(nx):
                xt[i] = x[i] + dt * k3[i]
            _rhs(xt, uv, d, gpv, sv, unv, k4, pm, hh)
            limited = False
            for i in range(n):
                j = base + 4 * i + 2
                rate = unv[i, 5]
                if k1[j] == rate or k1[j] == -rate or k4[j] == rate or k4[j] == -rate:
                    limited = True
            for i in range(nx):
                x[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n):
                j = base + 4 * i + 2
                if x[j] > 1.0:
                    x[j] = 1.0
                elif x[j] < 0.0:
                    x[j] = 0.0
            if limited:
                clamp_steps += 1
            for i in range(n):
                wr = x[base + 4 * i]
                if unv[i, 0] == 0.0 and (wr < unv[i, 10] or wr > unv[i, 11]):
                    with gil:
                        return 1, step + 1, rows, clamp_steps
            if (step + 1) % record_every == 0:
                _rhs(x, uv, d, gpv, sv, unv, k1, pm, hh)
                for i in range(nx):
                    out[rec_start + rows, i] = x[i]
                for i in range(n):
                    out[rec_start + rows, nx + i] = pm[i]
                    out[rec_start + rows, nx + n + i] = hh[i]
                out[rec_start + rows, nx + 2 * n] = k1[0]
                rows += 1
    return 0, nsteps, rows, clamp_steps
