"""Pure-Python plant integrator; reference twin of ``_kernel.pyx``.

Both implementations must perform the same floating-point operations in the
same order so that the two backends agree bit for bit on IEEE hardware.

Layout (see :mod:`vsps_ampc.plant` for the packer):

``gp``    H_tot, D, K_b, S_b, T_b, T_wc, f_c, h_static, eta_max, a_speed,
          a_gate, gate_peak, w0, w1, k
``sync``  rows of (K, T_gov, T_turb)
``units`` rows of (mode, scale, H, T_p, T_g, rate, T_w, f_p, G_min, P0,
          abort_lo, abort_hi); mode 0 = variable speed, 1 = synchronous
``x``     dw, pb, (g1, g2) per sync unit, (w_r, P_e, G, q) per unit
``u``     (P*, G*) per unit
"""

import math

NGP = 15
NUNIT = 12


def _rhs(x, u, d, gp, sync, units, dx, pm, hh):
    H_tot = gp[0]
    D = gp[1]
    K_b = gp[2]
    S_b = gp[3]
    T_b = gp[4]
    T_wc = gp[5]
    f_c = gp[6]
    h_s = gp[7]
    eta_max = gp[8]
    a_s = gp[9]
    a_g = gp[10]
    g_pk = gp[11]
    w0 = gp[12]
    w1 = gp[13]
    kk = gp[14]
    m = len(sync)
    n = len(units)
    base = 2 + 2 * m
    dw = x[0]
    wp = 1.0 + dw

    Q = 0.0
    for i in range(n):
        Q += x[base + 4 * i + 3]
    num = 0.0
    den = 0.0
    for i in range(n):
        up = units[i]
        q = x[base + 4 * i + 3]
        G = x[base + 4 * i + 2]
        h = (q / G) * (q / G)
        hh[i] = h
        r = h_s - f_c * Q * Q - up[7] * q * q - h
        dx[base + 4 * i + 3] = r
        num += r / up[6]
        den += 1.0 / up[6]
    dQ = num / (1.0 + T_wc * den)

    gen = 0.0
    for i in range(n):
        up = units[i]
        j = base + 4 * i
        wr = x[j]
        pe = x[j + 1]
        G = x[j + 2]
        h = hh[i]
        if up[0] != 0.0:
            wr = wp
        v = wr / math.sqrt(h) - (w0 + w1 * G)
        eta = eta_max - a_s * v * v - a_g * (G - g_pk) * (G - g_pk)
        p = kk * eta * G * math.pow(h, 1.5)
        pm[i] = p
        if up[0] == 0.0:
            dx[j] = (p - pe) / (2.0 * up[2] * wr)
            dx[j + 1] = (u[2 * i] - pe) / up[3]
            gen += up[1] * (pe - up[9])
        else:
            dx[j] = 0.0
            dx[j + 1] = 0.0
            gen += up[1] * (p - up[9])
        gs = u[2 * i + 1]
        if gs < up[8]:
            gs = up[8]
        if gs > 1.0:
            gs = 1.0
        rate = (gs - G) / up[4]
        if rate > up[5]:
            rate = up[5]
        elif rate < -up[5]:
            rate = -up[5]
        dx[j + 2] = rate
        dx[j + 3] = (dx[j + 3] - T_wc * dQ) / up[6]

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
        sp = sync[k]
        g1 = x[2 + 2 * k]
        g2 = x[2 + 2 * k + 1]
        dx[2 + 2 * k] = (-sp[0] * dw - g1) / sp[1]
        dx[2 + 2 * k + 1] = (g1 - g2) / sp[2]


def integrate(x, u, d, gp, sync, units, dt, nsteps, record_every, out, rec_start):
    """Advance ``x`` in place by ``nsteps`` RK4 steps of size ``dt``.

    Every ``record_every`` steps (counting from the first completed step) a row
    ``[x..., P_m..., h..., dw/dt]`` is written to ``out[rec_start + k]``.
    Returns ``(status, steps_done, rows_written, clamp_steps)`` where status 0
    is success and status 1 a rotor-speed abort.
    """
    nx = len(x)
    n = len(units)
    m = len(sync)
    base = 2 + 2 * m
    k1 = [0.0] * nx
    k2 = [0.0] * nx
    k3 = [0.0] * nx
    k4 = [0.0] * nx
    xt = [0.0] * nx
    pm = [0.0] * n
    hh = [0.0] * n
    xs = [float(v) for v in x]
    gp = [float(v) for v in gp]
    sync = [[float(v) for v in row] for row in sync]
    units = [[float(v) for v in row] for row in units]
    u = [float(v) for v in u]
    d = float(d)
    rows = 0
    clamp_steps = 0
    half = 0.5 * dt
    sixth = dt / 6.0
    for step in range(nsteps):
        _rhs(xs, u, d, gp, sync, units, k1, pm, hh)
        for i in range(nx):
            xt[i] = xs[i] + half * k1[i]
        _rhs(xt, u, d, gp, sync, units, k2, pm, hh)
        for i in range(nx):
            xt[i] = xs[i] + half * k2[i]
        _rhs(xt, u, d, gp, sync, units, k3, pm, hh)
        for i in range(nx):
            xt[i] = xs[i] + dt * k3[i]
        _rhs(xt, u, d, gp, sync, units, k4, pm, hh)
        limited = False
        for i in range(n):
            j = base + 4 * i + 2
            rate = units[i][5]
            if k1[j] == rate or k1[j] == -rate or k4[j] == rate or k4[j] == -rate:
                limited = True
        for i in range(nx):
            xs[i] = xs[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(n):
            j = base + 4 * i + 2
            if xs[j] > 1.0:
                xs[j] = 1.0
            elif xs[j] < 0.0:
                xs[j] = 0.0
        if limited:
            clamp_steps += 1
        for i in range(n):
            wr = xs[base + 4 * i]
            if units[i][0] == 0.0 and (wr < units[i][10] or wr > units[i][11]):
                for k in range(nx):
                    x[k] = xs[k]
                return 1, step + 1, rows, clamp_steps
        if (step + 1) % record_every == 0:
            _rhs(xs, u, d, gp, sync, units, k1, pm, hh)
            row = out[rec_start + rows]
            for i in range(nx):
                row[i] = xs[i]
            for i in range(n):
                row[nx + i] = pm[i]
                row[nx + n + i] = hh[i]
            row[nx + 2 * n] = k1[0]
            rows += 1
    for k in range(nx):
        x[k] = xs[k]
    return 0, nsteps, rows, clamp_steps
