"""Loop-style hot kernels, numba-compiled unless disabled.

Everything here is written against the nopython subset so the same source
runs jitted or as plain Python. Vectorized numpy twins live in
``_kernels_numpy``; ``cranopt.kernels`` picks the active set at import.

Conventions shared by both implementations:

- channel ``h`` and beamformer ``v`` are (m, k) complex128, column per user
- complex gradients are packed as g = dL/dRe + 1j * dL/dIm
- ``recover_forward`` status: -1 ok, >=0 failing Cholesky pivot index,
  -2 all-zero beamformer before scaling, -3 zero channel column
"""

import numpy as np

from ._accel import accelerated

_LN2 = 0.6931471805599453
_PIVOT_RTOL = 1e-12


@accelerated
def chol_factor(a):
    # A = L L^H for Hermitian positive definite A. Returns (L, pivot):
    # pivot -1 on success, else the index whose diagonal remainder fell
    # below 1e-12 * max(diag(A)) (or went nonpositive).
    m = a.shape[0]
    lower = np.zeros((m, m), np.complex128)
    maxdiag = 0.0
    for i in range(m):
        d = a[i, i].real
        if d > maxdiag:
            maxdiag = d
    thresh = _PIVOT_RTOL * maxdiag
    for j in range(m):
        s = a[j, j].real
        for t in range(j):
            s -= lower[j, t].real * lower[j, t].real + lower[j, t].imag * lower[j, t].imag
        if s <= 0.0 or s < thresh:
            return lower, j
        ljj = np.sqrt(s)
        lower[j, j] = ljj
        for i in range(j + 1, m):
            c = a[i, j]
            for t in range(j):
                c -= lower[i, t] * np.conj(lower[j, t])
            lower[i, j] = c / ljj
    return lower, -1


@accelerated
def chol_solve(lower, b):
    # Solve A x = b given A = L L^H (two triangular substitutions).
    m = lower.shape[0]
    y = np.zeros(m, np.complex128)
    for i in range(m):
        c = b[i]
        for t in range(i):
            c -= lower[i, t] * y[t]
        y[i] = c / lower[i, i].real
    x = np.zeros(m, np.complex128)
    for i in range(m - 1, -1, -1):
        c = y[i]
        for t in range(i + 1, m):
            c -= np.conj(lower[t, i]) * x[t]
        x[i] = c / lower[i, i].real
    return x


@accelerated
def build_system_matrix(h, lam, mu):
    # sum_l lam_l h_l h_l^H + diag(mu)
    m, k = h.shape
    a = np.zeros((m, m), np.complex128)
    for l in range(k):
        if lam[l] == 0.0:
            continue
        for i in range(m):
            w = lam[l] * h[i, l]
            for j in range(m):
                a[i, j] += w * np.conj(h[j, l])
    for i in range(m):
        a[i, i] += mu[i]
    return a


@accelerated
def rates_forward(h, v, omega):
    # Per-user rates log2(1 + sig/denom). amat[k, l] = h_k^H v_l; denom
    # holds 1 + quantization leakage + cross interference (no own signal).
    m, k = h.shape
    amat = np.zeros((k, k), np.complex128)
    for kk in range(k):
        for l in range(k):
            c = 0.0 + 0.0j
            for i in range(m):
                c += np.conj(h[i, kk]) * v[i, l]
            amat[kk, l] = c
    rates = np.zeros(k)
    denom = np.zeros(k)
    for kk in range(k):
        quant = 0.0
        for i in range(m):
            quant += omega[i] * (h[i, kk].real ** 2 + h[i, kk].imag ** 2)
        cross = 0.0
        for l in range(k):
            if l != kk:
                cross += amat[kk, l].real ** 2 + amat[kk, l].imag ** 2
        d = 1.0 + quant + cross
        denom[kk] = d
        sig = amat[kk, kk].real ** 2 + amat[kk, kk].imag ** 2
        rates[kk] = np.log2(1.0 + sig / d)
    return rates, amat, denom


@accelerated
def rates_backward(h, v, omega, amat, denom, gf):
    # Gradients of sum_k gf_k * rate_k w.r.t. v and omega.
    m, k = h.shape
    ga = np.zeros((k, k), np.complex128)
    gd = np.zeros(k)
    for kk in range(k):
        sig = amat[kk, kk].real ** 2 + amat[kk, kk].imag ** 2
        d = denom[kk]
        tot = d + sig
        gs = gf[kk] / (_LN2 * tot)
        gdk = -gf[kk] * sig / (_LN2 * d * tot)
        gd[kk] = gdk
        for l in range(k):
            if l == kk:
                ga[kk, l] = 2.0 * gs * amat[kk, l]
            else:
                ga[kk, l] = 2.0 * gdk * amat[kk, l]
    gv = np.zeros((m, k), np.complex128)
    for i in range(m):
        for l in range(k):
            c = 0.0 + 0.0j
            for kk in range(k):
                c += h[i, kk] * ga[kk, l]
            gv[i, l] = c
    gomega = np.zeros(m)
    for i in range(m):
        s = 0.0
        for kk in range(k):
            s += gd[kk] * (h[i, kk].real ** 2 + h[i, kk].imag ** 2)
        gomega[i] = s
    return gv, gomega


@accelerated
def scale_stats(v):
    # Per-AP transmit power rows and the argmax row (lowest index on ties).
    m, k = v.shape
    row_power = np.zeros(m)
    for i in range(m):
        s = 0.0
        for l in range(k):
            s += v[i, l].real ** 2 + v[i, l].imag ** 2
        row_power[i] = s
    istar = 0
    best = row_power[0]
    for i in range(1, m):
        if row_power[i] > best:
            best = row_power[i]
            istar = i
    return row_power, istar


@accelerated
def recover_forward(h, p, lam, mu, ptil, beta):
    # Direction solve, power assembly, max-AP scaling, quantization noise.
    # Returns (status, lower, ut, nrm, row_power, istar, s, v, omega); the
    # arrays double as the cache consumed by recover_backward.
    m, k = h.shape
    amat = build_system_matrix(h, lam, mu)
    lower, piv = chol_factor(amat)
    ut = np.zeros((m, k), np.complex128)
    nrm = np.zeros(k)
    v = np.zeros((m, k), np.complex128)
    omega = np.zeros(m)
    row_power = np.zeros(m)
    if piv >= 0:
        return piv, lower, ut, nrm, row_power, 0, 0.0, v, omega
    for l in range(k):
        x = chol_solve(lower, np.ascontiguousarray(h[:, l]))
        acc = 0.0
        for i in range(m):
            ut[i, l] = x[i]
            acc += x[i].real ** 2 + x[i].imag ** 2
        nrm[l] = np.sqrt(acc)
        if nrm[l] == 0.0:
            return -3, lower, ut, nrm, row_power, 0, 0.0, v, omega
    for l in range(k):
        c = np.sqrt(p[l]) / nrm[l]
        for i in range(m):
            v[i, l] = ut[i, l] * c
    row_power, istar = scale_stats(v)
    rstar = row_power[istar]
    if rstar <= 0.0:
        return -2, lower, ut, nrm, row_power, istar, 0.0, v, omega
    s = np.sqrt(ptil / rstar)
    for i in range(m):
        for l in range(k):
            v[i, l] *= s
    for i in range(m):
        acc = 0.0
        for l in range(k):
            acc += v[i, l].real ** 2 + v[i, l].imag ** 2
        omega[i] = acc / beta
    return -1, lower, ut, nrm, row_power, istar, s, v, omega


@accelerated
def recover_backward(h, p, beta, lower, ut, nrm, row_power, istar, s, v, gv_in, gomega):
    # Reverse mode through quantization noise, scaling, power assembly,
    # normalization and the system solve. Returns (gp, glam, gmu).
    m, k = h.shape
    gv = np.zeros((m, k), np.complex128)
    for i in range(m):
        go = 2.0 * gomega[i] / beta
        for l in range(k):
            gv[i, l] = gv_in[i, l] + go * v[i, l]
    # v = s * w with w the unscaled assembly; w recovered as v / s
    gs = 0.0
    for i in range(m):
        for l in range(k):
            w_il_re = v[i, l].real / s
            w_il_im = v[i, l].imag / s
            gs += gv[i, l].real * w_il_re + gv[i, l].imag * w_il_im
    gw = np.zeros((m, k), np.complex128)
    for i in range(m):
        for l in range(k):
            gw[i, l] = s * gv[i, l]
    gr = -gs * s / (2.0 * row_power[istar])
    for l in range(k):
        gw[istar, l] += (2.0 * gr / s) * v[istar, l]
    gp = np.zeros(k)
    glam = np.zeros(k)
    gmu = np.zeros(m)
    ga = np.zeros((m, m), np.complex128)
    gut = np.zeros(m, np.complex128)
    for l in range(k):
        inv_n = 1.0 / nrm[l]
        sp = np.sqrt(p[l])
        # gp_l = Re(gw_l^H u_l) / (2 sqrt(p_l)); u_l = ut_l / nrm_l
        acc_p = 0.0
        dot_re = 0.0  # Re(u_l^H gu_l) with gu = sp * gw
        for i in range(m):
            u_re = ut[i, l].real * inv_n
            u_im = ut[i, l].imag * inv_n
            acc_p += gw[i, l].real * u_re + gw[i, l].imag * u_im
            dot_re += u_re * sp * gw[i, l].real + u_im * sp * gw[i, l].imag
        if p[l] > 0.0:
            gp[l] = acc_p / (2.0 * sp)
        else:
            gp[l] = 0.0
        for i in range(m):
            u_il = ut[i, l] * inv_n
            gu_il = sp * gw[i, l]
            gut[i] = (gu_il - dot_re * u_il) * inv_n
        gb = chol_solve(lower, gut)
        for i in range(m):
            for j in range(m):
                ga[i, j] -= gb[i] * np.conj(ut[j, l])
    for l in range(k):
        c = 0.0 + 0.0j
        for i in range(m):
            row = 0.0 + 0.0j
            for j in range(m):
                row += ga[i, j] * h[j, l]
            c += np.conj(h[i, l]) * row
        glam[l] = c.real
    for i in range(m):
        gmu[i] = ga[i, i].real
    return gp, glam, gmu


@accelerated
def sumrate_only(h, v, beta):
    # Sum rate with the quantization noise tied to v (omega_i = row_i / beta).
    m, k = h.shape
    omega = np.zeros(m)
    for i in range(m):
        acc = 0.0
        for l in range(k):
            acc += v[i, l].real ** 2 + v[i, l].imag ** 2
        omega[i] = acc / beta
    rates, _, _ = rates_forward(h, v, omega)
    total = 0.0
    for kk in range(k):
        total += rates[kk]
    return total


@accelerated
def sumrate_with_grad(h, v, beta):
    # Objective and gradient for the omega-substituted sum rate.
    m, k = h.shape
    omega = np.zeros(m)
    for i in range(m):
        acc = 0.0
        for l in range(k):
            acc += v[i, l].real ** 2 + v[i, l].imag ** 2
        omega[i] = acc / beta
    rates, amat, denom = rates_forward(h, v, omega)
    gf = np.ones(k)
    gv, gomega = rates_backward(h, v, omega, amat, denom, gf)
    for i in range(m):
        go = 2.0 * gomega[i] / beta
        for l in range(k):
            gv[i, l] += go * v[i, l]
    total = 0.0
    for kk in range(k):
        total += rates[kk]
    return total, gv


@accelerated
def one_ring_channel_kernel(ap_xy, scat_xy, rho, d0, ring_radius, pathloss_exp, wavelength):
    # h[i, k] = (1/sqrt(n)) sum_n sqrt(beta_kni) e^{-j2pi(d_kni + r)/wl} e^{j rho_kn}
    # with beta_kni = 1 / (1 + ((d_kni + r)/d0)^eta), d the AP-scatterer distance.
    m = ap_xy.shape[0]
    k = scat_xy.shape[0]
    n = scat_xy.shape[1]
    h = np.zeros((m, k), np.complex128)
    inv_sqrt_n = 1.0 / np.sqrt(n)
    two_pi = 2.0 * np.pi
    for kk in range(k):
        for nn in range(n):
            cr = np.cos(rho[kk, nn])
            ci = np.sin(rho[kk, nn])
            for i in range(m):
                dx = scat_xy[kk, nn, 0] - ap_xy[i, 0]
                dy = scat_xy[kk, nn, 1] - ap_xy[i, 1]
                dist = np.sqrt(dx * dx + dy * dy) + ring_radius
                gain = 1.0 / (1.0 + (dist / d0) ** pathloss_exp)
                amp = np.sqrt(gain) * inv_sqrt_n
                ang = -two_pi * dist / wavelength
                ca = np.cos(ang)
                sa = np.sin(ang)
                h[i, kk] += complex(amp * (ca * cr - sa * ci), amp * (sa * cr + ca * ci))
    return h


@accelerated
def bf_search(h, beta, ptil, amp_levels, phase_levels):
    # Exhaustive search over per-entry amplitude/phase grids. Entry
    # ordering is column-major by user (entry e -> column e // m, row
    # e % m); entry 0's phase is pinned to zero (global phase freedom).
    # Every nonzero candidate is max-AP power scaled before scoring.
    m, k = h.shape
    e = m * k
    na = amp_levels.shape[1]
    nph = phase_levels.shape[1]
    n_amp = 1
    for _ in range(e):
        n_amp *= na
    n_ph = 1
    for _ in range(e - 1):
        n_ph *= nph
    best_f = -1.0
    best_amp = np.zeros(e)
    best_ph = np.zeros(e)
    amps = np.zeros(e)
    phs = np.zeros(e)
    v = np.zeros((m, k), np.complex128)
    for ta in range(n_amp):
        rem = ta
        allzero = True
        for ee in range(e):
            amps[ee] = amp_levels[ee, rem % na]
            rem //= na
            if amps[ee] != 0.0:
                allzero = False
        if allzero:
            continue
        for tp in range(n_ph):
            remp = tp
            phs[0] = 0.0
            for ee in range(1, e):
                phs[ee] = phase_levels[ee - 1, remp % nph]
                remp //= nph
            for ee in range(e):
                l = ee // m
                i = ee - l * m
                v[i, l] = amps[ee] * complex(np.cos(phs[ee]), np.sin(phs[ee]))
            row_power, istar = scale_stats(v)
            s = np.sqrt(ptil / row_power[istar])
            for i in range(m):
                for l in range(k):
                    v[i, l] *= s
            f = sumrate_only(h, v, beta)
            if f > best_f:
                best_f = f
                for ee in range(e):
                    best_amp[ee] = amps[ee]
                    best_ph[ee] = phs[ee]
    return best_f, best_amp, best_ph
