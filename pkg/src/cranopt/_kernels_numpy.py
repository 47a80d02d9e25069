"""Vectorized pure-numpy twins of the loop kernels.

Same signatures and return conventions as ``_kernels_loops``; used when
``CRANOPT_DISABLE_NUMBA=1`` and directly by the kernel benchmark. The
Cholesky routines are shared with the loop module because the failing-pivot
contract lives there; general LAPACK solves are only used after that
contract has been checked.
"""

import numpy as np

from ._kernels_loops import chol_factor, chol_solve

_LN2 = 0.6931471805599453

__all__ = [
    "chol_factor",
    "chol_solve",
    "build_system_matrix",
    "rates_forward",
    "rates_backward",
    "scale_stats",
    "recover_forward",
    "recover_backward",
    "sumrate_only",
    "sumrate_with_grad",
    "one_ring_channel_kernel",
    "bf_search",
]


def build_system_matrix(h, lam, mu):
    a = (h * lam[None, :]) @ h.conj().T
    a[np.arange(h.shape[0]), np.arange(h.shape[0])] += mu
    return a


def rates_forward(h, v, omega):
    amat = h.conj().T @ v
    sig = np.abs(np.diagonal(amat)) ** 2
    quant = omega @ (np.abs(h) ** 2)
    denom = 1.0 + quant + (np.abs(amat) ** 2).sum(axis=1) - sig
    rates = np.log2(1.0 + sig / denom)
    return rates, amat, denom


def rates_backward(h, v, omega, amat, denom, gf):
    sig = np.abs(np.diagonal(amat)) ** 2
    tot = denom + sig
    gs = gf / (_LN2 * tot)
    gd = -gf * sig / (_LN2 * denom * tot)
    ga = 2.0 * gd[:, None] * amat
    idx = np.arange(amat.shape[0])
    ga[idx, idx] = 2.0 * gs * np.diagonal(amat)
    gv = h @ ga
    gomega = (np.abs(h) ** 2) @ gd
    return gv, gomega


def scale_stats(v):
    row_power = (np.abs(v) ** 2).sum(axis=1)
    return row_power, int(np.argmax(row_power))


def recover_forward(h, p, lam, mu, ptil, beta):
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
    ut = np.linalg.solve(amat, h)
    nrm = np.linalg.norm(ut, axis=0)
    if np.any(nrm == 0.0):
        return -3, lower, ut, nrm, row_power, 0, 0.0, v, omega
    v = ut * (np.sqrt(p) / nrm)[None, :]
    row_power, istar = scale_stats(v)
    rstar = row_power[istar]
    if rstar <= 0.0:
        return -2, lower, ut, nrm, row_power, istar, 0.0, v, omega
    s = float(np.sqrt(ptil / rstar))
    v = s * v
    omega = (np.abs(v) ** 2).sum(axis=1) / beta
    return -1, lower, ut, nrm, row_power, istar, s, v, omega


def recover_backward(h, p, beta, lower, ut, nrm, row_power, istar, s, v, gv_in, gomega):
    gv = gv_in + (2.0 / beta) * gomega[:, None] * v
    w = v / s
    gs = float(np.sum(gv.real * w.real + gv.imag * w.imag))
    gw = s * gv
    gr = -gs * s / (2.0 * row_power[istar])
    gw[istar, :] += 2.0 * gr * w[istar, :]
    sp = np.sqrt(p)
    u = ut / nrm[None, :]
    acc_p = (gw.real * u.real + gw.imag * u.imag).sum(axis=0)
    gp = np.where(p > 0.0, acc_p / (2.0 * np.where(sp > 0.0, sp, 1.0)), 0.0)
    gu = sp[None, :] * gw
    dot_re = (u.real * gu.real + u.imag * gu.imag).sum(axis=0)
    gut = (gu - dot_re[None, :] * u) / nrm[None, :]
    gb = np.linalg.solve(lower.conj().T, np.linalg.solve(lower, gut))
    ga = -(gb @ ut.conj().T)
    glam = np.real(np.einsum("il,ij,jl->l", h.conj(), ga, h))
    gmu = np.real(np.diagonal(ga)).copy()
    return gp, glam, gmu


def sumrate_only(h, v, beta):
    omega = (np.abs(v) ** 2).sum(axis=1) / beta
    rates, _, _ = rates_forward(h, v, omega)
    return float(rates.sum())


def sumrate_with_grad(h, v, beta):
    omega = (np.abs(v) ** 2).sum(axis=1) / beta
    rates, amat, denom = rates_forward(h, v, omega)
    gf = np.ones(h.shape[1])
    gv, gomega = rates_backward(h, v, omega, amat, denom, gf)
    gv = gv + (2.0 / beta) * gomega[:, None] * v
    return float(rates.sum()), gv


def one_ring_channel_kernel(ap_xy, scat_xy, rho, d0, ring_radius, pathloss_exp, wavelength):
    diff = scat_xy[:, :, None, :] - ap_xy[None, None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1)) + ring_radius  # (k, n, m)
    gain = 1.0 / (1.0 + (dist / d0) ** pathloss_exp)
    paths = np.sqrt(gain) * np.exp(-2j * np.pi * dist / wavelength)
    paths = paths * np.exp(1j * rho)[:, :, None]
    return np.ascontiguousarray(paths.sum(axis=1).T) / np.sqrt(scat_xy.shape[1])


def _score_candidates(h, beta, ptil, vc):
    # vc: (t, m, k) already nonzero rows filtered
    rp = (np.abs(vc) ** 2).sum(axis=2)
    s = np.sqrt(ptil / rp.max(axis=1))
    vc = vc * s[:, None, None]
    omega = (np.abs(vc) ** 2).sum(axis=2) / beta
    a = np.einsum("ik,til->tkl", h.conj(), vc)
    sig = np.abs(np.einsum("tkk->tk", a)) ** 2
    quant = omega @ (np.abs(h) ** 2)
    den = 1.0 + quant + (np.abs(a) ** 2).sum(axis=2) - sig
    return np.log2(1.0 + sig / den).sum(axis=1)


def bf_search(h, beta, ptil, amp_levels, phase_levels):
    m, k = h.shape
    e = m * k
    na = amp_levels.shape[1]
    nph = phase_levels.shape[1]
    n_amp = na**e
    n_ph = nph ** (e - 1) if e > 1 else 1
    total = n_amp * n_ph
    best_f = -1.0
    best_amp = np.zeros(e)
    best_ph = np.zeros(e)
    chunk = 1 << 16
    radices_amp = [na] * e
    radices_ph = [nph] * (e - 1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        ta = idx // n_ph
        tp = idx - ta * n_ph
        amps = np.empty((idx.size, e))
        rem = ta
        for ee, r in enumerate(radices_amp):
            amps[:, ee] = amp_levels[ee, rem % r]
            rem = rem // r
        phs = np.zeros((idx.size, e))
        remp = tp
        for ee, r in enumerate(radices_ph):
            phs[:, ee + 1] = phase_levels[ee, remp % r]
            remp = remp // r
        keep = (amps != 0.0).any(axis=1)
        if not keep.any():
            continue
        amps_k = amps[keep]
        phs_k = phs[keep]
        entries = amps_k * np.exp(1j * phs_k)
        vc = entries.reshape(-1, k, m).transpose(0, 2, 1)
        f = _score_candidates(h, beta, ptil, vc)
        j = int(np.argmax(f))
        if f[j] > best_f:
            best_f = float(f[j])
            best_amp = amps_k[j].copy()
            best_ph = phs_k[j].copy()
    return best_f, best_amp, best_ph
