"""Pure-numpy implementations of the per-step kernels.

Same signatures and in-place conventions as ``_kernels_numba``; loops run over
MC steps in Python with walkers and walker pairs vectorized.
"""
import numpy as np

from .basis import HARM_COEF, HARM_POW, HARM_PTR

EXP_FLOOR = -700.0


def _damp(x):
    return np.where(x < EXP_FLOOR, 0.0, np.exp(np.maximum(x, EXP_FLOOR)))


def eval_basis(points, centers, harm, exps, coefs):
    d = points[:, None, :] - centers[None, :, :]
    r2 = np.einsum("pnk,pnk->pn", d, d)
    radial = np.einsum("pnk,nk->pn", np.exp(-r2[..., None] * exps[None]), coefs)
    ang = np.zeros_like(r2)
    for k in np.unique(harm):
        sel = harm == k
        dk = d[:, sel, :]
        acc = np.zeros(dk.shape[:2])
        for t in range(HARM_PTR[k], HARM_PTR[k + 1]):
            a, b, c = HARM_POW[t]
            acc += HARM_COEF[t] * dk[..., 0] ** a * dk[..., 1] ** b * dk[..., 2] ** c
        ang[:, sel] = acc
    return ang * radial


def eval_g(points, wcenters, wcoef, wexp):
    d = points[:, None, :] - wcenters[None, :, :]
    r2 = np.einsum("pkx,pkx->pk", d, d)
    return np.exp(-r2 * wexp) @ wcoef


def metropolis(pos, gv, r12, sigma, normals, uniforms, wcenters, wcoef, wexp, accepted):
    m = pos.shape[0]
    for n in range(normals.shape[0]):
        new = pos + sigma * normals[n]
        r12n = np.sqrt(((new[:, 0] - new[:, 1]) ** 2).sum(-1))
        gn = eval_g(new.reshape(-1, 3), wcenters, wcoef, wexp).reshape(m, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (gn[:, 0] * gn[:, 1] * r12) / (gv[:, 0] * gv[:, 1] * r12n)
        acc = (r12n > 0.0) & (uniforms[n] < ratio)
        pos[acc] = new[acc]
        gv[acc] = gn[acc]
        r12[acc] = r12n[acc]
        accepted += acc


def _pairs(m):
    p, q = np.triu_indices(m, 1)
    return p, q


def step_estimate(pos, gv, tau, comp_ptr, centers, harm, exps, coefs, cre, cim,
                  energies, n_occ, pref_d, pref_x, ng, lam):
    m = pos.shape[0]
    nc = len(comp_ptr) - 1
    ns = len(energies)
    if n_occ == 0 or n_occ == ns:
        return 0.0, 0.0
    pts = pos.reshape(2 * m, 3)
    chi = eval_basis(pts, centers, harm, exps, coefs)
    phi = np.empty((2 * m, nc, ns), dtype=complex)
    for x in range(nc):
        a, b = comp_ptr[x], comp_ptr[x + 1]
        phi[:, x, :] = chi[:, a:b] @ cre[a:b] + 1j * (chi[:, a:b] @ cim[a:b])
    eo = _damp(energies[:n_occ] * tau)
    ev = _damp(-energies[n_occ:] * tau)
    po = phi[:, :, :n_occ].reshape(2 * m * nc, n_occ)
    pv = phi[:, :, n_occ:].reshape(2 * m * nc, ns - n_occ)
    # block [d, o] of shape (nc, nc)
    gocc = ((po * eo) @ po.conj().T).reshape(2 * m, nc, 2 * m, nc).transpose(0, 2, 1, 3)
    gvir = ((pv * ev) @ pv.conj().T).reshape(2 * m, nc, 2 * m, nc).transpose(0, 2, 1, 3)

    p, q = _pairs(m)
    i1, i2, i3, i4 = 2 * p, 2 * p + 1, 2 * q, 2 * q + 1

    def tr(a, b):
        return np.einsum("kxy,kyx->k", gocc[a, b], gvir[b, a])

    def tr4(a, b, c, d):
        return np.einsum("kxy,kyz,kzw,kwx->k", gocc[a, b], gvir[b, c], gocc[c, d], gvir[d, a])

    f_pq = pref_d * tr(i1, i3) * tr(i2, i4) + pref_x * tr4(i3, i1, i4, i2)
    f_qp = pref_d * tr(i3, i1) * tr(i4, i2) + pref_x * tr4(i1, i3, i2, i4)
    gprod = gv[p, 0] * gv[p, 1] * gv[q, 0] * gv[q, 1]
    total = (0.5 * (f_pq + f_qp) / gprod).sum()
    scale = ng * ng * np.exp(lam * tau) / lam / len(p)
    return total.real * scale, total.imag * scale


def production(pos, gv, r12, sigma, normals, uniforms, taus, wcenters, wcoef, wexp,
               comp_ptr, centers, harm, exps, coefs, cre, cim, energies, n_occ,
               pref_d, pref_x, ng, lam, accepted, out_re, out_im):
    for n in range(len(taus)):
        metropolis(pos, gv, r12, sigma, normals[n:n + 1], uniforms[n:n + 1],
                   wcenters, wcoef, wexp, accepted)
        out_re[n], out_im[n] = step_estimate(
            pos, gv, taus[n], comp_ptr, centers, harm, exps, coefs, cre, cim,
            energies, n_occ, pref_d, pref_x, ng, lam)
