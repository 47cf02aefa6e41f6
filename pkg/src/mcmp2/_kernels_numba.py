"""numba-compiled per-step kernels (see ``_kernels_numpy`` for the reference path)."""
import math

import numpy as np
from numba import njit

from .basis import HARM_COEF, HARM_POW, HARM_PTR

EXP_FLOOR = -700.0


@njit(cache=True)
def _harmonic(k, x, y, z):
    v = 0.0
    for t in range(HARM_PTR[k], HARM_PTR[k + 1]):
        v += HARM_COEF[t] * x ** HARM_POW[t, 0] * y ** HARM_POW[t, 1] * z ** HARM_POW[t, 2]
    return v


@njit(cache=True)
def _eval_basis_into(points, centers, harm, exps, coefs, out, col0):
    for p in range(points.shape[0]):
        for n in range(centers.shape[0]):
            x = points[p, 0] - centers[n, 0]
            y = points[p, 1] - centers[n, 1]
            z = points[p, 2] - centers[n, 2]
            r2 = x * x + y * y + z * z
            rad = 0.0
            for k in range(exps.shape[1]):
                c = coefs[n, k]
                if c != 0.0:
                    rad += c * math.exp(-exps[n, k] * r2)
            out[p, col0 + n] = rad * _harmonic(harm[n], x, y, z)


@njit(cache=True)
def eval_basis(points, centers, harm, exps, coefs):
    out = np.empty((points.shape[0], centers.shape[0]))
    _eval_basis_into(points, centers, harm, exps, coefs, out, 0)
    return out


@njit(cache=True)
def _g_point(x, y, z, wcenters, wcoef, wexp):
    g = 0.0
    for k in range(wcenters.shape[0]):
        dx = x - wcenters[k, 0]
        dy = y - wcenters[k, 1]
        dz = z - wcenters[k, 2]
        g += wcoef[k] * math.exp(-wexp[k] * (dx * dx + dy * dy + dz * dz))
    return g


@njit(cache=True)
def eval_g(points, wcenters, wcoef, wexp):
    out = np.empty(points.shape[0])
    for p in range(points.shape[0]):
        out[p] = _g_point(points[p, 0], points[p, 1], points[p, 2], wcenters, wcoef, wexp)
    return out


@njit(cache=True)
def _move(pos, gv, r12, sigma, normals, uniforms, wcenters, wcoef, wexp, accepted):
    new = np.empty((2, 3))
    for w in range(pos.shape[0]):
        for e in range(2):
            for k in range(3):
                new[e, k] = pos[w, e, k] + sigma * normals[w, e, k]
        d2 = 0.0
        for k in range(3):
            d2 += (new[0, k] - new[1, k]) ** 2
        r12n = math.sqrt(d2)
        if r12n == 0.0:
            continue
        g1 = _g_point(new[0, 0], new[0, 1], new[0, 2], wcenters, wcoef, wexp)
        g2 = _g_point(new[1, 0], new[1, 1], new[1, 2], wcenters, wcoef, wexp)
        ratio = (g1 * g2 * r12[w]) / (gv[w, 0] * gv[w, 1] * r12n)
        if uniforms[w] < ratio:
            for e in range(2):
                for k in range(3):
                    pos[w, e, k] = new[e, k]
            gv[w, 0] = g1
            gv[w, 1] = g2
            r12[w] = r12n
            accepted[w] += 1


@njit(cache=True)
def metropolis(pos, gv, r12, sigma, normals, uniforms, wcenters, wcoef, wexp, accepted):
    for n in range(normals.shape[0]):
        _move(pos, gv, r12, sigma, normals[n], uniforms[n], wcenters, wcoef, wexp, accepted)


@njit(cache=True)
def _trace2(gocc, gvir, a, b, nc):
    # sum_xy O(a,b)[x,y] V(b,a)[y,x]
    t = 0j
    for x in range(nc):
        for y in range(nc):
            t += gocc[a * nc + x, b * nc + y] * gvir[b * nc + y, a * nc + x]
    return t


@njit(cache=True)
def _trace4(gocc, gvir, a, b, c, d, nc, m1, m2):
    # tr[O(a,b) V(b,c) O(c,d) V(d,a)]
    for x in range(nc):
        for z in range(nc):
            s1 = 0j
            s2 = 0j
            for y in range(nc):
                s1 += gocc[a * nc + x, b * nc + y] * gvir[b * nc + y, c * nc + z]
                s2 += gocc[c * nc + x, d * nc + y] * gvir[d * nc + y, a * nc + z]
            m1[x, z] = s1
            m2[x, z] = s2
    t = 0j
    for x in range(nc):
        for z in range(nc):
            t += m1[x, z] * m2[z, x]
    return t


@njit(cache=True)
def step_estimate(pos, gv, tau, comp_ptr, centers, harm, exps, coefs, cre, cim,
                  energies, n_occ, pref_d, pref_x, ng, lam):
    m = pos.shape[0]
    npt = 2 * m
    nc = comp_ptr.shape[0] - 1
    ns = energies.shape[0]
    nv = ns - n_occ
    if n_occ == 0 or nv == 0:
        return 0.0, 0.0
    pts = pos.reshape(npt, 3)
    chi = np.empty((npt, centers.shape[0]))
    _eval_basis_into(pts, centers, harm, exps, coefs, chi, 0)

    lo = np.empty((npt * nc, n_occ), dtype=np.complex128)
    ro = np.empty((n_occ, npt * nc), dtype=np.complex128)
    lv = np.empty((npt * nc, nv), dtype=np.complex128)
    rv = np.empty((nv, npt * nc), dtype=np.complex128)
    eo = np.empty(n_occ)
    ev = np.empty(nv)
    for i in range(n_occ):
        ex = energies[i] * tau
        eo[i] = math.exp(ex) if ex >= EXP_FLOOR else 0.0
    for a in range(nv):
        ex = -energies[n_occ + a] * tau
        ev[a] = math.exp(ex) if ex >= EXP_FLOOR else 0.0
    for x in range(nc):
        c0, c1 = comp_ptr[x], comp_ptr[x + 1]
        chix = np.ascontiguousarray(chi[:, c0:c1])
        pre = np.dot(chix, cre[c0:c1])
        pim = np.dot(chix, cim[c0:c1])
        for p in range(npt):
            row = p * nc + x
            for i in range(n_occ):
                v = complex(pre[p, i], pim[p, i])
                lo[row, i] = v * eo[i]
                ro[i, row] = v.conjugate()
            for a in range(nv):
                v = complex(pre[p, n_occ + a], pim[p, n_occ + a])
                lv[row, a] = v * ev[a]
                rv[a, row] = v.conjugate()
    gocc = np.dot(lo, ro)
    gvir = np.dot(lv, rv)

    m1 = np.empty((nc, nc), dtype=np.complex128)
    m2 = np.empty((nc, nc), dtype=np.complex128)
    total = 0j
    for p in range(m):
        i1 = 2 * p
        i2 = 2 * p + 1
        for q in range(p + 1, m):
            i3 = 2 * q
            i4 = 2 * q + 1
            f_pq = (pref_d * _trace2(gocc, gvir, i1, i3, nc) * _trace2(gocc, gvir, i2, i4, nc)
                    + pref_x * _trace4(gocc, gvir, i3, i1, i4, i2, nc, m1, m2))
            f_qp = (pref_d * _trace2(gocc, gvir, i3, i1, nc) * _trace2(gocc, gvir, i4, i2, nc)
                    + pref_x * _trace4(gocc, gvir, i1, i3, i2, i4, nc, m1, m2))
            total += 0.5 * (f_pq + f_qp) / (gv[p, 0] * gv[p, 1] * gv[q, 0] * gv[q, 1])
    scale = ng * ng * math.exp(lam * tau) / lam / (m * (m - 1) // 2)
    return total.real * scale, total.imag * scale


@njit(cache=True)
def production(pos, gv, r12, sigma, normals, uniforms, taus, wcenters, wcoef, wexp,
               comp_ptr, centers, harm, exps, coefs, cre, cim, energies, n_occ,
               pref_d, pref_x, ng, lam, accepted, out_re, out_im):
    for n in range(taus.shape[0]):
        _move(pos, gv, r12, sigma, normals[n], uniforms[n], wcenters, wcoef, wexp, accepted)
        re, im = step_estimate(pos, gv, taus[n], comp_ptr, centers, harm, exps, coefs,
                               cre, cim, energies, n_occ, pref_d, pref_x, ng, lam)
        out_re[n] = re
        out_im[n] = im
