"""Deterministic reference path for desk-scale systems.

Closed-form integrals over s-type Gaussians, a damped closed-shell SCF used to
generate fixtures, the O(n^5) four-index transformation to spinor integrals
and the conventional MP2 sum over occupied and virtual spinors.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .basis import HARM_COEF, BasisFunction
from .model import Molecule, SpinorSet

log = logging.getLogger(__name__)

_BOYS_SWITCH = 1e-3
_BOYS_TERMS = 10


def boys_f0(t):
    """F0(t) = int_0^1 exp(-t u^2) du, for scalar or array ``t >= 0``."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("Boys function argument must be non-negative")
    small = arr < _BOYS_SWITCH
    out = np.empty_like(arr)
    ts = arr[small]
    series = np.zeros_like(ts)
    term = np.ones_like(ts)
    for k in range(_BOYS_TERMS):
        series += term / (2 * k + 1)
        term = term * (-ts) / (k + 1)
    out[small] = series
    tl = arr[~small]
    sq = np.sqrt(tl)
    out[~small] = 0.5 * np.sqrt(np.pi) * special.erf(sq) / sq
    return out if out.ndim else float(out)


def _s_primitives(f: BasisFunction):
    if f.l != 0:
        raise ValueError(f"unsupported angular momentum l={f.l}: oracle integrals are s-only")
    return np.array(f.center), np.array(f.exponents), f.scaled_coefficients * HARM_COEF[0]


def _flatten_s(basis):
    owner, centers, zetas, coefs = [], [], [], []
    for i, f in enumerate(basis):
        c, z, w = _s_primitives(f)
        owner.extend([i] * len(z))
        centers.extend([c] * len(z))
        zetas.extend(z)
        coefs.extend(w)
    n = len(basis)
    proj = np.zeros((len(owner), n))
    proj[np.arange(len(owner)), owner] = coefs
    return np.array(centers).reshape(-1, 3), np.array(zetas), proj


def _gaussian_product(ca, za, cb, zb):
    p = za[:, None] + zb[None, :]
    mu = za[:, None] * zb[None, :] / p
    ab2 = ((ca[:, None, :] - cb[None, :, :]) ** 2).sum(-1)
    P = (za[:, None, None] * ca[:, None, :] + zb[None, :, None] * cb[None, :, :]) / p[..., None]
    return p, mu, ab2, P


def one_electron_s(basis, molecule: Molecule):
    """Overlap, kinetic and nuclear-attraction matrices over s functions."""
    c, z, proj = _flatten_s(basis)
    p, mu, ab2, P = _gaussian_product(c, z, c, z)
    k = np.exp(-mu * ab2)
    s = (np.pi / p) ** 1.5 * k
    t = mu * (3 - 2 * mu * ab2) * s
    v = np.zeros_like(s)
    for q, rc in zip(molecule.charges, molecule.positions):
        pc2 = ((P - rc) ** 2).sum(-1)
        v -= q * 2 * np.pi / p * k * boys_f0(p * pc2)
    return tuple(proj.T @ m @ proj for m in (s, t, v))


def _eri_prim(c1, z1, c2, z2):
    """Primitive (ab|cd) between two primitive sets (bra pairs x ket pairs)."""
    p, mu, ab2, P = _gaussian_product(c1, z1, c1, z1)
    q, nu, cd2, Q = _gaussian_product(c2, z2, c2, z2)
    pq = p[:, :, None, None] + q[None, None, :, :]
    alpha = p[:, :, None, None] * q[None, None] / pq
    r2 = ((P[:, :, None, None, :] - Q[None, None, :, :, :]) ** 2).sum(-1)
    pre = 2 * np.pi ** 2.5 / (p[:, :, None, None] * q[None, None] * np.sqrt(pq))
    return (pre * np.exp(-mu * ab2)[:, :, None, None] * np.exp(-nu * cd2)[None, None]
            * boys_f0(alpha * r2))


def eri_ssss(a: BasisFunction, b: BasisFunction, c: BasisFunction, d: BasisFunction) -> float:
    """(ab|cd) in chemists' notation for contracted s functions."""
    ca, za, wa = _s_primitives(a)
    cb, zb, wb = _s_primitives(b)
    cc, zc, wc = _s_primitives(c)
    cd, zd, wd = _s_primitives(d)
    p = za[:, None] + zb[None, :]
    mu = za[:, None] * zb[None, :] / p
    P = (za[:, None, None] * ca + zb[None, :, None] * cb) / p[..., None]
    q = zc[:, None] + zd[None, :]
    nu = zc[:, None] * zd[None, :] / q
    Q = (zc[:, None, None] * cc + zd[None, :, None] * cd) / q[..., None]
    pq = p[:, :, None, None] + q[None, None]
    r2 = ((P[:, :, None, None] - Q[None, None]) ** 2).sum(-1)
    val = (2 * np.pi ** 2.5 / (p[:, :, None, None] * q[None, None] * np.sqrt(pq))
           * np.exp(-mu * ((ca - cb) ** 2).sum())[:, :, None, None]
           * np.exp(-nu * ((cc - cd) ** 2).sum())[None, None]
           * boys_f0(p[:, :, None, None] * q[None, None] / pq * r2))
    w = wa[:, None, None, None] * wb[None, :, None, None] * wc[None, None, :, None] * wd
    return float((val * w).sum())


def eri_tensor_s(bra_basis, ket_basis=None) -> np.ndarray:
    """Dense (mu nu|kappa lambda) over s functions; bra/ket lists may differ."""
    ket_basis = bra_basis if ket_basis is None else ket_basis
    c1, z1, p1 = _flatten_s(bra_basis)
    c2, z2, p2 = _flatten_s(ket_basis)
    prim = _eri_prim(c1, z1, c2, z2)
    return np.einsum("abcd,ai,bj,ck,dl->ijkl", prim, p1, p1, p2, p2, optimize=True)


@dataclass(frozen=True)
class EriTensor:
    """AO integrals per component-channel pair: blocks[(x, y)] has shape
    (n_x, n_x, n_y, n_y)."""
    blocks: dict

    @classmethod
    def for_spinors(cls, spinors: SpinorSet) -> "EriTensor":
        cache = {}
        blocks = {}
        for x, bx in enumerate(spinors.basis):
            for y, by in enumerate(spinors.basis):
                key = (bx, by)
                if key not in cache:
                    cache[key] = eri_tensor_s(bx, by)
                blocks[(x, y)] = cache[key]
        return cls(blocks)


@dataclass(frozen=True)
class MoIntegralSet:
    """(ia|jb) over occupied x virtual x occupied x virtual spinors."""
    ovov: np.ndarray

    @property
    def n_occ(self) -> int:
        return self.ovov.shape[0]

    @property
    def n_vir(self) -> int:
        return self.ovov.shape[1]


def transform_eri(eri: EriTensor, spinors: SpinorSet) -> MoIntegralSet:
    """Four quarter transformations per channel pair, bra coefficients conjugated."""
    off = spinors.offsets
    occ, vir = spinors.block("occ"), spinors.block("vir")
    out = np.zeros((spinors.n_occ, spinors.n_vir, spinors.n_occ, spinors.n_vir), dtype=complex)
    for (x, y), block in eri.blocks.items():
        cx = spinors.coefficients[off[x]:off[x + 1]]
        cy = spinors.coefficients[off[y]:off[y + 1]]
        nx, ny = len(cx), len(cy)
        if block.shape != (nx, nx, ny, ny):
            raise ValueError(f"ERI block {(x, y)} has shape {block.shape}, "
                             f"expected {(nx, nx, ny, ny)}")
        t = np.tensordot(cx[:, occ].conj(), block, axes=(0, 0))   # i nu kappa lambda
        t = np.tensordot(t, cx[:, vir], axes=(1, 0))              # i kappa lambda a
        t = np.tensordot(t, cy[:, occ].conj(), axes=(1, 0))       # i lambda a j
        t = np.tensordot(t, cy[:, vir], axes=(1, 0))              # i a j b
        out += t
    return MoIntegralSet(out)


def deterministic_mp2(mo: MoIntegralSet, energies, spin_factor: int = 1) -> float:
    """E2 = 1/2 sum (ia|jb)[s^2 (ai|bj) - s (bi|aj)] / (e_i + e_j - e_a - e_b).

    ``spin_factor`` s is 1 for spin-orbital spinors and 2 for closed-shell
    spatial orbitals, where it reproduces the familiar 2J - K form.
    """
    energies = np.asarray(energies, dtype=float)
    no, nv = mo.n_occ, mo.n_vir
    if no == 0 or nv == 0:
        return 0.0
    eo, ev = energies[:no], energies[no:no + nv]
    denom = (eo[:, None, None, None] + eo[None, None, :, None]
             - ev[None, :, None, None] - ev[None, None, None, :])
    if np.any(np.abs(denom) < 1e-12):
        raise ValueError("vanishing MP2 energy denominator")
    g = mo.ovov
    direct = g * g.conj()
    exchange = g * g.transpose(0, 3, 2, 1).conj()
    e2 = 0.5 * ((spin_factor ** 2 * direct - spin_factor * exchange) / denom).sum()
    if abs(e2.imag) > 1e-10:
        log.warning("discarding imaginary MP2 residue %.3e", e2.imag)
    return float(e2.real)


def mp2_energy(spinors: SpinorSet) -> float:
    """Oracle E2 for an s-only spinor set."""
    mo = transform_eri(EriTensor.for_spinors(spinors), spinors)
    return deterministic_mp2(mo, spinors.energies, spinors.spin_factor)


@dataclass(frozen=True)
class ScfResult:
    spinors: SpinorSet
    energy: float
    n_iter: int


class ScfError(RuntimeError):
    pass


def rhf_scf(molecule: Molecule, basis, n_electrons: int | None = None, guess: str = "core",
            seed: int = 0, max_iter: int = 500, damping: float = 0.5,
            tol: float = 1e-10) -> ScfResult:
    """Closed-shell SCF over an s-type basis with simple density damping."""
    basis = list(basis)
    nel = int(round(molecule.charges.sum())) if n_electrons is None else n_electrons
    if nel <= 0:
        raise ScfError("no electrons to bind")
    if nel % 2:
        raise ScfError(f"open-shell electron count {nel} is not supported")
    nocc = nel // 2
    nbf = len(basis)
    if nocc > nbf:
        raise ScfError(f"{nocc} doubly occupied orbitals exceed {nbf} basis functions")
    s, t, v = one_electron_s(basis, molecule)
    h = t + v
    eri = eri_tensor_s(basis)
    enuc = molecule.nuclear_repulsion()

    def density(c):
        return 2.0 * c[:, :nocc] @ c[:, :nocc].T

    if guess == "core":
        _, c = linalg.eigh(h, s)
    elif guess == "random":
        rng = np.random.default_rng(seed)
        c = rng.standard_normal((nbf, nbf))
        # orthonormalize in the S metric
        c = c @ np.linalg.inv(np.linalg.cholesky(c.T @ s @ c)).T
    else:
        raise ValueError(f"unknown guess {guess!r}")
    dm = density(c)
    for it in range(1, max_iter + 1):
        fock = h + np.einsum("ls,mnls->mn", dm, eri) - 0.5 * np.einsum("ls,mlns->mn", dm, eri)
        eps, c = linalg.eigh(fock, s)
        new = (1 - damping) * density(c) + damping * dm
        change = np.abs(new - dm).max()
        dm = new
        if change < tol:
            break
    else:
        raise ScfError(f"SCF did not converge in {max_iter} iterations")
    # final undamped diagonalization at the converged density
    fock = h + np.einsum("ls,mnls->mn", dm, eri) - 0.5 * np.einsum("ls,mlns->mn", dm, eri)
    eps, c = linalg.eigh(fock, s)
    energy = 0.5 * np.sum(dm * (h + fock)) + enuc
    spinors = SpinorSet(1, [basis], c.astype(complex), eps, nocc, nbf - nocc, molecule)
    return ScfResult(spinors, float(energy), it)
