"""Contracted Gaussian basis functions with real solid-harmonic angular parts.

A basis function is

    chi(r) = S_lm(r - A) * sum_k K c_k N_k exp(-zeta_k |r - A|^2)

where S_lm is the regular real solid harmonic (r^l times the real spherical
harmonic, orthonormal on the unit sphere), N_k the radial normalization of
primitive k and K the factor that gives the contracted function unit norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

LMAX = 3

_SQPI = math.sqrt(math.pi)

# (coefficient, (a, b, c)) monomials x^a y^b z^c for r^l Y_lm, m = -l..l
_SOLID_HARMONICS: dict[tuple[int, int], list[tuple[float, tuple[int, int, int]]]] = {
    (0, 0): [(0.5 / _SQPI, (0, 0, 0))],
    (1, -1): [(math.sqrt(3 / (4 * math.pi)), (0, 1, 0))],
    (1, 0): [(math.sqrt(3 / (4 * math.pi)), (0, 0, 1))],
    (1, 1): [(math.sqrt(3 / (4 * math.pi)), (1, 0, 0))],
    (2, -2): [(0.5 * math.sqrt(15 / math.pi), (1, 1, 0))],
    (2, -1): [(0.5 * math.sqrt(15 / math.pi), (0, 1, 1))],
    (2, 0): [
        (0.5 * math.sqrt(5 / math.pi), (0, 0, 2)),
        (-0.25 * math.sqrt(5 / math.pi), (2, 0, 0)),
        (-0.25 * math.sqrt(5 / math.pi), (0, 2, 0)),
    ],
    (2, 1): [(0.5 * math.sqrt(15 / math.pi), (1, 0, 1))],
    (2, 2): [
        (0.25 * math.sqrt(15 / math.pi), (2, 0, 0)),
        (-0.25 * math.sqrt(15 / math.pi), (0, 2, 0)),
    ],
    (3, -3): [
        (0.75 * math.sqrt(35 / (2 * math.pi)), (2, 1, 0)),
        (-0.25 * math.sqrt(35 / (2 * math.pi)), (0, 3, 0)),
    ],
    (3, -2): [(0.5 * math.sqrt(105 / math.pi), (1, 1, 1))],
    (3, -1): [
        (math.sqrt(21 / (2 * math.pi)), (0, 1, 2)),
        (-0.25 * math.sqrt(21 / (2 * math.pi)), (2, 1, 0)),
        (-0.25 * math.sqrt(21 / (2 * math.pi)), (0, 3, 0)),
    ],
    (3, 0): [
        (0.5 * math.sqrt(7 / math.pi), (0, 0, 3)),
        (-0.75 * math.sqrt(7 / math.pi), (2, 0, 1)),
        (-0.75 * math.sqrt(7 / math.pi), (0, 2, 1)),
    ],
    (3, 1): [
        (math.sqrt(21 / (2 * math.pi)), (1, 0, 2)),
        (-0.25 * math.sqrt(21 / (2 * math.pi)), (3, 0, 0)),
        (-0.25 * math.sqrt(21 / (2 * math.pi)), (1, 2, 0)),
    ],
    (3, 2): [
        (0.25 * math.sqrt(105 / math.pi), (2, 0, 1)),
        (-0.25 * math.sqrt(105 / math.pi), (0, 2, 1)),
    ],
    (3, 3): [
        (0.25 * math.sqrt(35 / (2 * math.pi)), (3, 0, 0)),
        (-0.75 * math.sqrt(35 / (2 * math.pi)), (1, 2, 0)),
    ],
}


def harmonic_index(l: int, m: int) -> int:
    return l * l + l + m


def _harmonic_tables():
    ptr = [0]
    coef = []
    powers = []
    for l in range(LMAX + 1):
        for m in range(-l, l + 1):
            for c, p in _SOLID_HARMONICS[(l, m)]:
                coef.append(c)
                powers.append(p)
            ptr.append(len(coef))
    return (np.array(ptr, dtype=np.int64), np.array(coef),
            np.array(powers, dtype=np.int64))


# flat tables shared by both kernel backends
HARM_PTR, HARM_COEF, HARM_POW = _harmonic_tables()


def radial_norm(zeta: float, l: int) -> float:
    """N_zeta such that N^2 * int r^(2l+2) exp(-2 zeta r^2) dr = 1."""
    return math.sqrt(2.0 * (2.0 * zeta) ** (l + 1.5) / math.gamma(l + 1.5))


@dataclass(frozen=True)
class BasisFunction:
    center: tuple[float, float, float]
    l: int
    m: int
    exponents: tuple[float, ...]
    coefficients: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "exponents", tuple(float(x) for x in self.exponents))
        object.__setattr__(self, "coefficients",
                           tuple(float(x) for x in self.coefficients))
        if len(self.center) != 3 or not all(math.isfinite(x) for x in self.center):
            raise ValueError(f"basis center must be a finite 3-vector, got {self.center}")
        if not 0 <= self.l <= LMAX:
            raise ValueError(f"angular momentum l={self.l} outside [0, {LMAX}]")
        if not -self.l <= self.m <= self.l:
            raise ValueError(f"m={self.m} invalid for l={self.l}")
        if not self.exponents:
            raise ValueError("basis function needs at least one primitive")
        if len(self.exponents) != len(self.coefficients):
            raise ValueError("exponent and coefficient counts differ")
        if any(not (z > 0 and math.isfinite(z)) for z in self.exponents):
            raise ValueError(f"exponents must be positive, got {self.exponents}")

    @property
    def nprim(self) -> int:
        return len(self.exponents)

    @cached_property
    def primitive_norms(self) -> np.ndarray:
        return np.array([radial_norm(z, self.l) for z in self.exponents])

    @cached_property
    def contraction_norm(self) -> float:
        z = np.array(self.exponents)
        cn = np.array(self.coefficients) * self.primitive_norms
        lp = self.l + 1.5
        s = 0.5 * math.gamma(lp) * (cn[:, None] * cn[None, :]
                                     / (z[:, None] + z[None, :]) ** lp)
        total = s.sum()
        if total <= 0:
            raise ValueError("contracted function has zero norm")
        return 1.0 / math.sqrt(total)

    @cached_property
    def scaled_coefficients(self) -> np.ndarray:
        """Coefficients multiplying exp(-zeta r^2) * S_lm, norms folded in."""
        return self.contraction_norm * np.array(self.coefficients) * self.primitive_norms

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = points - np.array(self.center)
        r2 = np.einsum("ij,ij->i", d, d)
        radial = np.exp(-np.outer(r2, self.exponents)) @ self.scaled_coefficients
        ang = np.zeros(len(points))
        for c, (a, b, e) in _SOLID_HARMONICS[(self.l, self.m)]:
            ang += c * d[:, 0] ** a * d[:, 1] ** b * d[:, 2] ** e
        return ang * radial


@dataclass(frozen=True)
class BasisArrays:
    """Flat, kernel-friendly layout of a list of basis functions.

    Primitive lists are zero padded to ``maxprim``; a zero coefficient makes a
    padded slot contribute nothing.
    """
    centers: np.ndarray     # (n, 3)
    harmonic: np.ndarray    # (n,) index into HARM_PTR
    exponents: np.ndarray   # (n, maxprim)
    coefficients: np.ndarray  # (n, maxprim)

    @property
    def size(self) -> int:
        return len(self.centers)


def flatten_basis(functions) -> BasisArrays:
    functions = list(functions)
    n = len(functions)
    maxprim = max((f.nprim for f in functions), default=1)
    centers = np.zeros((n, 3))
    harm = np.zeros(n, dtype=np.int64)
    exps = np.ones((n, maxprim))
    coefs = np.zeros((n, maxprim))
    for i, f in enumerate(functions):
        centers[i] = f.center
        harm[i] = harmonic_index(f.l, f.m)
        exps[i, :f.nprim] = f.exponents
        coefs[i, :f.nprim] = f.scaled_coefficients
    return BasisArrays(centers, harm, exps, coefs)


def _cartesian_records(functions):
    """Expand contracted solid-harmonic functions into Cartesian primitives."""
    parent, center, zeta, coef, powers = [], [], [], [], []
    for i, f in enumerate(functions):
        for c_ang, p in _SOLID_HARMONICS[(f.l, f.m)]:
            for z, c in zip(f.exponents, f.scaled_coefficients):
                parent.append(i)
                center.append(f.center)
                zeta.append(z)
                coef.append(c_ang * c)
                powers.append(p)
    return (np.array(parent, dtype=np.int64), np.array(center, dtype=float).reshape(-1, 3),
            np.array(zeta), np.array(coef), np.array(powers, dtype=np.int64).reshape(-1, 3))


# exact for polynomial degree <= 11, i.e. l_a + l_b <= 6 per dimension
_GH_T, _GH_W = np.polynomial.hermite.hermgauss(6)


def overlap_matrix(bra, ket=None, chunk: int = 256) -> np.ndarray:
    """<chi_mu|chi_nu> for arbitrary centers and l <= 3.

    Each Cartesian primitive pair is a Gaussian product exp(-p (x - P)^2)
    times a polynomial, integrated exactly by Gauss-Hermite quadrature.
    """
    bra = list(bra)
    ket = bra if ket is None else list(ket)
    pa, ca, za, cfa, wa = _cartesian_records(bra)
    pb, cb, zb, cfb, wb = _cartesian_records(ket)
    out = np.zeros((len(bra), len(ket)))
    for s in range(0, len(pa), chunk):
        sl = slice(s, s + chunk)
        a, b = za[sl, None], zb[None, :]
        p = a + b
        mu = a * b / p
        A, B = ca[sl, None, :], cb[None, :, :]
        ab2 = ((A - B) ** 2).sum(-1)
        P = (a[..., None] * A + b[..., None] * B) / p[..., None]
        sp = np.sqrt(p)
        val = np.exp(-mu * ab2) / sp ** 3
        for d in range(3):
            x = P[..., d, None] + _GH_T / sp[..., None]
            poly = ((x - A[..., d, None]) ** wa[sl, None, d, None]
                    * (x - B[..., d, None]) ** wb[None, :, d, None])
            val = val * (poly @ _GH_W)
        val *= cfa[sl, None] * cfb[None, :]
        rows = np.zeros((val.shape[0], len(ket)))
        np.add.at(rows.T, pb, val.T)
        np.add.at(out, pa[sl], rows)
    return out
