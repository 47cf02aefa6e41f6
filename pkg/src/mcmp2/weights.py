"""Importance-sampling weights for electron pairs and imaginary time.

The pair weight is g(r1) g(r2) / (N_g r12) with g a sum of normalized s
Gaussians on every nucleus; N_g is the Coulomb self-repulsion of g and has a
closed form. Imaginary time is drawn from lambda exp(-lambda tau).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import Molecule, SpinorSet
from .oracle import boys_f0

# per element: ((c1, zeta1), (c2, zeta2))
DEFAULT_WEIGHTS = {
    "H": ((0.25, 0.06), (0.15, 0.6)),
    "O": ((0.8, 0.2), (1.0, 0.4)),
    "Cu": ((0.8, 0.35), (2.0, 0.6)),
    "Ag": ((0.1, 0.1), (0.8, 0.6)),
    "Au": ((0.05, 0.6), (4.0, 0.8)),
}


class WeightConfigError(ValueError):
    pass


def s_norm(zeta):
    """Normalization of exp(-zeta r^2)."""
    return (2.0 * np.asarray(zeta) / np.pi) ** 0.75


@dataclass(frozen=True, eq=False)
class WeightSpec:
    molecule: Molecule
    params: dict
    centers: np.ndarray      # (nprim, 3)
    coefficients: np.ndarray  # c_k N_zeta_k
    exponents: np.ndarray
    norm: float              # N_g

    @classmethod
    def build(cls, molecule: Molecule, overrides: dict | None = None) -> "WeightSpec":
        params = dict(DEFAULT_WEIGHTS)
        for el, prims in (overrides or {}).items():
            prims = tuple((float(c), float(z)) for c, z in prims)
            if not prims or any(c <= 0 or z <= 0 for c, z in prims):
                raise WeightConfigError(f"weight parameters for {el} must be positive pairs")
            params[el] = prims
        centers, coefs, exps = [], [], []
        for sym, pos in zip(molecule.symbols, molecule.positions):
            if sym not in params:
                raise WeightConfigError(
                    f"no weight parameters for element {sym}; add a 'weight {sym} c1 zeta1 "
                    f"c2 zeta2' line")
            for c, z in params[sym]:
                centers.append(pos)
                coefs.append(c * s_norm(z))
                exps.append(z)
        centers = np.array(centers)
        coefs = np.array(coefs)
        exps = np.array(exps)
        used = {s: params[s] for s in molecule.symbols}
        return cls(molecule, used, centers, coefs, exps, coulomb_self_energy(centers, coefs, exps))

    def scaled(self, factor: float) -> "WeightSpec":
        """Same weight with every contraction coefficient multiplied by ``factor``."""
        coefs = self.coefficients * factor
        return WeightSpec(self.molecule, self.params, self.centers, coefs, self.exponents,
                          coulomb_self_energy(self.centers, coefs, self.exponents))


def coulomb_self_energy(centers, coefs, exps) -> float:
    """int int g(r1) g(r2) / r12 over all primitive pairs.

    For exp(-a|r-A|^2) and exp(-b|r-B|^2) the integral is
    2 pi^(5/2) / (a b sqrt(a + b)) F0(a b / (a + b) |A - B|^2).
    """
    a = exps[:, None]
    b = exps[None, :]
    d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    val = 2 * np.pi ** 2.5 / (a * b * np.sqrt(a + b)) * boys_f0(a * b / (a + b) * d2)
    return float(coefs @ val @ coefs)


def normalization_Ng(spec: WeightSpec) -> float:
    return spec.norm


def g_value(spec: WeightSpec, points) -> np.ndarray | float:
    pts = np.asarray(points, dtype=float)
    flat = np.ascontiguousarray(np.atleast_2d(pts))
    g = kernels.eval_g(flat, spec.centers, spec.coefficients, spec.exponents)
    return float(g[0]) if pts.ndim == 1 else g


def pair_weight_factor(spec: WeightSpec, r1, r2) -> float:
    """The singularity-free part g(r1) g(r2) / N_g of the pair weight."""
    return g_value(spec, r1) * g_value(spec, r2) / spec.norm


def pair_weight_ratio(spec: WeightSpec, r1, r2) -> tuple[float, float]:
    """(g(r1) g(r2) / N_g, r12): the full weight is the first divided by the second.

    Keeping r12 separate lets the estimator cancel 1/r12 analytically.
    """
    r12 = float(np.linalg.norm(np.asarray(r1, float) - np.asarray(r2, float)))
    return pair_weight_factor(spec, r1, r2), r12


def pair_weight(spec: WeightSpec, r1, r2) -> float:
    """Full normalized weight g(r1) g(r2) / (N_g r12); +inf at coincidence."""
    r12 = float(np.linalg.norm(np.asarray(r1, float) - np.asarray(r2, float)))
    f = pair_weight_factor(spec, r1, r2)
    return math.inf if r12 == 0.0 else f / r12


@dataclass(frozen=True)
class TauSampler:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"tau exponent must be positive, got {self.lam}")

    def density(self, tau):
        return self.lam * np.exp(-self.lam * np.asarray(tau))


def sample_tau(sampler: TauSampler, u):
    """Inverse CDF of lambda exp(-lambda tau) at uniform ``u`` in [0, 1)."""
    return -np.log1p(-np.asarray(u)) / sampler.lam


def lambda_from_energies(e_occ, e_vir) -> float:
    """lambda = 2 (e_LUMO - e_HOMO) from occupied and virtual energies."""
    if len(e_occ) == 0 or len(e_vir) == 0:
        raise WeightConfigError("tau weight needs both occupied and virtual spinors")
    homo, lumo = float(np.max(e_occ)), float(np.min(e_vir))
    if not lumo > homo:
        raise WeightConfigError(f"non-positive HOMO-LUMO gap (HOMO {homo!r}, LUMO {lumo!r})")
    return 2.0 * (lumo - homo)


def lambda_from_gap(spinors: SpinorSet) -> float:
    return lambda_from_energies(spinors.energies[:spinors.n_occ],
                                spinors.energies[spinors.n_occ:])


__all__ = [
    "DEFAULT_WEIGHTS", "WeightSpec", "WeightConfigError", "TauSampler", "g_value",
    "normalization_Ng", "pair_weight", "pair_weight_factor", "pair_weight_ratio", "sample_tau",
    "lambda_from_gap", "lambda_from_energies",
]
