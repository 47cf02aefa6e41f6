"""Desk-scale reference systems with exactly computable MP2 energies."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import linalg

from .basis import BasisFunction, overlap_matrix
from .model import Molecule, SpinorSet, save_spinor_set
from .oracle import mp2_energy, rhf_scf

STO3G_COEF = (0.15432897, 0.53532814, 0.44463454)
STO3G_H = (3.42525091, 0.62391373, 0.16885540)
STO3G_HE = (6.36242139, 1.15892300, 0.31364979)
# 6-31G helium: contracted core plus one uncontracted valence function
HE_631G_CORE = ((38.421634, 5.778030, 1.241774), (0.023766, 0.154679, 0.469630))
HE_631G_VALENCE = 0.297964

H2_BOND = 1.4


def h2_molecule(bond: float = H2_BOND) -> Molecule:
    return Molecule([1.0, 1.0], [[0, 0, -bond / 2], [0, 0, bond / 2]])


def h2_spinors(bond: float = H2_BOND) -> SpinorSet:
    """Closed-shell H2 in a minimal basis of two contracted s functions."""
    mol = h2_molecule(bond)
    basis = [BasisFunction(r, 0, 0, STO3G_H, STO3G_COEF) for r in mol.positions]
    return rhf_scf(mol, basis).spinors


def he_spinors() -> SpinorSet:
    """Helium in a split-valence pair of s functions (one occupied, one virtual)."""
    mol = Molecule([2.0], [[0.0, 0.0, 0.0]])
    basis = [BasisFunction((0, 0, 0), 0, 0, *HE_631G_CORE),
             BasisFunction((0, 0, 0), 0, 0, (HE_631G_VALENCE,), (1.0,))]
    return rhf_scf(mol, basis).spinors


def synthetic_4c_spinors(n_occ: int = 2, n_vir: int = 6, seed: int = 2022,
                         bond: float = H2_BOND) -> SpinorSet:
    """Four-component spinors with random complex coefficients.

    Every channel uses the same four s functions on an H2 frame; the columns
    are S^(-1/2) U for a random unitary U, so they are orthonormal in the
    block metric. Energies are fabricated with a fixed gap; no kinetic balance.
    """
    mol = h2_molecule(bond)
    ao = [BasisFunction(r, 0, 0, (z,), (1.0,)) for r in mol.positions for z in (1.1, 0.32)]
    nrow = 4 * len(ao)
    if n_occ + n_vir > nrow:
        raise ValueError(f"at most {nrow} spinors fit in the synthetic basis")
    s_half = linalg.fractional_matrix_power(overlap_matrix(ao), -0.5).real
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((nrow, nrow)) + 1j * rng.standard_normal((nrow, nrow))
    u, r = np.linalg.qr(z)
    u = u * (np.diag(r) / np.abs(np.diag(r)))
    coeff = np.kron(np.eye(4), s_half) @ u[:, :n_occ + n_vir]
    e_occ = -0.65 + 0.1 * np.arange(n_occ)
    e_vir = 0.25 + 0.15 * np.arange(n_vir)
    return SpinorSet(4, [ao] * 4, coeff, np.concatenate([e_occ, e_vir]), n_occ, n_vir, mol)


def spin_orbital_spinors(spatial: SpinorSet) -> SpinorSet:
    """Two-component (alpha, beta) spin orbitals from closed-shell spatial orbitals."""
    if spatial.n_comp != 1:
        raise ValueError("expected a one-component set")
    c = spatial.coefficients
    nb, n = c.shape
    cols, energies = [], []
    for k in range(n):
        for spin in range(2):
            col = np.zeros(2 * nb, dtype=complex)
            col[spin * nb:(spin + 1) * nb] = c[:, k]
            cols.append(col)
            energies.append(spatial.energies[k])
    return SpinorSet(2, [spatial.basis[0]] * 2, np.array(cols).T, energies,
                     2 * spatial.n_occ, 2 * spatial.n_vir, spatial.molecule)


FIXTURES = {
    "h2_sto3g": h2_spinors,
    "he": he_spinors,
    "synth4c": synthetic_4c_spinors,
}

# Pair weights matched to the fixture bases. The default H parameters suit a
# larger basis with diffuse functions; on these minimal bases they leave most
# walkers far from the nuclei and the per-step variance grows by ~10^2.
FIXTURE_WEIGHTS = {
    "h2_sto3g": {"H": ((0.5, 0.6), (0.5, 2.0))},
    "he": {"He": ((0.5, 1.0), (0.5, 4.0))},
    "synth4c": {"H": ((0.3, 0.4), (0.7, 3.0))},
}


def write_fixture(name: str, directory=".") -> tuple[Path, float]:
    """Write ``<name>.spinor``, a ``<name>.e2`` sidecar with the oracle E2 and a
    ``<name>.cfg`` config holding the fixture's weight parameters."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}")
    spinors = FIXTURES[name]()
    e2 = mp2_energy(spinors)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / f"{name}.spinor"
    save_spinor_set(spinors, path)
    (d / f"{name}.e2").write_text(f"{e2:.12e}\n")
    (d / f"{name}.cfg").write_text(fixture_config(name))
    return path, e2


def fixture_config(name: str) -> str:
    lines = [f"weight {el} " + " ".join(f"{x!r}" for pair in prims for x in pair)
             for el, prims in sorted(FIXTURE_WEIGHTS[name].items())]
    return "\n".join(lines) + "\n"


def read_sidecar(spinor_path) -> float:
    return float(Path(spinor_path).with_suffix(".e2").read_text().split()[0])


def hydrogen_chain_spinors(n: int, spacing: float = 1.4, zeta: float = 1.0,
                           occ_fraction: float = 0.25, seed: int = 0) -> SpinorSet:
    """One-component set of ``n`` orbitals over ``n`` s functions on a hydrogen chain.

    Orbitals are Loewdin-orthogonalized AOs mixed by a random orthogonal
    matrix; energies are fabricated. Used for cost-scaling measurements.
    """
    mol = Molecule(np.ones(n), np.column_stack([np.zeros(n), np.zeros(n),
                                                spacing * np.arange(n)]))
    ao = [BasisFunction(r, 0, 0, (zeta,), (1.0,)) for r in mol.positions]
    w, v = np.linalg.eigh(overlap_matrix(ao))
    s_half = (v / np.sqrt(w)) @ v.T
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    n_occ = max(1, int(round(occ_fraction * n)))
    energies = np.concatenate([-1.0 + 0.5 * np.arange(n_occ) / n_occ,
                               0.2 + np.arange(n - n_occ) / n])
    return SpinorSet(1, [ao], s_half @ q, energies, n_occ, n - n_occ, mol)
