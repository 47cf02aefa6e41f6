"""Molecules, spinor references and the SPINOR-TEXT file format."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisArrays, BasisFunction, flatten_basis, overlap_matrix

SPEED_OF_LIGHT = 137.035999084
ANGSTROM = 1.0 / 0.529177210903

ELEMENTS = (
    "X H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co "
    "Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te "
    "I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir "
    "Pt Au Hg Tl Pb Bi Po At Rn"
).split()

ORTHONORMALITY_TOL = 1e-8


class SpinorFormatError(ValueError):
    pass


def element_symbol(charge: float) -> str:
    z = int(round(charge))
    if abs(charge - z) > 1e-12 or not 0 < z < len(ELEMENTS):
        raise ValueError(f"no element with nuclear charge {charge}")
    return ELEMENTS[z]


@dataclass(frozen=True, eq=False)
class Molecule:
    charges: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        q = np.array(self.charges, dtype=float).reshape(-1)
        r = np.array(self.positions, dtype=float).reshape(-1, 3)
        if len(q) == 0:
            raise ValueError("molecule needs at least one nucleus")
        if len(q) != len(r):
            raise ValueError("charge and position counts differ")
        if not np.all(q > 0):
            raise ValueError(f"nuclear charges must be positive, got {q}")
        if not np.all(np.isfinite(r)):
            raise ValueError("nuclear positions must be finite")
        q.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "charges", q)
        object.__setattr__(self, "positions", r)

    @classmethod
    def from_atoms(cls, atoms, unit: str = "bohr") -> "Molecule":
        """``atoms`` is a sequence of (symbol, (x, y, z))."""
        scale = {"bohr": 1.0, "angstrom": ANGSTROM}[unit]
        q = [float(ELEMENTS.index(sym)) for sym, _ in atoms]
        r = [np.asarray(pos, dtype=float) * scale for _, pos in atoms]
        return cls(np.array(q), np.array(r))

    @property
    def natom(self) -> int:
        return len(self.charges)

    @property
    def symbols(self) -> list[str]:
        return [element_symbol(q) for q in self.charges]

    def nuclear_repulsion(self) -> float:
        e = 0.0
        for i in range(self.natom):
            for j in range(i):
                e += self.charges[i] * self.charges[j] / np.linalg.norm(
                    self.positions[i] - self.positions[j])
        return e

    def __eq__(self, other):
        return (isinstance(other, Molecule)
                and np.array_equal(self.charges, other.charges)
                and np.array_equal(self.positions, other.positions))


@dataclass(frozen=True, eq=False)
class SpinorSet:
    """Reference spinors expanded in per-component Gaussian basis lists.

    ``coefficients`` stacks the component blocks vertically: rows
    ``offsets[x]:offsets[x+1]`` hold the expansion of component ``x`` in
    ``basis[x]``. Columns are spinors, occupied first. For ``n_comp == 1`` the
    columns are closed-shell spatial orbitals, each holding two electrons.
    """
    n_comp: int
    basis: tuple
    coefficients: np.ndarray
    energies: np.ndarray
    n_occ: int
    n_vir: int
    molecule: Molecule | None = None
    _arrays: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n_comp not in (1, 2, 4):
            raise ValueError(f"n_comp must be 1, 2 or 4, got {self.n_comp}")
        basis = tuple(tuple(b) for b in self.basis)
        if len(basis) != self.n_comp:
            raise ValueError(f"{self.n_comp} components but {len(basis)} basis lists")
        object.__setattr__(self, "basis", basis)
        c = np.array(self.coefficients, dtype=complex)
        e = np.array(self.energies, dtype=float).reshape(-1)
        nrow = sum(len(b) for b in basis)
        if c.ndim != 2 or c.shape[0] != nrow:
            raise ValueError(f"coefficient matrix needs {nrow} rows, got shape {c.shape}")
        if self.n_occ < 0 or self.n_vir < 0 or self.n_occ + self.n_vir != c.shape[1]:
            raise ValueError(f"n_occ + n_vir = {self.n_occ + self.n_vir} but "
                             f"{c.shape[1]} spinor columns")
        if len(e) != c.shape[1]:
            raise ValueError(f"{len(e)} energies for {c.shape[1]} spinors")
        if not np.all(np.isfinite(e)) or not np.all(np.isfinite(c)):
            raise ValueError("non-finite energies or coefficients")
        eo, ev = e[:self.n_occ], e[self.n_occ:]
        if np.any(np.diff(eo) < 0) or np.any(np.diff(ev) < 0):
            raise ValueError("energies must be ascending within occupied and virtual blocks")
        if len(eo) and len(ev) and eo.max() >= ev.min():
            raise ValueError(f"occupied/virtual energy overlap: max occupied {eo.max()!r}"
                             f" >= min virtual {ev.min()!r}")
        if np.any(e <= -SPEED_OF_LIGHT ** 2):
            raise ValueError("negative-energy (positronic) spinors are not accepted")
        c.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "energies", e)

    @property
    def n_spinor(self) -> int:
        return self.n_occ + self.n_vir

    @property
    def offsets(self) -> np.ndarray:
        return np.cumsum([0] + [len(b) for b in self.basis])

    @property
    def spin_factor(self) -> int:
        """Electrons per spinor column: 2 for spatial orbitals, else 1."""
        return 2 if self.n_comp == 1 else 1

    @property
    def basis_arrays(self) -> list[BasisArrays]:
        if self._arrays is None:
            object.__setattr__(self, "_arrays", [flatten_basis(b) for b in self.basis])
        return self._arrays

    def block(self, which: str) -> slice:
        if which in ("occupied", "occ"):
            return slice(0, self.n_occ)
        if which in ("virtual", "vir"):
            return slice(self.n_occ, self.n_spinor)
        raise ValueError(f"unknown block {which!r}")

    def overlap(self) -> np.ndarray:
        """Block-diagonal component metric S."""
        off = self.offsets
        s = np.zeros((off[-1], off[-1]))
        for x, b in enumerate(self.basis):
            s[off[x]:off[x + 1], off[x]:off[x + 1]] = overlap_matrix(b)
        return s

    def orthonormality_error(self) -> float:
        c = self.coefficients
        m = c.conj().T @ self.overlap() @ c
        return float(np.abs(m - np.eye(len(m))).max()) if len(m) else 0.0

    def check_orthonormal(self, tol: float = ORTHONORMALITY_TOL) -> None:
        err = self.orthonormality_error()
        if not err < tol:
            raise ValueError(f"spinors are not orthonormal: max |C^H S C - 1| = {err:.6g}")

    def __eq__(self, other):
        return (isinstance(other, SpinorSet) and self.n_comp == other.n_comp
                and self.basis == other.basis and self.n_occ == other.n_occ
                and self.n_vir == other.n_vir
                and np.array_equal(self.coefficients, other.coefficients)
                and np.array_equal(self.energies, other.energies)
                and self.molecule == other.molecule)


def evaluate_basis(arrays: BasisArrays, points) -> np.ndarray:
    from . import kernels
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    return kernels.eval_basis(pts, arrays.centers, arrays.harmonic,
                              arrays.exponents, arrays.coefficients)


def evaluate_spinors(spinors: SpinorSet, point, block: str = "occupied") -> np.ndarray:
    """Spinor values phi^x_p(point) as an (n_comp, block size) complex matrix.

    Basis functions are evaluated once per component channel and contracted
    against every column of the requested block.
    """
    point = np.asarray(point, dtype=float).reshape(3)
    if not np.all(np.isfinite(point)):
        raise ValueError("evaluation point must be finite")
    sl = spinors.block(block)
    off = spinors.offsets
    out = np.empty((spinors.n_comp, sl.stop - sl.start), dtype=complex)
    for x, arr in enumerate(spinors.basis_arrays):
        chi = evaluate_basis(arr, point[None, :])[0]
        out[x] = chi @ spinors.coefficients[off[x]:off[x + 1], sl]
    return out


# --- SPINOR-TEXT ---------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.16e}"


def format_spinor_set(s: SpinorSet) -> str:
    lines = ["spinor-text 1", f"ncomp {s.n_comp}"]
    if s.molecule is not None:
        lines.append(f"nuclei {s.molecule.natom}")
        for q, r in zip(s.molecule.charges, s.molecule.positions):
            lines.append(" ".join(_fmt(v) for v in (q, *r)))
    for x, funcs in enumerate(s.basis):
        lines.append(f"basis {x} {len(funcs)}")
        for f in funcs:
            prims = " ".join(f"{_fmt(z)} {_fmt(c)}" for z, c in zip(f.exponents, f.coefficients))
            lines.append(f"center {' '.join(_fmt(v) for v in f.center)} ; "
                         f"{f.l} {f.m} ; {f.nprim} ; {prims}")
    lines.append(f"energies {s.n_occ} {s.n_vir}")
    lines.extend(_fmt(e) for e in s.energies)
    rows, cols = s.coefficients.shape
    lines.append(f"coeff {rows} {cols}")
    for c in s.coefficients.reshape(-1):
        lines.append(f"{_fmt(c.real)} {_fmt(c.imag)}")
    return "\n".join(lines) + "\n"


def save_spinor_set(s: SpinorSet, path) -> None:
    Path(path).write_text(format_spinor_set(s))


class _Lines:
    def __init__(self, text: str):
        self.items = []
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                self.items.append((no, line))
        self.pos = 0

    def next(self, what: str) -> tuple[int, str]:
        if self.pos >= len(self.items):
            raise SpinorFormatError(f"unexpected end of file, expected {what}")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def peek(self) -> str | None:
        return self.items[self.pos][1] if self.pos < len(self.items) else None

    def header(self, keyword: str, nargs: int) -> list[int]:
        no, line = self.next(f"'{keyword}' header")
        tok = line.split()
        if tok[0] != keyword or len(tok) != nargs + 1:
            raise SpinorFormatError(f"line {no}: malformed header, expected "
                                    f"'{keyword}' with {nargs} arguments, got {line!r}")
        try:
            return [int(t) for t in tok[1:]]
        except ValueError:
            raise SpinorFormatError(f"line {no}: non-integer argument in {line!r}") from None


def _floats(no: int, tokens) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise SpinorFormatError(f"line {no}: bad number in {' '.join(tokens)!r}") from None


def _parse_basis_line(no: int, line: str) -> BasisFunction:
    parts = [p.split() for p in line.split(";")]
    if len(parts) != 4 or len(parts[0]) != 4 or parts[0][0] != "center" or len(parts[1]) != 2:
        raise SpinorFormatError(f"line {no}: malformed basis function {line!r}")
    center = _floats(no, parts[0][1:])
    try:
        l, m = int(parts[1][0]), int(parts[1][1])
        nprim = int(parts[2][0]) if len(parts[2]) == 1 else -1
    except ValueError:
        raise SpinorFormatError(f"line {no}: malformed basis function {line!r}") from None
    prims = _floats(no, parts[3])
    if nprim < 1 or len(prims) != 2 * nprim:
        raise SpinorFormatError(f"line {no}: dimension mismatch, nprim={nprim} but "
                                f"{len(prims)} numbers in primitive list")
    try:
        return BasisFunction(center, l, m, prims[0::2], prims[1::2])
    except ValueError as err:
        raise SpinorFormatError(f"line {no}: {err}") from None


def parse_spinor_set(text: str, check: bool = True) -> SpinorSet:
    lines = _Lines(text)
    no, line = lines.next("header")
    if line.split() != ["spinor-text", "1"]:
        raise SpinorFormatError(f"line {no}: malformed header {line!r}, expected 'spinor-text 1'")
    (ncomp,) = lines.header("ncomp", 1)
    molecule = None
    if (lines.peek() or "").startswith("nuclei"):
        (nnuc,) = lines.header("nuclei", 1)
        rows = []
        for _ in range(nnuc):
            no, line = lines.next("nucleus line")
            vals = _floats(no, line.split())
            if len(vals) != 4:
                raise SpinorFormatError(f"line {no}: nucleus needs 'Z x y z'")
            rows.append(vals)
        try:
            molecule = Molecule(np.array([r[0] for r in rows]), np.array([r[1:] for r in rows]))
        except ValueError as err:
            raise SpinorFormatError(str(err)) from None
    basis = []
    for x in range(ncomp):
        comp, count = lines.header("basis", 2)
        if comp != x:
            raise SpinorFormatError(f"basis block {comp} out of order, expected {x}")
        basis.append([_parse_basis_line(*lines.next("basis function")) for _ in range(count)])
    n_occ, n_vir = lines.header("energies", 2)
    energies = []
    while lines.peek() is not None and not lines.peek().startswith("coeff"):
        no, line = lines.next("energy")
        energies.extend(_floats(no, line.split()))
    rows, cols = lines.header("coeff", 2)
    nrow = sum(len(b) for b in basis)
    if rows != nrow or cols != n_occ + n_vir or len(energies) != cols:
        raise SpinorFormatError(
            f"dimension mismatch: coeff {rows}x{cols}, basis rows {nrow}, "
            f"n_occ + n_vir = {n_occ + n_vir}, {len(energies)} energies")
    tokens = []
    while lines.peek() is not None:
        no, line = lines.next("coefficient")
        tokens.extend(_floats(no, line.split()))
    if len(tokens) != 2 * rows * cols:
        raise SpinorFormatError(f"dimension mismatch: expected {2 * rows * cols} coefficient "
                                f"numbers, found {len(tokens)}")
    arr = np.array(tokens).reshape(rows, cols, 2)
    coeff = np.empty((rows, cols), dtype=complex)
    coeff.real = arr[..., 0]
    coeff.imag = arr[..., 1]
    try:
        s = SpinorSet(ncomp, basis, coeff, energies, n_occ, n_vir, molecule)
        if check:
            s.check_orthonormal()
    except ValueError as err:
        raise SpinorFormatError(str(err)) from None
    return s


def load_spinor_set(path, check: bool = True) -> SpinorSet:
    return parse_spinor_set(Path(path).read_text(), check=check)
