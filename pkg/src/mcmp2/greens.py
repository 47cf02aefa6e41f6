"""Occupied and virtual Green's-function trace matrices.

For points r_d, r_o and imaginary time tau,

    O[x, y] = sum_i phi^x_i(r_d) conj(phi^y_i(r_o)) exp(+e_i tau)
    V[x, y] = sum_a phi^x_a(r_d) conj(phi^y_a(r_o)) exp(-e_a tau)

are n_comp x n_comp complex matrices. Pair terms of the integrand are traces
of products of these matrices; see ``estimator``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SpinorSet, evaluate_spinors

EXP_FLOOR = -700.0
EXP_CEIL = 700.0


class ExponentOverflow(ArithmeticError):
    pass


def damping_exponents(spinors: SpinorSet, tau: float, block: str) -> np.ndarray:
    """exp(+e_i tau) for occupied or exp(-e_a tau) for virtual spinors.

    Exponents below -700 underflow to zero; above +700 they would overflow and
    can only come from an invalid spectrum, so they raise naming the spinor.
    """
    if tau < 0:
        raise ValueError(f"imaginary time must be non-negative, got {tau}")
    sl = spinors.block(block)
    sign = 1.0 if sl.start == 0 else -1.0
    expo = sign * spinors.energies[sl] * tau
    check_exponents(expo, offset=sl.start)
    return np.where(expo < EXP_FLOOR, 0.0, np.exp(np.maximum(expo, EXP_FLOOR)))


def check_exponents(expo, offset: int = 0) -> None:
    bad = np.flatnonzero(np.asarray(expo) > EXP_CEIL)
    if len(bad):
        k = int(bad[0])
        raise ExponentOverflow(
            f"imaginary-time exponent {expo[k]:.6g} of spinor {offset + k} exceeds "
            f"{EXP_CEIL:g}; check the sign of its orbital energy")


def guard_tau(spinors: SpinorSet, taus) -> None:
    """Raise if any tau in ``taus`` would overflow a damping factor."""
    t = float(np.max(taus)) if np.size(taus) else 0.0
    damping_exponents(spinors, t, "occ")
    damping_exponents(spinors, t, "vir")


def _trace(spinors, r_d, r_o, tau, block):
    left = evaluate_spinors(spinors, r_d, block)
    right = left if np.array_equal(r_d, r_o) else evaluate_spinors(spinors, r_o, block)
    return (left * damping_exponents(spinors, tau, block)) @ right.conj().T


def occupied_trace(spinors: SpinorSet, r_d, r_o, tau: float) -> np.ndarray:
    return _trace(spinors, r_d, r_o, tau, "occ")


def virtual_trace(spinors: SpinorSet, r_d, r_o, tau: float) -> np.ndarray:
    return _trace(spinors, r_d, r_o, tau, "vir")


@dataclass(frozen=True)
class GreensTraces:
    O: np.ndarray
    V: np.ndarray

    @classmethod
    def at(cls, spinors: SpinorSet, r_d, r_o, tau: float) -> "GreensTraces":
        return cls(occupied_trace(spinors, r_d, r_o, tau), virtual_trace(spinors, r_d, r_o, tau))


def trace_pair_contraction(O, V) -> complex:
    """Element-wise product sum vec(O)^T vec(V), with no conjugation.

    The direct pair term tr(O V) is ``trace_pair_contraction(O, V.T)``.
    """
    O = np.asarray(O)
    V = np.asarray(V)
    if O.shape != V.shape:
        raise ValueError(f"shape mismatch: {O.shape} vs {V.shape}")
    return complex(np.sum(O * V))
