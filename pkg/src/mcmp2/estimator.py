"""Weight-divided integrand, redundant-walker step estimate and blocking.

For walkers p and q with electron positions 1, 2 (walker p) and 3, 4 (walker
q), the direct part of the integrand is tr[O(1,3) V(3,1)] tr[O(2,4) V(4,2)]
and the exchange part is tr[O(3,1) V(1,4) O(4,2) V(2,3)]. For one-component
spatial orbitals these are the usual 2J - K products; for spinors the
traces run over component channels. Both Coulomb factors 1/r12 and 1/r34
cancel against the pair weights, so they are never evaluated.

Each (p, q) term is symmetrized with its (q, p) counterpart. The two are
complex conjugates of each other analytically, so the symmetrized value is
real up to rounding and its imaginary part measures numerical noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .basis import flatten_basis
from .greens import guard_tau, occupied_trace, trace_pair_contraction, virtual_trace
from .model import SpinorSet
from .sampler import WalkerEnsemble
from .weights import TauSampler, WeightSpec, lambda_from_gap, sample_tau


def prefactors(spinors: SpinorSet) -> tuple[float, float]:
    """(direct, exchange) prefactors: -2, +1 for spatial orbitals, -1/2, +1/2 for spinors."""
    s = spinors.spin_factor
    return -0.5 * s * s, 0.5 * s


@dataclass(frozen=True, eq=False)
class Engine:
    """Kernel-ready arrays for one SpinorSet and weight."""
    spinors: SpinorSet
    spec: WeightSpec
    tau: TauSampler
    comp_ptr: np.ndarray
    centers: np.ndarray
    harm: np.ndarray
    exps: np.ndarray
    coefs: np.ndarray
    cre: np.ndarray
    cim: np.ndarray
    pref_d: float
    pref_x: float

    @classmethod
    def build(cls, spinors: SpinorSet, spec: WeightSpec) -> "Engine":
        flat = flatten_basis([f for b in spinors.basis for f in b])
        c = spinors.coefficients
        pd, px = prefactors(spinors)
        return cls(spinors, spec, TauSampler(lambda_from_gap(spinors)),
                   np.asarray(spinors.offsets, dtype=np.int64), flat.centers, flat.harmonic,
                   flat.exponents, flat.coefficients, np.ascontiguousarray(c.real),
                   np.ascontiguousarray(c.imag), pd, px)

    @property
    def lam(self) -> float:
        return self.tau.lam

    def kernel_args(self):
        s = self.spinors
        return (self.comp_ptr, self.centers, self.harm, self.exps, self.coefs, self.cre,
                self.cim, s.energies, s.n_occ, self.pref_d, self.pref_x, self.spec.norm, self.lam)


@dataclass(frozen=True)
class SampleTerm:
    direct: complex
    exchange: complex
    total: float


def sample_term(spinors: SpinorSet, ens: WalkerEnsemble, p: int, q: int, tau: float,
                spec: WeightSpec, sampler: TauSampler) -> SampleTerm:
    """Reference evaluation of one weight-divided (p, q) pair term.

    Built from ``greens`` matrices point by point; the production path uses
    the cached kernels instead.
    """
    if p == q:
        raise ValueError("walker pair needs two distinct walkers")
    if tau < 0:
        raise ValueError("imaginary time must be non-negative")
    pts = {1: ens.positions[p, 0], 2: ens.positions[p, 1],
           3: ens.positions[q, 0], 4: ens.positions[q, 1]}
    O = {}
    V = {}

    def o(a, b):
        if (a, b) not in O:
            O[a, b] = occupied_trace(spinors, pts[a], pts[b], tau)
        return O[a, b]

    def v(a, b):
        if (a, b) not in V:
            V[a, b] = virtual_trace(spinors, pts[a], pts[b], tau)
        return V[a, b]

    def pair(a, b):
        return trace_pair_contraction(o(a, b), v(b, a).T)

    def ring(a, b, c, d):
        return complex(np.trace(o(a, b) @ v(b, c) @ o(c, d) @ v(d, a)))

    pd, px = prefactors(spinors)
    direct = 0.5 * pd * (pair(1, 3) * pair(2, 4) + pair(3, 1) * pair(4, 2))
    exchange = 0.5 * px * (ring(3, 1, 4, 2) + ring(1, 3, 2, 4))
    gprod = ens.g[p, 0] * ens.g[p, 1] * ens.g[q, 0] * ens.g[q, 1]
    scale = spec.norm ** 2 / (gprod * float(sampler.density(tau)))
    return SampleTerm(direct * scale, exchange * scale, float(((direct + exchange) * scale).real))


def mc_step_estimate(engine: Engine, ens: WalkerEnsemble, tau: float) -> tuple[float, float]:
    """I'_n as (real, imaginary) averaged over all m(m-1)/2 walker pairs."""
    guard_tau(engine.spinors, tau)
    return kernels.step_estimate(ens.positions, ens.g, float(tau), *engine.kernel_args())


def production_segment(engine: Engine, ens: WalkerEnsemble, n: int):
    """Advance ``n`` MC steps; returns per-step (real, imaginary) estimates.

    Each step moves all walkers once, draws one tau shared by every pair and
    evaluates the redundant-walker estimate.
    """
    out_re = np.empty(n)
    out_im = np.empty(n)
    if n <= 0:
        return out_re, out_im
    normals = ens.streams.move.standard_normal((n, ens.m, 2, 3))
    uniforms = ens.streams.accept.random((n, ens.m))
    taus = sample_tau(engine.tau, ens.streams.tau.random(n))
    guard_tau(engine.spinors, taus)
    spec = engine.spec
    kernels.production(ens.positions, ens.g, ens.r12, ens.sigma, normals, uniforms, taus,
                       spec.centers, spec.coefficients, spec.exponents, *engine.kernel_args(),
                       ens.accepted, out_re, out_im)
    ens.proposed += n
    ens.steps += n
    return out_re, out_im


class BlockingAccumulator:
    """Running mean of I'_n with non-overlapping block means.

    sigma_N^2 = (1/n_b) sum_k (block_k - I_N)^2 over the n_b completed blocks,
    and sigma_bar = sigma_N / sqrt(n_b). Samples of an incomplete trailing
    block enter I_N but not sigma.

    The sum of squares is kept as running sums of block means shifted by the
    first block mean, so each completed block costs O(1). All sums run left
    to right, so a stream fed in arbitrary chunks gives identical bits.
    """

    def __init__(self, block_size: int = 100, n: int = 0, total: float = 0.0,
                 partial: float = 0.0, blocks=(), imag_total: float = 0.0,
                 abs_total: float = 0.0, shift: float = 0.0, s1: float = 0.0,
                 s2: float = 0.0):
        if block_size < 1:
            raise ValueError(f"block size must be at least 1, got {block_size}")
        self.block_size = int(block_size)
        self.n = int(n)
        self.total = float(total)
        self.partial = float(partial)
        self.imag_total = float(imag_total)
        self.abs_total = float(abs_total)
        self.shift = float(shift)
        self.s1 = float(s1)
        self.s2 = float(s2)
        blocks = np.asarray(blocks, dtype=float)
        self._buf = np.empty(max(64, 2 * len(blocks)))
        self._buf[:len(blocks)] = blocks
        self.n_blocks = len(blocks)

    @property
    def blocks(self) -> np.ndarray:
        return self._buf[:self.n_blocks]

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else 0.0

    @staticmethod
    def _variance(s1, s2, nb, mean, shift):
        d = mean - shift
        return np.maximum((s2 - 2.0 * d * s1 + nb * (d * d)) / nb, 0.0)

    @property
    def sigma(self) -> float:
        if not self.n_blocks:
            return math.inf
        return float(np.sqrt(self._variance(self.s1, self.s2, self.n_blocks, self.mean,
                                            self.shift)))

    @property
    def sigma_bar(self) -> float:
        if not self.n_blocks:
            return math.inf
        return float(self.sigma / np.sqrt(float(self.n_blocks)))

    @property
    def imag_ratio(self) -> float:
        """|sum of imaginary residues| / sum |I'_n|."""
        return abs(self.imag_total) / self.abs_total if self.abs_total else 0.0

    def add(self, value: float, imag: float = 0.0):
        """Add one sample; returns (N, I_N, sigma_bar) if it closed a block."""
        records = self.extend([value], [imag])
        return records[0] if records else None

    def extend(self, values, imags=None) -> list:
        """Add many samples; returns the (N, I_N, sigma_bar) records of closed blocks."""
        vals = np.asarray(values, dtype=float).reshape(-1)
        imags = np.zeros(len(vals)) if imags is None else np.asarray(imags, dtype=float)
        L = len(vals)
        if L == 0:
            return []
        nb_size = self.block_size
        n0 = self.n
        tot = np.cumsum(np.r_[self.total, vals])
        self.imag_total = float(np.cumsum(np.r_[self.imag_total, imags])[-1])
        self.abs_total = float(np.cumsum(np.r_[self.abs_total, np.abs(vals)])[-1])
        self.total = float(tot[-1])
        self.n = n0 + L
        head = nb_size - n0 % nb_size
        if head > L:
            self.partial = float(np.cumsum(np.r_[self.partial, vals])[-1])
            return []
        ends = np.arange(head, L + 1, nb_size)
        k = len(ends) - 1
        first = np.cumsum(np.r_[self.partial, vals[:head]])[-1]
        mid = vals[head:head + k * nb_size].reshape(k, nb_size)
        sums = np.cumsum(np.hstack([np.zeros((k, 1)), mid]), axis=1)[:, -1]
        self.partial = float(np.cumsum(np.r_[0.0, vals[head + k * nb_size:]])[-1])
        means = np.r_[first, sums] / nb_size
        if self.n_blocks == 0:
            self.shift = float(means[0])
        d = means - self.shift
        s1 = np.cumsum(np.r_[self.s1, d])[1:]
        s2 = np.cumsum(np.r_[self.s2, d * d])[1:]
        self.s1, self.s2 = float(s1[-1]), float(s2[-1])
        nb = self.n_blocks + np.arange(1, len(means) + 1, dtype=float)
        n_at = n0 + ends
        i_at = tot[ends] / n_at
        sbar = np.sqrt(self._variance(s1, s2, nb, i_at, self.shift)) / np.sqrt(nb)
        need = self.n_blocks + len(means)
        if need > len(self._buf):
            self._buf = np.concatenate([self._buf, np.empty(max(need, len(self._buf)))])
        self._buf[self.n_blocks:need] = means
        self.n_blocks = need
        return list(zip(n_at.tolist(), i_at.tolist(), sbar.tolist()))

    def state(self) -> dict:
        return {"block_size": self.block_size, "n": self.n, "total": self.total,
                "partial": self.partial, "blocks": self.blocks.tolist(),
                "imag_total": self.imag_total, "abs_total": self.abs_total,
                "shift": self.shift, "s1": self.s1, "s2": self.s2}

    @classmethod
    def from_state(cls, state: dict) -> "BlockingAccumulator":
        return cls(**state)


def accumulate(acc: BlockingAccumulator, value: float, imag: float = 0.0) -> BlockingAccumulator:
    acc.add(value, imag)
    return acc


__all__ = [
    "Engine", "SampleTerm", "BlockingAccumulator", "sample_term", "mc_step_estimate",
    "production_segment", "accumulate", "prefactors",
]
