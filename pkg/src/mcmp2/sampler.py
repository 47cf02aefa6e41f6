"""Metropolis propagation of m electron-pair walkers.

Randomness comes from four Philox streams spawned from (seed, worker): walker
placement, proposal displacements, acceptance uniforms and imaginary times.
Each MC step consumes a fixed number of draws from each stream regardless of
outcomes, so the chain after k steps depends only on (seed, worker, k) and
not on how the steps were grouped into kernel calls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .weights import WeightSpec

DEFAULT_SIGMA = 1.0
ADAPT_INTERVAL = 100
ADAPT_FACTOR = 1.1
TARGET_ACCEPTANCE = 0.5


def _generator(seed_seq) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


@dataclass
class Streams:
    move: np.random.Generator
    accept: np.random.Generator
    tau: np.random.Generator

    @classmethod
    def spawn(cls, seed: int, worker: int = 0) -> tuple["Streams", np.random.Generator]:
        init, move, accept, tau = np.random.SeedSequence([seed, worker]).spawn(4)
        return cls(_generator(move), _generator(accept), _generator(tau)), _generator(init)

    def state(self) -> dict:
        return {k: _jsonable(getattr(self, k).bit_generator.state)
                for k in ("move", "accept", "tau")}

    @classmethod
    def from_state(cls, state: dict) -> "Streams":
        gens = {}
        for k in ("move", "accept", "tau"):
            bg = np.random.Philox()
            bg.state = _from_jsonable(state[k])
            gens[k] = np.random.Generator(bg)
        return cls(**gens)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


@dataclass
class WalkerEnsemble:
    positions: np.ndarray   # (m, 2, 3)
    g: np.ndarray           # (m, 2) cached g(r1), g(r2)
    r12: np.ndarray         # (m,)
    sigma: float
    accepted: np.ndarray    # (m,) accepted moves since last reset
    proposed: int           # proposals per walker since last reset
    streams: Streams
    steps: int = 0          # Metropolis steps taken, burn-in included

    @property
    def m(self) -> int:
        return len(self.positions)

    @property
    def n_pairs(self) -> int:
        return self.m * (self.m - 1) // 2

    @property
    def acceptance(self) -> float:
        return float(self.accepted.sum()) / max(1, self.proposed * self.m)

    def weights(self, spec: WeightSpec) -> np.ndarray:
        """Full pair weights recomputed from positions."""
        return self.g[:, 0] * self.g[:, 1] / (spec.norm * self.r12)

    def check_cache(self, spec: WeightSpec, rtol: float = 1e-12) -> None:
        g = kernels.eval_g(np.ascontiguousarray(self.positions.reshape(-1, 3)),
                           spec.centers, spec.coefficients, spec.exponents).reshape(-1, 2)
        r12 = np.linalg.norm(self.positions[:, 0] - self.positions[:, 1], axis=-1)
        if not (np.allclose(g, self.g, rtol=rtol, atol=0)
                and np.allclose(r12, self.r12, rtol=rtol, atol=0)):
            raise AssertionError("cached walker weights disagree with positions")

    def reset_counters(self) -> None:
        self.accepted[:] = 0
        self.proposed = 0

    def state(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "g": self.g.tolist(),
            "r12": self.r12.tolist(),
            "sigma": self.sigma,
            "accepted": self.accepted.tolist(),
            "proposed": self.proposed,
            "steps": self.steps,
            "rng": self.streams.state(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "WalkerEnsemble":
        return cls(np.array(state["positions"], dtype=float),
                   np.array(state["g"], dtype=float),
                   np.array(state["r12"], dtype=float),
                   float(state["sigma"]),
                   np.array(state["accepted"], dtype=np.int64),
                   int(state["proposed"]),
                   Streams.from_state(state["rng"]),
                   int(state["steps"]))


def init_ensemble(m: int, spec: WeightSpec, seed: int, worker: int = 0,
                  sigma: float = DEFAULT_SIGMA) -> WalkerEnsemble:
    """Place each electron near a uniformly chosen nucleus.

    Displacements are Gaussian with variance 1/(2 zeta_1) per coordinate, zeta_1
    being the first weight exponent of that nucleus' element.
    """
    if m < 2:
        raise ValueError(f"need at least two walkers, got m={m}")
    streams, init = Streams.spawn(seed, worker)
    mol = spec.molecule
    zeta1 = np.array([spec.params[s][0][1] for s in mol.symbols])
    which = init.integers(0, mol.natom, size=(m, 2))
    disp = init.standard_normal((m, 2, 3)) * np.sqrt(1.0 / (2.0 * zeta1[which]))[..., None]
    pos = mol.positions[which] + disp
    g = kernels.eval_g(np.ascontiguousarray(pos.reshape(-1, 3)), spec.centers,
                       spec.coefficients, spec.exponents).reshape(m, 2)
    r12 = np.linalg.norm(pos[:, 0] - pos[:, 1], axis=-1)
    return WalkerEnsemble(pos, g, r12, float(sigma), np.zeros(m, dtype=np.int64), 0, streams)


def draw_moves(ens: WalkerEnsemble, n: int) -> tuple[np.ndarray, np.ndarray]:
    normals = ens.streams.move.standard_normal((n, ens.m, 2, 3))
    uniforms = ens.streams.accept.random((n, ens.m))
    return normals, uniforms


def propagate(ens: WalkerEnsemble, spec: WeightSpec, n: int) -> None:
    """``n`` Metropolis steps, every walker proposing a move of both electrons."""
    if n <= 0:
        return
    normals, uniforms = draw_moves(ens, n)
    kernels.metropolis(ens.positions, ens.g, ens.r12, ens.sigma, normals, uniforms,
                       spec.centers, spec.coefficients, spec.exponents, ens.accepted)
    ens.proposed += n
    ens.steps += n


def metropolis_step(ens: WalkerEnsemble, spec: WeightSpec) -> np.ndarray:
    """One step; returns per-walker acceptance flags.

    A walker moves with probability min(1, w_new / w_old) for the full weight
    g(r1) g(r2) / r12. A proposal putting both electrons on the same point is
    rejected, so the chain never holds an infinite-weight state.
    """
    before = ens.accepted.copy()
    propagate(ens, spec, 1)
    return ens.accepted > before


def burn_in(ens: WalkerEnsemble, spec: WeightSpec, n_burn: int, adapt: bool = True) -> None:
    """Equilibrate, nudging sigma toward 50% acceptance every 100 steps.

    sigma is frozen afterwards and the acceptance counters are reset so that
    production statistics exclude burn-in.
    """
    if n_burn < 0:
        raise ValueError("burn-in length must be non-negative")
    done = 0
    while done < n_burn:
        chunk = min(ADAPT_INTERVAL, n_burn - done)
        ens.reset_counters()
        propagate(ens, spec, chunk)
        done += chunk
        if adapt and chunk == ADAPT_INTERVAL:
            if ens.acceptance > TARGET_ACCEPTANCE:
                ens.sigma *= ADAPT_FACTOR
            else:
                ens.sigma /= ADAPT_FACTOR
    ens.reset_counters()
