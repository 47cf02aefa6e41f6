import time

import numpy as np
import pytest

from mcmp2.basis import BasisFunction
from mcmp2.fixtures import hydrogen_chain_spinors, synthetic_4c_spinors
from mcmp2.greens import (ExponentOverflow, GreensTraces, guard_tau, occupied_trace,
                          trace_pair_contraction, virtual_trace)
from mcmp2.model import Molecule, SpinorSet, evaluate_basis, evaluate_spinors


def brute_trace(spinors, r_d, r_o, tau, block):
    """Entry-by-entry sums over spinors, components and basis functions."""
    nc = spinors.n_comp
    off = spinors.offsets
    cols = range(spinors.n_occ) if block == "occ" else range(spinors.n_occ, spinors.n_spinor)
    out = np.zeros((nc, nc), dtype=complex)
    chi_d = [evaluate_basis(a, r_d)[0] for a in spinors.basis_arrays]
    chi_o = [evaluate_basis(a, r_o)[0] for a in spinors.basis_arrays]
    for x in range(nc):
        for y in range(nc):
            for p in cols:
                e = spinors.energies[p]
                damp = np.exp(e * tau) if block == "occ" else np.exp(-e * tau)
                phx = sum(chi_d[x][mu] * spinors.coefficients[off[x] + mu, p]
                          for mu in range(len(chi_d[x])))
                phy = sum(chi_o[y][mu] * spinors.coefficients[off[y] + mu, p]
                          for mu in range(len(chi_o[y])))
                out[x, y] += phx * np.conj(phy) * damp
    return out


def test_single_occupied_is_outer_product(h2):
    r, rp, tau = np.array([0.1, 0.0, 0.3]), np.array([-0.2, 0.4, 0.0]), 0.37
    phi_r = evaluate_spinors(h2, r, "occ")
    phi_rp = evaluate_spinors(h2, rp, "occ")
    expected = np.outer(phi_r[:, 0], phi_rp[:, 0].conj()) * np.exp(h2.energies[0] * tau)
    assert np.array_equal(occupied_trace(h2, r, rp, tau), expected)


def test_zero_time_is_energy_independent(synth4c):
    shifted = SpinorSet(4, synth4c.basis, synth4c.coefficients, synth4c.energies - 0.1,
                        synth4c.n_occ, synth4c.n_vir, synth4c.molecule)
    r, rp = [0.3, 0.1, -0.4], [0.0, -0.6, 0.9]
    assert np.array_equal(occupied_trace(synth4c, r, rp, 0.0), occupied_trace(shifted, r, rp, 0.0))
    assert np.array_equal(virtual_trace(synth4c, r, rp, 0.0), virtual_trace(shifted, r, rp, 0.0))


def test_one_component_brute_force(h2, rng):
    for _ in range(5):
        r, rp, tau = rng.normal(size=3), rng.normal(size=3), rng.exponential()
        assert np.allclose(occupied_trace(h2, r, rp, tau), brute_trace(h2, r, rp, tau, "occ"),
                           atol=1e-12, rtol=0)
        assert np.allclose(virtual_trace(h2, r, rp, tau), brute_trace(h2, r, rp, tau, "vir"),
                           atol=1e-12, rtol=0)


def test_four_component_brute_force(synth4c, rng):
    for _ in range(3):
        r, rp, tau = rng.normal(size=3), rng.normal(size=3), rng.exponential()
        assert np.allclose(virtual_trace(synth4c, r, rp, tau),
                           brute_trace(synth4c, r, rp, tau, "vir"), atol=1e-12, rtol=0)
        assert np.allclose(occupied_trace(synth4c, r, rp, tau),
                           brute_trace(synth4c, r, rp, tau, "occ"), atol=1e-12, rtol=0)


def test_hermitian_kernel_symmetry(synth4c, rng):
    r, rp = rng.normal(size=3), rng.normal(size=3)
    for fn in (occupied_trace, virtual_trace):
        a = fn(synth4c, r, rp, 0.8)
        b = fn(synth4c, rp, r, 0.8)
        assert np.allclose(a, b.conj().T, atol=1e-12, rtol=0)


def test_zero_virtuals_give_zero_matrix():
    f = BasisFunction((0, 0, 0), 0, 0, (1.0,), (1.0,))
    s = SpinorSet(1, [[f]], [[1.0]], [-0.9], 1, 0)
    assert np.array_equal(virtual_trace(s, [0, 0, 0], [0.1, 0, 0], 0.5), np.zeros((1, 1)))


def test_virtual_trace_decays_in_tau(synth4c):
    r, rp = [0.2, 0.0, 0.3], [0.1, -0.2, -0.5]
    norms = [np.linalg.norm(virtual_trace(synth4c, r, rp, t)) for t in np.linspace(0, 60, 31)]
    assert np.all(np.diff(norms) < 0)
    assert norms[-1] < 1e-6 * norms[0]


def test_completeness_at_zero_time(rng):
    full = synthetic_4c_spinors(n_occ=4, n_vir=12)
    sinv = np.linalg.inv(full.overlap()[:4, :4])
    arr = full.basis_arrays[0]
    r, rp = rng.normal(size=3), rng.normal(size=3)
    total = occupied_trace(full, r, rp, 0.0) + virtual_trace(full, r, rp, 0.0)
    kernel = evaluate_basis(arr, r)[0] @ sinv @ evaluate_basis(arr, rp)[0]
    assert np.allclose(total, kernel * np.eye(4), atol=1e-8, rtol=0)


def test_time_derivative_at_zero(synth4c):
    r, rp = np.array([0.3, -0.2, 0.1]), np.array([-0.4, 0.5, 0.2])
    h = 1e-5
    # second-order one-sided stencil: the trace is defined for tau >= 0 only
    f0, f1, f2 = (occupied_trace(synth4c, r, rp, t) for t in (0.0, h, 2 * h))
    numeric = (-3 * f0 + 4 * f1 - f2) / (2 * h)
    phi_r = evaluate_spinors(synth4c, r, "occ")
    phi_rp = evaluate_spinors(synth4c, rp, "occ")
    exact = (phi_r * synth4c.energies[:synth4c.n_occ]) @ phi_rp.conj().T
    assert np.abs(numeric - exact).max() <= 1e-6 * np.abs(exact).max()


def test_pair_contraction_examples(rng):
    assert trace_pair_contraction(np.eye(4), np.eye(4)) == 4
    assert trace_pair_contraction([[2.0 + 1j]], [[3.0]]) == (6 + 3j)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    loop = sum(a[x, y] * b[x, y] for x in range(4) for y in range(4))
    assert abs(trace_pair_contraction(a, b) - loop) < 1e-14 * abs(loop) + 1e-14
    with pytest.raises(ValueError, match="mismatch"):
        trace_pair_contraction(np.eye(4), np.eye(2))


def test_greens_traces_bundle(h2):
    g = GreensTraces.at(h2, [0, 0, 0], [0, 0, 1.0], 0.4)
    assert np.array_equal(g.O, occupied_trace(h2, [0, 0, 0], [0, 0, 1.0], 0.4))
    assert np.array_equal(g.V, virtual_trace(h2, [0, 0, 0], [0, 0, 1.0], 0.4))


def test_exponent_guard():
    f = BasisFunction((0, 0, 0), 0, 0, (1.0,), (1.0,))
    g = BasisFunction((0, 0, 2.0), 0, 0, (1.0,), (1.0,))
    w, v = np.linalg.eigh(np.array([[1.0, np.exp(-2.0)], [np.exp(-2.0), 1.0]]))
    c = (v / np.sqrt(w)) @ v.T
    bad = SpinorSet(1, [[f, g]], c, [1.0, 2.0], 1, 1, Molecule([1.0], [[0, 0, 0]]))
    with pytest.raises(ExponentOverflow, match="spinor 0"):
        occupied_trace(bad, [0, 0, 0], [0, 0, 0], 800.0)
    with pytest.raises(ExponentOverflow):
        guard_tau(bad, np.array([0.1, 750.0]))
    # large negative exponents underflow quietly to zero
    assert np.all(virtual_trace(bad, [0, 0, 0], [0, 0, 0], 400.0) == 0)
    with pytest.raises(ValueError):
        occupied_trace(bad, [0, 0, 0], [0, 0, 0], -0.1)


def _timed(fn, reps=200):
    best = np.inf
    for _ in range(5):
        t = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, time.perf_counter() - t)
    return best / reps


def test_cost_linear_in_size():
    r, rp = np.array([0.1, 0.2, 3.0]), np.array([0.0, -0.3, 5.0])

    def cost(n):
        s = hydrogen_chain_spinors(n, occ_fraction=0.5)
        return _timed(lambda: (occupied_trace(s, r, rp, 0.3), virtual_trace(s, r, rp, 0.3)), 20)

    small, large = cost(1024), cost(2048)
    # n_bas and n_spinor double together: linear basis evaluation plus an
    # n_bas x n_spinor contraction puts the ratio between 2 and 4
    ratio = large / small
    assert 2.0 * 0.8 < ratio < 4.0 * 1.2
