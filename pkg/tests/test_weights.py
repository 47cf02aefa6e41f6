import math

import numpy as np
import pytest
from scipy import integrate, stats

from mcmp2.model import Molecule
from mcmp2.weights import (TauSampler, WeightConfigError, WeightSpec, g_value,
                           lambda_from_energies, lambda_from_gap, normalization_Ng,
                           pair_weight, pair_weight_ratio, sample_tau, s_norm)

H_ATOM = Molecule([1.0], [[0.0, 0.0, 0.0]])


def single_primitive(zeta=1.0, c=1.0, center=(0.0, 0.0, 0.0)):
    mol = Molecule([1.0], [center])
    return WeightSpec.build(mol, {"H": [(c, zeta)]})


def test_g_at_hydrogen_nucleus():
    spec = WeightSpec.build(H_ATOM)
    expected = 0.25 * (2 * 0.06 / math.pi) ** 0.75 + 0.15 * (2 * 0.6 / math.pi) ** 0.75
    assert g_value(spec, [0, 0, 0]) == pytest.approx(expected, rel=1e-15)


def test_g_decays_far_from_nuclei(h2_spec):
    assert g_value(h2_spec, [50.0, 0, 0]) < 1e-15


def test_g_is_additive_over_nuclei():
    a = WeightSpec.build(Molecule([1.0], [[0, 0, -0.7]]))
    b = WeightSpec.build(Molecule([1.0], [[0, 0, 0.7]]))
    both = WeightSpec.build(Molecule([1.0, 1.0], [[0, 0, -0.7], [0, 0, 0.7]]))
    pts = np.random.default_rng(1).normal(size=(20, 3))
    assert np.allclose(g_value(both, pts), g_value(a, pts) + g_value(b, pts), rtol=1e-15, atol=0)


def test_g_translation_invariant():
    shift = np.array([1.5, -2.25, 0.75])
    a = WeightSpec.build(Molecule([1.0, 1.0], [[0, 0, -0.5], [0, 0, 0.5]]))
    b = WeightSpec.build(Molecule([1.0, 1.0], [[0, 0, -0.5] + shift, [0, 0, 0.5] + shift]))
    pts = np.array([[0.25, 0.5, -0.125], [1.0, 0.0, 0.5]])
    assert np.array_equal(g_value(a, pts), g_value(b, pts + shift))


def test_missing_element_is_a_construction_error():
    with pytest.raises(WeightConfigError, match="Li"):
        WeightSpec.build(Molecule([3.0], [[0, 0, 0]]))
    spec = WeightSpec.build(Molecule([3.0], [[0, 0, 0]]), {"Li": [(0.5, 0.1), (0.5, 1.0)]})
    assert spec.norm > 0


def test_ng_single_primitive_closed_form():
    assert normalization_Ng(single_primitive()) == pytest.approx(4 * math.pi, rel=1e-12)


def test_ng_against_quadrature():
    # the angular average of 1/r12 is 1/max(r1, r2), leaving a radial double integral
    zeta = 0.8
    spec = single_primitive(zeta)

    def shell(r):
        return 4 * np.pi * r * r * s_norm(zeta) * np.exp(-zeta * r * r)

    half, _ = integrate.dblquad(lambda r2, r1: shell(r1) * shell(r2) / r1,
                                0, 15, 0, lambda r1: r1, epsabs=1e-12, epsrel=1e-10)
    assert 2 * half == pytest.approx(spec.norm, rel=1e-6)


def test_ng_monte_carlo_six_dimensional():
    spec = WeightSpec.build(Molecule([1.0, 1.0], [[0, 0, -0.7], [0, 0, 0.7]]))
    rng = np.random.default_rng(3)
    n = 400000
    # sample from the normalized density g / q with q = sum of coefficients times (pi/zeta)^1.5
    q_k = spec.coefficients * (np.pi / spec.exponents) ** 1.5
    q = q_k.sum()
    idx = rng.choice(len(q_k), size=(n, 2), p=q_k / q)
    pts = spec.centers[idx] + rng.normal(size=(n, 2, 3)) / np.sqrt(2 * spec.exponents[idx])[..., None]
    inv_r = 1.0 / np.linalg.norm(pts[:, 0] - pts[:, 1], axis=-1)
    est = q * q * inv_r.mean()
    err = q * q * inv_r.std() / math.sqrt(n)
    assert abs(est - spec.norm) < 5 * err


def test_ng_point_charge_limit():
    far = 60.0
    spec = WeightSpec.build(Molecule([1.0, 1.0], [[0, 0, 0], [0, 0, far]]), {"H": [(1.0, 1.0)]})
    self_part = 2 * 4 * math.pi
    charge = (math.pi / 1.0) ** 1.5 * s_norm(1.0)
    cross = (spec.norm - self_part) / 2
    assert cross == pytest.approx(charge * charge / far, rel=1e-12)


def test_ng_scales_quadratically():
    spec = WeightSpec.build(H_ATOM)
    assert spec.scaled(3.0).norm == pytest.approx(9.0 * spec.norm, rel=1e-14)


def test_pair_weight_properties(h2_spec):
    r1, r2 = np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.0, 0.9])
    assert pair_weight(h2_spec, r1, r2) == pair_weight(h2_spec, r2, r1)
    factor, r12 = pair_weight_ratio(h2_spec, r1, r2)
    assert pair_weight(h2_spec, r1, r2) == pytest.approx(factor / r12, rel=1e-15)
    assert pair_weight(h2_spec, r1, r1) == math.inf
    doubled = WeightSpec(h2_spec.molecule, h2_spec.params, h2_spec.centers,
                         h2_spec.coefficients, h2_spec.exponents, 2 * h2_spec.norm)
    assert pair_weight(doubled, r1, r2) == 0.5 * pair_weight(h2_spec, r1, r2)


def test_sample_tau_examples():
    s = TauSampler(1.2)
    assert sample_tau(s, 0.0) == 0.0
    assert sample_tau(s, 0.5) == pytest.approx(math.log(2) / 1.2, rel=1e-15)
    assert sample_tau(s, 0.5) == pytest.approx(0.57762, abs=1e-5)
    with pytest.raises(ValueError):
        TauSampler(0.0)


def test_tau_distribution():
    s = TauSampler(1.7)
    rng = np.random.default_rng(11)
    big = sample_tau(s, rng.random(1_000_000))
    assert abs(big.mean() - 1 / s.lam) < 5 * big.std() / 1000
    small = sample_tau(s, rng.random(100_000))
    assert stats.kstest(small, "expon", args=(0, 1 / s.lam)).pvalue > 0.01
    tau = np.linspace(0, 40, 400001)
    assert integrate.trapezoid(s.density(tau), tau) == pytest.approx(1.0, abs=1e-6)


def test_lambda_from_gap(h2):
    assert lambda_from_energies([-0.9, -0.5], [0.1, 0.4]) == pytest.approx(1.2)
    assert lambda_from_energies([-0.9, -0.5, -0.5], [0.1]) == lambda_from_energies([-0.9, -0.5], [0.1])
    with pytest.raises(WeightConfigError):
        lambda_from_energies([-0.5], [-0.5])
    assert lambda_from_gap(h2) == pytest.approx(2 * (h2.energies[1] - h2.energies[0]))
