import math

import numpy as np
import pytest

from mcmp2.basis import (BasisFunction, HARM_COEF, HARM_POW, HARM_PTR, flatten_basis,
                         harmonic_index, overlap_matrix, radial_norm)
from mcmp2.model import evaluate_basis


def _lebedev_like_grid(n=60):
    # Gauss-Legendre in cos(theta) times uniform phi integrates harmonics up to l=3 exactly
    x, w = np.polynomial.legendre.leggauss(n)
    phi = np.linspace(0, 2 * np.pi, 2 * n, endpoint=False)
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st = np.sqrt(1 - ct ** 2)
    pts = np.stack([st * np.cos(ph), st * np.sin(ph), ct], -1).reshape(-1, 3)
    wts = (w[:, None] * np.full(len(phi), 2 * np.pi / len(phi))[None]).reshape(-1)
    return pts, wts


def _harmonic_values(k, pts):
    v = np.zeros(len(pts))
    for t in range(HARM_PTR[k], HARM_PTR[k + 1]):
        a, b, c = HARM_POW[t]
        v += HARM_COEF[t] * pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c
    return v


def test_solid_harmonics_orthonormal_on_sphere():
    pts, wts = _lebedev_like_grid()
    vals = np.array([_harmonic_values(k, pts) for k in range(16)])
    gram = (vals * wts) @ vals.T
    assert np.abs(gram - np.eye(16)).max() < 1e-12


def test_harmonic_index_layout():
    assert harmonic_index(0, 0) == 0
    assert harmonic_index(1, -1) == 1
    assert harmonic_index(3, 3) == 15
    with pytest.raises(ValueError):
        BasisFunction((0, 0, 0), 4, 0, (1.0,), (1.0,))


def test_s_primitive_value_at_origin():
    f = BasisFunction((0, 0, 0), 0, 0, (1.0,), (1.0,))
    assert f(np.zeros((1, 3)))[0] == pytest.approx((2 / math.pi) ** 0.75, rel=1e-14)
    assert (2 / math.pi) ** 0.75 == pytest.approx(0.71270547, abs=1e-8)


def test_p_function_vanishes_at_center():
    f = BasisFunction((0.3, -0.2, 1.0), 1, 0, (0.8,), (1.0,))
    assert f(np.array([[0.3, -0.2, 1.0]]))[0] == 0.0


@pytest.mark.parametrize("l", [0, 1, 2, 3])
def test_contracted_self_overlap_is_one(l):
    for m in range(-l, l + 1):
        f = BasisFunction((0.1, 0.2, -0.3), l, m, (3.0, 0.9, 0.25), (0.2, 0.5, 0.4))
        assert overlap_matrix([f])[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_overlap_matches_grid_quadrature():
    a = BasisFunction((0, 0, 0), 1, 1, (0.7,), (1.0,))
    b = BasisFunction((0.4, 0.0, 0.3), 2, -2, (0.5, 1.5), (0.6, 0.4))
    c = BasisFunction((0.0, 0.5, 0.0), 0, 0, (0.9,), (1.0,))
    h = 0.12
    ax = np.arange(-7, 7 + h / 2, h)
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
    fa, fb, fc = a(g), b(g), c(g)
    s = overlap_matrix([a, b, c])
    assert s[0, 1] == pytest.approx(np.sum(fa * fb) * h ** 3, abs=1e-6)
    assert s[1, 2] == pytest.approx(np.sum(fb * fc) * h ** 3, abs=1e-6)


def test_radial_norm_matches_s_normalization():
    assert radial_norm(1.3, 0) / math.sqrt(4 * math.pi) == pytest.approx(
        (2 * 1.3 / math.pi) ** 0.75, rel=1e-14)


def test_flatten_pads_with_zero_coefficients():
    fs = [BasisFunction((0, 0, 0), 0, 0, (1.0,), (1.0,)),
          BasisFunction((1, 0, 0), 1, 1, (2.0, 0.5, 0.1), (0.1, 0.3, 0.6))]
    arr = flatten_basis(fs)
    assert arr.exponents.shape == (2, 3)
    assert np.all(arr.coefficients[0, 1:] == 0)
    pts = np.random.default_rng(0).normal(size=(7, 3))
    chi = evaluate_basis(arr, pts)
    assert np.allclose(chi[:, 0], fs[0](pts), rtol=1e-13, atol=0)
    assert np.allclose(chi[:, 1], fs[1](pts), rtol=1e-13, atol=1e-300)


def test_invalid_primitives_rejected():
    with pytest.raises(ValueError):
        BasisFunction((0, 0, 0), 0, 0, (-1.0,), (1.0,))
    with pytest.raises(ValueError):
        BasisFunction((0, 0, 0), 0, 0, (), ())
