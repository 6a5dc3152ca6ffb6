import math

import numpy as np
import pytest
from scipy import integrate

from spinboson.kernel import ExpSumKernel, phi2
from spinboson.model import PRESETS, ModeSet, discretize


def test_single_mode_values():
    k = ExpSumKernel.from_modes(ModeSet(np.array([1.0]), np.array([math.sqrt(2.0)])))
    assert k(0.0) == pytest.approx(0.5)
    assert k(-2.0) == pytest.approx(0.5 * math.exp(-2.0))
    assert k.l1_norm() == pytest.approx(1.0)


def test_two_modes_and_zero():
    k = ExpSumKernel.from_modes(ModeSet(np.array([1.0, 2.0]), np.array([1.0, 1.0])))
    assert k(0.0) == pytest.approx(0.5)
    z = ExpSumKernel.from_modes(ModeSet(np.array([1.0]), np.array([0.0])))
    assert z.is_zero and z(3.0) == 0.0 and z.l1_norm() == 0.0


def test_rect_unit_square():
    k = ExpSumKernel([0.5], [1.0])
    assert k.rect_integral((0, 1), (0, 1)) == pytest.approx(math.exp(-1.0), abs=1e-14)
    assert k.rect_integral((0.3, 0.3), (0, 2)) == 0.0
    with pytest.raises(ValueError):
        k.rect_integral((1, 0), (0, 1))


def test_phi2_small_argument_matches_series():
    x = np.array([1e-8, 1e-5, 9e-4, 1.1e-3, 0.5])
    exact = np.array([float(sum((-xi) ** k / math.factorial(k) for k in range(2, 30))) for xi in x])
    assert np.allclose(phi2(x), exact, rtol=1e-12, atol=0)


def test_l1_matches_time_integral_with_tail():
    k = ExpSumKernel([0.3, 0.1, 0.05], [0.7, 2.0, 0.2])
    t_star = 50.0 / k.rates.min()
    body = integrate.quad(k.eval, 0, t_star, limit=500, epsabs=0, epsrel=1e-13)[0]
    tail = float(np.sum(k.weights / k.rates * np.exp(-k.rates * t_star)))
    assert abs(2 * (body + tail) - k.l1_norm()) < 1e-9


def test_rect_additivity():
    k = ExpSumKernel([0.3, 0.7], [0.5, 3.0])
    whole = k.rect_integral((0.0, 3.0), (1.0, 4.0))
    parts = sum(k.rect_integral(a, b) for a in ((0.0, 1.2), (1.2, 3.0)) for b in ((1.0, 2.5), (2.5, 4.0)))
    assert whole == pytest.approx(parts, rel=1e-13)


def test_preset_l1_is_two_pi():
    k = ExpSumKernel.from_modes(discretize(PRESETS["infrared_d3"], 64, "gauss-legendre-stretched"))
    assert k.l1_norm() == pytest.approx(2 * math.pi, rel=1e-10)


def test_io_roundtrip(tmp_path):
    k = ExpSumKernel([0.3, 0.1], [0.7, 2.0])
    k.dump(tmp_path / "k.json")
    k2 = ExpSumKernel.load(tmp_path / "k.json")
    assert np.array_equal(k.weights, k2.weights) and np.array_equal(k.rates, k2.rates)
    k.write_csv(tmp_path / "k.csv", np.linspace(0, 1, 3))
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "t,W" and len(lines) == 4
