import math

import numpy as np
import pytest

from spinboson.gibbs import GibbsParams, estimate_logZ_reweight, moments_of_time_integral
from spinboson.kernel import ExpSumKernel
from spinboson.model import PRESETS, ContinuousModel, discretize
from spinboson.observables import (MassSweep, SetPartition, SweepRow, bell_number, bloch_extrapolate,
                                   energy_derivative, lambda_c, log_derivative, mass_sweep,
                                   set_partitions, susceptibility, ursell, ursell_joint)
from spinboson.stats import Estimate, MomentVector
from ._oracles import covariance_integral, log_z_lambda_zero


def test_partition_counts():
    assert [len(set_partitions(n)) for n in range(1, 8)] == [1, 2, 5, 15, 52, 203, 877]
    assert [bell_number(n) for n in range(1, 8)] == [1, 2, 5, 15, 52, 203, 877]
    with pytest.raises(ValueError):
        set_partitions(0)
    with pytest.raises(ValueError):
        set_partitions(13)


def test_partitions_are_canonical_and_distinct():
    parts = set_partitions(4)
    assert len({p.blocks for p in parts}) == 15
    for p in parts:
        assert [b[0] for b in p.blocks] == sorted(b[0] for b in p.blocks)
    with pytest.raises(ValueError):
        SetPartition(((1, 2), (2, 3)))
    with pytest.raises(ValueError):
        SetPartition(((1,), (3,)))


def test_log_derivative():
    g = [2.0, 0.7, -0.3, 1.1]
    assert log_derivative(g[:2]) == pytest.approx(0.35)
    assert log_derivative(g[:3]) == pytest.approx(-0.3 / 2 - 0.35**2)
    assert log_derivative([math.e] * 3) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        log_derivative([0.0, 1.0])


def test_log_derivative_against_direct_differentiation():
    # g(x) = 2 + sin x at x = 0.4 and its third derivative of log
    x = 0.4
    g = [2 + math.sin(x), math.cos(x), -math.sin(x), -math.cos(x)]
    f = lambda t: math.log(2 + math.sin(t))
    h = 1e-3
    d3 = (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h**3)
    assert log_derivative(g) == pytest.approx(d3, rel=1e-5)


def test_ursell_examples():
    m = [0.3, 1.2, 0.5, 4.0]
    assert ursell(m, 2).mean == pytest.approx(1.2 - 0.09)
    assert ursell([0.0, 1.5, 0.0, 4.0], 4).mean == pytest.approx(4.0 - 3 * 1.5**2)
    assert ursell([0.0, 2.0, 0.0, 12.0], 4).mean == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        ursell([0.0, 1.0], 3)


def test_ursell_joint_matches_single_variable():
    m = {1: 0.3, 2: 1.2, 3: 0.5, 4: 4.0}
    assert ursell_joint(lambda b: m[len(b)], 4) == pytest.approx(ursell(list(m.values()), 4).mean, abs=1e-12)


def test_ursell_error_propagation():
    # u2 = m2 - m1^2: gradient (-2 m1, 1)
    cov = np.array([[0.01, 0.002], [0.002, 0.04]])
    mv = MomentVector(np.array([0.5, 1.0]), cov, 100, 100)
    g = np.array([-1.0, 1.0])
    assert ursell(mv, 2).stderr == pytest.approx(math.sqrt(g @ cov @ g))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_derivative_sum_equals_signed_cumulant(rng, n):
    for _ in range(20):
        mv = MomentVector.exact(rng.normal(size=4))
        lhs = energy_derivative(mv, n, 1.0).mean
        rhs = (-1) ** (n + 1) * ursell(mv, n).mean
        assert abs(lhs - rhs) < 1e-12


def test_derivative_order_guards():
    mv = MomentVector.exact([0.0, 1.0, 0.0, 3.0, 0.0])
    with pytest.raises(ValueError):
        energy_derivative(mv, 5, 1.0)
    assert energy_derivative(mv, 5, 1.0, max_order=5).mean == pytest.approx(0.0)
    with pytest.raises(ValueError):
        energy_derivative(MomentVector.exact([0.0]), 2, 1.0)


def test_second_derivative_at_zero_coupling(rng):
    T = 5.0
    mv = moments_of_time_integral(rng, ExpSumKernel([0.25], [1.0]), GibbsParams(0.0, 0.0, T), 2, 300_000)
    d = energy_derivative(mv, 2, T)
    assert d.sigmas_from(-covariance_integral(T) / T) < 3
    assert energy_derivative(mv, 1, T).sigmas_from(0.0) < 4


def test_first_derivative_matches_log_z_difference(rng):
    kernel = ExpSumKernel([0.25], [1.0])
    T, mu, h = 3.0, 0.4, 0.05
    mv = moments_of_time_integral(rng, kernel, GibbsParams(0.5, mu, T), 1, 400_000)
    d1 = energy_derivative(mv, 1, T)
    hi = estimate_logZ_reweight(rng, kernel, GibbsParams(0.5, mu + h, T), 400_000)
    lo = estimate_logZ_reweight(rng, kernel, GibbsParams(0.5, mu - h, T), 400_000)
    fd = -(hi.mean - lo.mean) / (2 * h * T)
    fd_err = math.hypot(hi.stderr, lo.stderr) / (2 * h * T)
    # central difference bias is O(h^2) times the third derivative, far below the noise
    assert d1.sigmas_from(fd, fd_err) < 4


def test_odd_derivatives_vanish_at_zero_field(rng):
    T = 3.0
    mv = moments_of_time_integral(rng, ExpSumKernel([0.25], [1.0]), GibbsParams(0.6, 0.0, T), 3, 300_000)
    assert energy_derivative(mv, 1, T).sigmas_from(0.0) < 4
    assert energy_derivative(mv, 3, T).sigmas_from(0.0) < 4


def test_bloch_exact_on_synthetic_inverse_T_data():
    E, c = -1.3, 0.7
    samples = [(T, Estimate(-T * (E + c / T + 1.0), 0.0, 0, 0)) for T in (2.0, 5.0, 11.0)]
    fit = bloch_extrapolate(samples)
    assert fit.limit.mean == pytest.approx(E, abs=1e-13)
    assert fit.slope == pytest.approx(c, abs=1e-12)
    assert np.max(np.abs(fit.residuals)) < 1e-13


def test_bloch_trivial_and_closed_form():
    flat = bloch_extrapolate([(T, Estimate(0.0, 0.0, 0, 0)) for T in (1.0, 2.0, 3.0)])
    assert flat.limit.mean == -1.0 and flat.limit.stderr == 0.0
    series = [(T, Estimate(log_z_lambda_zero(T, 1.0), 0.0, 0, 0)) for T in (10.0, 20.0, 40.0)]
    fit = bloch_extrapolate(series)
    assert fit.limit.mean == pytest.approx(-math.sqrt(2.0), abs=1e-10)
    with pytest.raises(ValueError):
        bloch_extrapolate(series[:2])


def test_susceptibility_requires_zero_field(rng):
    with pytest.raises(ValueError):
        susceptibility(rng, ExpSumKernel([0.25], [1.0]), GibbsParams(0.3, 0.1, 1.0), 100)


def test_susceptibility_at_zero_coupling(rng):
    fit = susceptibility(rng, ExpSumKernel([0.25], [1.0]), GibbsParams(0.0, 0.0, 1.0), 200_000, ladder=(5.0, 10.0, 20.0))
    assert all(v <= 0 for v in fit.values)
    assert fit.limit.sigmas_from(-1.0) < 3
    # the exact finite-T curve is -1 + (1 - e^{-2T}) / (2T): slope 1/2
    assert abs(fit.slope - 0.5) < 4 * fit.slope_stderr


def test_small_coupling_bounded_across_ladder(rng):
    kernel = ExpSumKernel([0.25], [1.0])
    lam = math.sqrt(0.5 / kernel.l1_norm())
    fit = susceptibility(rng, kernel, GibbsParams(lam, 0.0, 1.0), 100_000, ladder=(5.0, 10.0, 20.0))
    assert max(abs(v) for v in fit.values) < 5.0


def test_lambda_c_formula():
    model = PRESETS["infrared_d3"]
    n2 = model.nu_weighted_norm_sq()
    assert lambda_c(model, 0.5) == pytest.approx(math.sqrt(0.25) / math.sqrt(n2))
    scaled = ContinuousModel(amplitude=2.0)
    assert lambda_c(scaled, 0.5) == pytest.approx(lambda_c(model, 0.5) / 2)
    with pytest.raises(ValueError):
        lambda_c(model, 0.0)


def test_lambda_c_and_massless_l1_norm():
    # at lam_c the massless L1 norm of lam^2 W equals epsilon / 4
    model = PRESETS["infrared_d3"]
    lam = lambda_c(model, 0.5)
    kernel = ExpSumKernel.from_modes(discretize(model, 64, "gauss-legendre-stretched"))
    assert lam**2 * kernel.l1_norm() == pytest.approx(0.5 / 4, rel=1e-9)


def test_l1_norm_bounded_by_massless_value():
    model = PRESETS["infrared_d3"]
    bound = 0.5 * model.nu_weighted_norm_sq()
    for m in (1.0, 0.3, 0.1, 0.03, 0.0):
        k = ExpSumKernel.from_modes(discretize(model.with_mass(m), 48, "gauss-legendre-stretched"))
        assert k.l1_norm() <= bound * (1 + 1e-12)


def test_mass_sweep_without_coupling(rng):
    sweep = mass_sweep(rng, PRESETS["infrared_d3"], 0.0, [1.0, 0.1], 100_000, ladder=(20.0,), n_nodes=8)
    for r in sweep.rows:
        assert abs(r.value + 1.0) < 0.025 + 4 * r.stderr  # finite-T value is -1 + (1 - e^{-2T})/(2T)
        assert r.value == pytest.approx(-covariance_integral(20.0) / 20.0, abs=4 * r.stderr)
    assert sweep.passed


def test_mass_sweep_errors(rng):
    with pytest.raises(ValueError):
        mass_sweep(rng, PRESETS["infrared_d3"], 0.1, [], 10)
    with pytest.raises(ValueError):
        mass_sweep(rng, PRESETS["infrared_d3"], 0.1, [0.1, 1.0], 10)
    with pytest.raises(ValueError):
        mass_sweep(rng, PRESETS["infrared_d3"], 1.0, [1.0], 10, epsilon=0.5)


def _rows(values, err):
    return [SweepRow(m, 0.25, 20.0, v, err, 1.0, 0.1) for m, v in zip((1.0, 0.3, 0.1, 0.03), values)]


def test_divergence_diagnostic():
    assert not MassSweep(_rows([-1.0, -1.001, -0.999, -1.0], 0.003)).diverging
    # saturating growth is bounded
    assert not MassSweep(_rows([-1.1, -1.4, -1.55, -1.6], 0.003)).diverging
    # equal increments on a geometric ladder look logarithmic
    assert MassSweep(_rows([-1.0, -1.3, -1.6, -1.9], 0.003)).diverging
    assert MassSweep(_rows([-1.0, -1.2, -1.6, -2.4], 0.003)).diverging
    assert not MassSweep(_rows([-1.0, -1.0, math.nan, -1.0], 0.003)).passed


def test_sweep_csv(tmp_path):
    s = MassSweep(_rows([-1.0, -1.1, -1.15, -1.16], 0.01))
    s.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "m,lambda,T,value,stderr,ess"
    s.write_json(tmp_path / "s.json")
