import math

import numpy as np
import pytest

from spinboson.paths import (E1, E2, SpinPath, exact_moment, read_paths_binary, read_paths_csv,
                             sample_path, sample_paths, spin_path_expectation,
                             spin_semigroup_element, verify_spin_fkn, write_paths_binary,
                             write_paths_csv)
from spinboson.stats import iid_estimate


def test_eval_examples():
    assert SpinPath(1, np.array([]), 2.0).eval(1.3) == 1
    assert SpinPath(1, np.array([1.0]), 2.0).eval(1.0) == -1
    assert SpinPath(-1, np.array([0.5, 1.5]), 2.0).eval(1.0) == 1
    with pytest.raises(ValueError):
        SpinPath(1, np.array([]), 2.0).eval(2.5)


def test_time_integral_examples():
    assert SpinPath(1, np.array([]), 2.0).time_integral() == 2.0
    assert SpinPath(1, np.array([1.0]), 2.0).time_integral() == 0.0
    assert SpinPath(-1, np.array([0.5]), 2.0).time_integral() == pytest.approx(1.0)


def test_invalid_paths():
    with pytest.raises(ValueError):
        SpinPath(0, np.array([]), 1.0)
    with pytest.raises(ValueError):
        SpinPath(1, np.array([0.5, 0.5]), 1.0)
    with pytest.raises(ValueError):
        SpinPath(1, np.array([1.0]), 1.0)
    with pytest.raises(ValueError):
        sample_path(np.random.default_rng(0), 0.0)


def test_flip_symmetry():
    p = SpinPath(1, np.array([0.3, 1.1, 1.7]), 2.0)
    t = np.linspace(0, 2, 9)
    assert np.array_equal(p.flipped().eval(t), -p.eval(t))
    assert p.flipped().time_integral() == -p.time_integral()


def test_sampler_statistics(rng):
    b = sample_paths(rng, 3.0, 100_000)
    counts = iid_estimate(b.counts.astype(float))
    assert counts.sigmas_from(3.0) < 3
    assert iid_estimate(b.signs.astype(float)).sigmas_from(0.0) < 3
    b2 = sample_paths(rng, 2.0, 100_000)
    corr = iid_estimate((b2.eval(0.5) * b2.eval(1.5)).astype(float))
    assert corr.sigmas_from(math.exp(-2.0)) < 3


def test_batch_consistent_with_single_paths(rng):
    b = sample_paths(rng, 2.5, 200)
    for i in range(0, 200, 17):
        p = b.path(i)
        assert p.time_integral() == pytest.approx(b.time_integrals()[i])
        assert p.eval(1.2) == b.eval(1.2)[i]


def test_exact_moment_examples():
    assert exact_moment([0.0, 0.7]) == pytest.approx(math.exp(-1.4))
    assert exact_moment([0.1, 0.2, 0.3]) == 0.0
    assert exact_moment([0, 1, 2, 5]) == pytest.approx(math.exp(-8.0))
    with pytest.raises(ValueError):
        exact_moment([1.0, 0.5])


def test_exact_moment_against_monte_carlo(rng):
    b = sample_paths(rng, 5.0, 1_000_000)
    y = b.eval(0.0) * b.eval(1.0) * b.eval(2.0) * b.eval(5.0)
    assert iid_estimate(y.astype(float)).sigmas_from(math.exp(-8.0)) < 4


def test_duplicated_time_and_markov_factorisation():
    assert exact_moment([0.2, 0.5, 0.5, 0.9]) == pytest.approx(exact_moment([0.2, 0.9]))
    assert exact_moment([0, 2]) == pytest.approx(exact_moment([0, 0.7]) * exact_moment([0.7, 2]))


def test_spin_semigroup_examples():
    assert spin_semigroup_element(E2, E2, [0.7]) == pytest.approx(1.0)
    assert spin_semigroup_element(E1, E1, [0.7]) == pytest.approx(math.exp(-1.4))
    assert spin_semigroup_element(E2, E1, [0.4, 0.9]) == pytest.approx(math.exp(-1.8))
    with pytest.raises(ValueError):
        spin_semigroup_element(E1, E1, [0.5, 0.0])


def test_matrix_element_equals_moment_formula(rng):
    for n in range(1, 7):
        for _ in range(20):
            t = rng.uniform(0.05, 2.0, size=n)
            for a in (E1, E2):
                for b in (E1, E2):
                    assert abs(spin_semigroup_element(a, b, t) - spin_path_expectation(a, b, t).real) < 1e-12


def test_verify_spin_fkn_report(rng):
    rep = verify_spin_fkn(3, [0.4, 0.2, 0.9], 100_000, rng)
    assert rep.exact_deviation < 1e-12
    assert rep.mc_sigmas < 4


def test_io_roundtrip(tmp_path, rng):
    paths = [sample_path(rng, 2.0) for _ in range(20)]
    write_paths_csv(tmp_path / "p.csv", paths)
    assert read_paths_csv(tmp_path / "p.csv") == paths
    write_paths_binary(tmp_path / "p.bin", paths)
    assert read_paths_binary(tmp_path / "p.bin") == paths
    (tmp_path / "bad.bin").write_bytes(b"NOTAPATH" + bytes(16))
    with pytest.raises(ValueError):
        read_paths_binary(tmp_path / "bad.bin")
