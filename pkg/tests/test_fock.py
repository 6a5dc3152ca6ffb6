import json
import math

import numpy as np
import pytest
import scipy.sparse.linalg as sla

from spinboson.fock import (BosonSpace, ConvergenceError, TruncationSpec, build_hamiltonian,
                            energy, field_bound_terms, finite_diff_susceptibility, fkn_check,
                            ground_energy, lanczos, log_semigroup_vacuum, semigroup_vacuum,
                            write_spectrum_json)
from spinboson.gibbs import GibbsParams
from spinboson.model import ModeSet
from ._oracles import z_lambda_zero


def test_vacuum_sector_is_two_by_two():
    modes = ModeSet(np.array([1.3]), np.array([0.0]))
    h = build_hamiltonian(modes, 0.7, 0.4, TruncationSpec((0,), total_cap=0))
    assert np.allclose(h.matrix.toarray(), [[1.0, 0.4], [0.4, -1.0]])


def test_single_mode_cap_one_hand_assembly():
    om, g, lam = 1.7, 0.9, 0.6
    h = build_hamiltonian(ModeSet(np.array([om]), np.array([g])), lam, 0.0, TruncationSpec((1,))).matrix.toarray()
    c = lam * g / math.sqrt(2)
    # basis: (up,0), (up,1), (down,0), (down,1)
    expected = np.array([[1, 0, 0, c], [0, 1 + om, c, 0], [0, c, -1, 0], [c, 0, 0, -1 + om]])
    assert np.allclose(h, expected)


def test_symmetric_and_structure(rng, two_modes):
    h = build_hamiltonian(two_modes, 0.8, 0.3, TruncationSpec((3, 4))).matrix
    assert abs(h - h.T).max() == 0
    coo = h.tocoo()
    nb = h.shape[0] // 2
    space = BosonSpace(TruncationSpec((3, 4)))
    for r, c in zip(coo.row, coo.col):
        if r == c:
            continue
        assert (r < nb) != (c < nb)  # every off-diagonal entry flips the spin
        diff = np.abs(space.occ[r % nb] - space.occ[c % nb]).sum()
        assert diff in (0, 1)


def test_dimension_budget():
    trunc = TruncationSpec((10, 10, 10), max_dim=1000)
    with pytest.raises(MemoryError):
        build_hamiltonian(ModeSet(np.ones(3), np.ones(3)), 0.1, 0.0, trunc)
    assert TruncationSpec((2, 3)).dimension() == 24
    assert TruncationSpec((3, 3, 3), total_cap=2).boson_dimension() == 10


def test_complex_couplings_rejected():
    with pytest.raises(ValueError):
        ModeSet(np.array([1.0]), np.array([0.5j]))


@pytest.mark.parametrize("mu", [0.0, 0.5, 1.0, -2.0])
def test_ground_energy_without_coupling(mu, two_modes):
    h = build_hamiltonian(two_modes, 0.0, mu, TruncationSpec((3, 3)))
    assert abs(ground_energy(h).e0 + math.sqrt(1 + mu * mu)) < 1e-10


def test_gap_without_coupling(two_modes):
    spec = ground_energy(build_hamiltonian(two_modes, 0.0, 0.0, TruncationSpec((3, 3))))
    assert spec.e0 == pytest.approx(-1.0, abs=1e-12)
    assert spec.gap == pytest.approx(min(2.0, two_modes.omegas.min()), abs=1e-10)


def test_second_order_perturbation():
    om, g = 1.3, 0.8
    modes = ModeSet(np.array([om]), np.array([g]))
    for lam in (0.02, 0.04):
        e = energy(modes, lam, 0.0, TruncationSpec((8,)))
        second = -1 - lam**2 * g**2 / (2 * (om + 2))
        assert abs(e - second) < 5 * lam**4
    # the remainder shrinks like lam^4
    r1 = energy(modes, 0.02, 0.0, TruncationSpec((8,))) + 1 + 0.02**2 * g**2 / (2 * (om + 2))
    r2 = energy(modes, 0.04, 0.0, TruncationSpec((8,))) + 1 + 0.04**2 * g**2 / (2 * (om + 2))
    assert r2 / r1 == pytest.approx(16, rel=0.05)


def test_lanczos_matches_dense_and_arpack(two_modes):
    h = build_hamiltonian(two_modes, 0.9, 0.2, TruncationSpec((9, 9)))
    lz = ground_energy(h)
    dense = ground_energy(h, method="dense")
    ref = np.sort(sla.eigsh(h.matrix, k=2, which="SA")[0])
    assert lz.e0 == pytest.approx(dense.e0, abs=1e-10) and lz.e1 == pytest.approx(dense.e1, abs=1e-10)
    assert lz.e0 == pytest.approx(ref[0], abs=1e-10)
    with pytest.raises(ConvergenceError):
        ground_energy(h, tol=0.0, max_restarts=1)


def test_lanczos_reorthogonalization():
    a = np.diag(np.arange(50.0))
    _, _, q = lanczos(lambda v: a @ v, np.ones(50), 30)
    assert np.allclose(q.T @ q, np.eye(q.shape[1]), atol=1e-12)


def test_truncation_monotone(two_modes):
    es = [energy(two_modes, 1.0, 0.3, TruncationSpec((c, c))) for c in (1, 2, 4, 6, 8)]
    assert all(b <= a + 1e-12 for a, b in zip(es, es[1:]))


@pytest.mark.parametrize("T", [2.0, 4.0, 8.0])
@pytest.mark.parametrize("mu", [0.0, 0.5, 1.0])
def test_semigroup_closed_form(T, mu, single_mode):
    h = build_hamiltonian(single_mode, 0.0, mu, TruncationSpec((4,)))
    exact = z_lambda_zero(T, mu) * math.exp(T)
    assert abs(semigroup_vacuum(h, T) - exact) <= 1e-10 * exact


def test_semigroup_bounds(two_modes):
    h = build_hamiltonian(two_modes, 0.8, 0.3, TruncationSpec((5, 5)))
    assert semigroup_vacuum(h, 0.0) == 1.0
    e0 = ground_energy(h).e0
    for s, t in ((0.5, 1.0), (1.3, 2.2)):
        val = semigroup_vacuum(h, s + t)
        assert 0 < val <= math.exp(-(s + t) * e0)
        assert val <= math.sqrt(semigroup_vacuum(h, 2 * s) * semigroup_vacuum(h, 2 * t)) * (1 + 1e-12)
    with pytest.raises(ValueError):
        semigroup_vacuum(h, -1.0)


def test_krylov_branch_matches_expm_multiply():
    modes = ModeSet(np.array([1.0, 1.5, 2.0]), np.array([0.7, 0.5, 0.4]))
    h = build_hamiltonian(modes, 0.5, 0.2, TruncationSpec((12, 12, 12)))
    assert h.dimension > 2000
    e = np.zeros(h.dimension)
    e[h.vacuum_down] = 1.0
    ref = math.log(sla.expm_multiply(-3.0 * h.matrix, e)[h.vacuum_down])
    assert log_semigroup_vacuum(h, 3.0) == pytest.approx(ref, abs=1e-11)


def test_field_relative_bound(rng, two_modes):
    trunc = TruncationSpec((6, 6))
    n = BosonSpace(trunc).occ.shape[0]
    for _ in range(100):
        psi = rng.normal(size=n)
        lhs, rhs = field_bound_terms(two_modes, trunc, psi)
        assert lhs <= rhs * (1 + 1e-12)


def test_finite_difference_without_coupling(single_mode):
    assert abs(finite_diff_susceptibility(single_mode, 0.0, TruncationSpec((4,)), 1e-3) + 1.0) < 1e-6
    with pytest.raises(ValueError):
        finite_diff_susceptibility(single_mode, 0.0, TruncationSpec((4,)), 0.0)


def test_energy_even_in_field(single_mode):
    tr = TruncationSpec((10,))
    assert energy(single_mode, 0.6, 0.01, tr) == pytest.approx(energy(single_mode, 0.6, -0.01, tr), abs=1e-12)


def test_fkn_check_without_coupling(rng, single_mode):
    rep = fkn_check(single_mode, GibbsParams(0.0, 0.5, 3.0), TruncationSpec((4,)), 1000, rng)
    assert rep.lhs == pytest.approx(z_lambda_zero(3.0, 0.5), rel=1e-12)
    # every path has zero quadratic action; Z estimate is an average of e^{-mu int x}
    assert rep.passed


def test_fkn_check_two_modes(rng, two_modes):
    rep = fkn_check(two_modes, GibbsParams(0.5, 0.0, 2.0), TruncationSpec((10, 10)), 400_000, rng)
    assert rep.truncation_converged
    assert rep.sigmas <= 3


def test_exports(tmp_path, single_mode):
    tr = TruncationSpec((2,))
    h = build_hamiltonian(single_mode, 0.5, 0.1, tr)
    h.write_triplets(tmp_path / "h.txt")
    lines = (tmp_path / "h.txt").read_text().splitlines()
    dim, nnz = map(int, lines[0].split())
    assert dim == 6 and nnz == len(lines) - 1 == h.matrix.nnz
    write_spectrum_json(tmp_path / "s.json", ground_energy(h), tr)
    data = json.loads((tmp_path / "s.json").read_text())
    assert set(data) >= {"E0", "E1", "gap", "dimension", "residual_norms"}
    assert h.basis_state(h.vacuum_down) == ("down", (0,))
