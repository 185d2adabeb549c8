import math

import numpy as np
import pytest

from heatsep.modal import ModalSystem, PlantParams, build_modal_system
from heatsep.residue_gain import gamma_harmonic
from heatsep.riccati import (
    NO_STABILIZING_X,
    SPECTRAL_FAILED,
    DegenerateSubspace,
    NoStabilizingSolution,
    ResonantReaction,
    care_residual,
    gramian_solution_linear,
    is_hurwitz,
    linear_gain_structure,
    solve_care_stabilizing,
    spectral_condition,
    synthesize_gains,
)
from oracles import (
    GRAMIAN_CASES,
    ZERO_STRUCTURE_CASES,
    are_certificates,
    gramian_defect,
    random_feasible_designs,
    zero_structure_defect,
)


def test_scalar_closed_form():
    X = solve_care_stabilizing(np.array([[0.1]]), np.array([[1 / math.pi]]), np.zeros((1, 1)))
    assert X[0, 0] == pytest.approx(2 * math.pi * 0.1, rel=1e-12)


def test_lyapunov_reduction():
    X = solve_care_stabilizing(-np.eye(3), np.zeros((3, 3)), np.eye(3))
    np.testing.assert_allclose(X, 0.5 * np.eye(3), atol=1e-14)


def test_imaginary_axis_is_rejected():
    # A = 0, R = 0, Q = 0: Hamiltonian eigenvalues all zero
    with pytest.raises(NoStabilizingSolution):
        solve_care_stabilizing(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))


def test_demo_gains(demo_design):
    r = demo_design
    np.testing.assert_allclose(r.K[0], [1.33, -0.16, 0.06], atol=0.02)
    np.testing.assert_allclose(r.L[:, 0], [2.82, 0.01, 0.05], atol=0.02)
    # frozen full-precision values from this solver
    np.testing.assert_allclose(r.K[0], [1.33437966, -0.15582108, 0.06477689], atol=1e-7)
    assert r.rho_xz < r.gamma ** -2


def test_demo_structural_invariants(demo_system, demo_design):
    r = demo_design
    for M in (r.X, r.Z, r.Y):
        np.testing.assert_allclose(M, M.T, atol=1e-14)
        assert np.linalg.eigvalsh(M)[0] > 0
    C = np.asarray(demo_system.C)
    L_alt = r.gamma ** -2 * np.linalg.solve(r.Y, C.T)
    np.testing.assert_allclose(r.L, L_alt, atol=1e-8)
    np.testing.assert_allclose(r.K, np.asarray(demo_system.B).T @ r.X, atol=1e-15)


def test_duality(demo_system, demo_design):
    # the observer equation is the controller equation on the transposed data
    r = demo_design
    A, C = np.asarray(demo_system.A), np.asarray(demo_system.C)
    I = np.eye(3)
    Z = solve_care_stabilizing(A.T, C.T @ C - r.gamma * r.sigma * I, (r.sigma / r.gamma) * I)
    np.testing.assert_allclose(Z, r.Z, atol=1e-10)


def test_scalar_limit_small_sigma():
    sys = ModalSystem.from_reaction(0.1, 1)
    g = gamma_harmonic(0.1, 1e-9, 1).gamma
    r = synthesize_gains(sys, 1e-9, g)
    assert r.feasible
    assert r.K[0, 0] == pytest.approx(2 * math.sqrt(math.pi) * 0.1, rel=1e-6)


def test_infeasible_large_sigma():
    sys = build_modal_system(PlantParams(0.1, 0.5), 1)
    r = synthesize_gains(sys, 0.5, gamma_harmonic(0.1, 0.5, 1).gamma)
    assert not r.feasible
    assert r.reason in (NO_STABILIZING_X, SPECTRAL_FAILED) or r.reason.endswith("positive-definite")
    assert r.K is None and r.L is None


@pytest.mark.parametrize(
    "X, Z, gamma, rho, ok",
    [(np.eye(2), np.eye(2), 0.5, 1.0, True), (2 * np.eye(2), 2 * np.eye(2), 1.0, 4.0, False)],
)
def test_spectral_condition(X, Z, gamma, rho, ok):
    r, k = spectral_condition(X, Z, gamma)
    assert r == pytest.approx(rho)
    assert k is ok


def test_gramian_scalar():
    X0, Z0 = gramian_solution_linear(0.1, 1)
    assert X0[0, 0] == pytest.approx(2 * math.pi * 0.1, rel=1e-13)
    assert Z0[0, 0] == pytest.approx(2 * math.pi * 0.1, rel=1e-13)
    b0 = 1 / math.sqrt(math.pi)
    assert 0.1 - b0 * b0 * X0[0, 0] == pytest.approx(-0.1, rel=1e-13)


@pytest.mark.parametrize("q, N0", [(0.1, 1), (1.1, 2), (4.5, 3)])
def test_gramian_solves_linear_riccati(q, N0):
    X0, Z0 = gramian_solution_linear(q, N0)
    sys = ModalSystem.from_reaction(q, N0)
    A, B, C = np.asarray(sys.A), np.asarray(sys.B), np.asarray(sys.C)
    Q = np.zeros((N0, N0))
    assert np.linalg.norm(care_residual(X0, A, B @ B.T, Q)) <= 1e-10 * (1 + np.linalg.norm(X0))
    assert np.linalg.norm(care_residual(Z0, A.T, C.T @ C, Q)) <= 1e-10 * (1 + np.linalg.norm(Z0))
    assert is_hurwitz(A - B @ B.T @ X0)
    assert np.linalg.eigvalsh(X0)[0] > 0


@pytest.mark.parametrize("q, N0, N", GRAMIAN_CASES)
def test_gramian_matches_riccati(q, N0, N):
    assert gramian_defect(q, N0, N) <= 1e-6


def test_gramian_errors():
    with pytest.raises(ResonantReaction):
        gramian_solution_linear(1.0, 1)
    with pytest.raises(ValueError):
        gramian_solution_linear(0.1, 2)


@pytest.mark.parametrize("q, N", ZERO_STRUCTURE_CASES)
def test_linear_zero_structure(q, N):
    assert zero_structure_defect(q, N) <= 1e-6


def test_linear_gain_structure_scalar():
    g = gamma_harmonic(0.1, 0.0, 3).gamma
    K, L = linear_gain_structure(0.1, 3, g)
    assert K[0, 1] == 0.0 and K[0, 2] == 0.0
    assert L[1, 0] == 0.0 and L[2, 0] == 0.0
    assert K[0, 0] == pytest.approx(2 * math.sqrt(math.pi) * 0.1, rel=1e-12)
    K1, _ = linear_gain_structure(0.1, 1, gamma_harmonic(0.1, 0.0, 1).gamma)
    assert K1[0, 0] == pytest.approx(K[0, 0])


def test_linear_gain_continuity():
    # N = 7 is the smallest feasible order at q = 1.1 and sigma = 0
    q, N = 1.1, 7
    K, _ = linear_gain_structure(q, N, gamma_harmonic(q, 0.0, N).gamma)
    gaps = []
    for s in (1e-7, 1e-8):
        r = synthesize_gains(ModalSystem.from_reaction(q, N), s, gamma_harmonic(q, s, N).gamma)
        assert r.feasible
        gaps.append(np.max(np.abs(r.K[0, :2] - K[0, :2])))
    assert gaps[0] <= 1e-4
    assert gaps[1] == pytest.approx(gaps[0] / 10, rel=0.01)  # O(sigma) approach


def test_degenerate_subspace_falls_back_to_gramian():
    # 2q = 9 + 0: a stable eigenvalue q - 9 mirrors the unstable q - 0
    q, N = 4.5, 6
    sys = ModalSystem.from_reaction(q, N)
    A, B = np.asarray(sys.A), np.asarray(sys.B)
    with pytest.raises(DegenerateSubspace):
        solve_care_stabilizing(A, B @ B.T, np.zeros((N, N)))
    r = synthesize_gains(sys, 0.0, gamma_harmonic(q, 0.0, N).gamma)
    assert r.X is not None
    X0, _ = gramian_solution_linear(q, 3)
    np.testing.assert_allclose(r.X[:3, :3], X0, atol=1e-8)
    assert np.max(np.abs(r.X[3:, :])) <= 1e-12


def test_linear_gain_rejects_failed_coupling():
    with pytest.raises(ValueError, match="rho"):
        linear_gain_structure(1.1, 4, gamma_harmonic(1.1, 0.0, 4).gamma)


def test_random_designs_are_certified():
    rng = np.random.default_rng(7)
    designs = random_feasible_designs(rng, count=30)
    for sys, res in designs:
        resid, hurwitz = are_certificates(sys, res)
        assert resid <= 1e-8
        assert hurwitz


def test_gamma_validation(demo_system):
    with pytest.raises(ValueError):
        synthesize_gains(demo_system, 0.2, 0.0)
    with pytest.raises(ValueError):
        synthesize_gains(demo_system, -0.1, 0.3)
