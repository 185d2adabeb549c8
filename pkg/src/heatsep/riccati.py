"""Stabilizing Riccati solutions and observer-based controller gains.

Controller and observer follow the two H-infinity type equations

    X A + A'X - X (B B' - gamma sigma I) X + (sigma/gamma) I = 0,
    Z A' + A Z - Z (C'C - gamma sigma I) Z + (sigma/gamma) I = 0,

coupled through ``rho(X Z) < gamma**-2``.  Gains are ``K = B'X`` and
``L = Z (I - gamma^2 X Z)^{-1} C'``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .modal import ModalSystem, eigenvalues, input_coefficients, output_coefficients

log = logging.getLogger(__name__)

IMAG_AXIS_TOL = 1e-9
HURWITZ_MARGIN = 1e-9
PD_RTOL = 1e-10
COND_MAX = 1e12
RESONANCE_TOL = 1e-9

OK = "ok"
NO_STABILIZING_X = "no-stabilizing-X"
NO_STABILIZING_Z = "no-stabilizing-Z"
X_NOT_PD = "X-not-positive-definite"
Z_NOT_PD = "Z-not-positive-definite"
SPECTRAL_FAILED = "spectral-condition-failed"


class RiccatiError(np.linalg.LinAlgError):
    pass


class NoStabilizingSolution(RiccatiError):
    pass


class DegenerateSubspace(RiccatiError):
    pass


class ResonantReaction(ValueError):
    """``q`` coincides with an eigenvalue ``n**2``; shift it with a decay rate."""


def care_residual(X, A, R, Q) -> np.ndarray:
    return X @ A + A.T @ X - X @ R @ X + Q


def is_hurwitz(M, margin: float = HURWITZ_MARGIN) -> bool:
    return bool(np.max(np.linalg.eigvals(M).real) < -margin)


def is_positive_definite(M, rtol: float = PD_RTOL) -> bool:
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(w[0] > rtol * max(abs(w[-1]), abs(w[0])))


def _stable_real_basis(H: np.ndarray, n: int) -> np.ndarray:
    w, V = np.linalg.eig(H)
    if np.min(np.abs(w.real)) < IMAG_AXIS_TOL:
        raise NoStabilizingSolution("Hamiltonian has eigenvalues on the imaginary axis")
    cols = []
    for k in np.flatnonzero(w.real < 0):
        if w[k].imag > 0:
            cols.extend([V[:, k].real, V[:, k].imag])
        elif w[k].imag == 0:
            cols.append(V[:, k].real)
    if len(cols) != n:
        raise NoStabilizingSolution(
            f"stable subspace has dimension {len(cols)}, expected {n}"
        )
    return np.column_stack(cols)


def newton_refine(A, R, Q, X, steps: int = 1, tol: float = 0.0) -> np.ndarray:
    """Newton-Kleinman iterations ``X <- X + D`` for ``XA + A'X - XRX + Q = 0``.

    Each step solves ``(A - R X)' D + D (A - R X) = -residual(X)``.
    """
    for _ in range(steps):
        F = care_residual(X, A, R, Q)
        if np.linalg.norm(F) <= tol:
            break
        Acl = A - R @ X
        D = solve_continuous_lyapunov(Acl.T, -F)
        X = X + D
        X = 0.5 * (X + X.T)
    return X


def solve_care_stabilizing(A, R, Q) -> np.ndarray:
    """Stabilizing solution of ``X A + A'X - X R X + Q = 0`` (``R`` may be indefinite).

    The stable invariant subspace of the Hamiltonian ``[[A, -R], [-Q, -A']]``
    gives ``X = V2 V1^{-1}``; the result is symmetrized and polished with one
    Newton step.  Stability of ``A - R X`` is certified afterwards.
    """
    A = np.asarray(A, dtype=float)
    R = np.asarray(R, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    H = np.block([[A, -R], [-Q, -A.T]])
    V = _stable_real_basis(H, n)
    V1, V2 = V[:n], V[n:]
    if np.linalg.cond(V1) > COND_MAX:
        raise DegenerateSubspace("stable invariant subspace is not a graph (V1 singular)")
    X = np.linalg.solve(V1.T, V2.T).T
    X = 0.5 * (X + X.T)
    X = newton_refine(A, R, Q, X, steps=1)
    _certify(X, A, R, Q)
    return X


def _certify(X, A, R, Q):
    res = np.linalg.norm(care_residual(X, A, R, Q))
    if not res <= 1e-8 * (1.0 + np.linalg.norm(X)):
        raise NoStabilizingSolution(f"Riccati residual {res:.3e} too large")
    if not is_hurwitz(A - R @ X):
        raise NoStabilizingSolution("closed-loop matrix A - R X is not Hurwitz")


def spectral_condition(X, Z, gamma: float) -> tuple[float, bool]:
    """``rho(X Z)`` and whether it is below ``gamma**-2``."""
    rho = float(np.max(np.abs(np.linalg.eigvals(np.asarray(X) @ np.asarray(Z)))))
    return rho, rho < gamma ** -2


@dataclass(frozen=True)
class SynthesisResult:
    """Riccati pair, coupling test and gains.

    ``X``/``Z`` are ``None`` when the corresponding equation has no
    stabilizing solution; ``K``/``L``/``Y`` are only set when feasible.
    """

    X: np.ndarray | None
    Z: np.ndarray | None
    Y: np.ndarray | None
    K: np.ndarray | None
    L: np.ndarray | None
    gamma: float
    sigma: float
    rho_xz: float
    feasible: bool
    reason: str


def _padded_gramian_guess(sys: ModalSystem, dual: bool) -> np.ndarray:
    N0 = int(np.sum(sys.lam < sys.q))
    X = np.zeros((sys.N, sys.N))
    if N0:
        X0, Z0 = gramian_solution_linear(sys.q, N0)
        X[:N0, :N0] = Z0 if dual else X0
    return X


def _solve_with_fallback(sys, A, R, Q, dual):
    try:
        return solve_care_stabilizing(A, R, Q)
    except DegenerateSubspace:
        log.debug("eigen path degenerate; Newton-Kleinman from the Gramian solution")
        X = _padded_gramian_guess(sys, dual)
        X = newton_refine(A, R, Q, X, steps=50, tol=1e-13)
        _certify(X, A, R, Q)
        return X


def synthesize_gains(sys: ModalSystem, sigma: float, gamma: float,
                     allow_psd: bool = True) -> SynthesisResult:
    """Solve both Riccati equations and form ``K`` and ``L``.

    With ``sigma == 0`` and ``allow_psd`` (the linear-case reading) the
    solutions may be only semidefinite; ``Y`` is then formed on the range of
    ``Z`` through the pseudo-inverse.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    N = sys.N
    A, B, C = np.array(sys.A), np.array(sys.B), np.array(sys.C)
    I = np.eye(N)
    Q = (sigma / gamma) * I

    def fail(reason, X=None, Z=None, rho=np.nan):
        return SynthesisResult(X, Z, None, None, None, gamma, sigma, rho, False, reason)

    try:
        X = _solve_with_fallback(sys, A, B @ B.T - gamma * sigma * I, Q, dual=False)
    except (RiccatiError, np.linalg.LinAlgError, ValueError):
        return fail(NO_STABILIZING_X)
    try:
        Z = _solve_with_fallback(sys, A.T, C.T @ C - gamma * sigma * I, Q, dual=True)
    except (RiccatiError, np.linalg.LinAlgError, ValueError):
        return fail(NO_STABILIZING_Z, X)

    semidefinite = sigma == 0 and allow_psd
    if semidefinite:
        if np.linalg.eigvalsh(X)[0] < -1e-10 * max(1.0, np.linalg.norm(X, 2)):
            return fail(X_NOT_PD, X, Z)
        if np.linalg.eigvalsh(Z)[0] < -1e-10 * max(1.0, np.linalg.norm(Z, 2)):
            return fail(Z_NOT_PD, X, Z)
    else:
        if not is_positive_definite(X):
            return fail(X_NOT_PD, X, Z)
        if not is_positive_definite(Z):
            return fail(Z_NOT_PD, X, Z)

    rho, ok = spectral_condition(X, Z, gamma)
    if not ok:
        return fail(SPECTRAL_FAILED, X, Z, rho)

    if semidefinite:
        Zinv = np.linalg.pinv(Z, rcond=1e-10, hermitian=True)
    else:
        Zinv = np.linalg.inv(Z)
    Y = gamma ** -2 * Zinv - X
    Y = 0.5 * (Y + Y.T)
    K = B.T @ X
    L = Z @ np.linalg.solve(I - gamma * gamma * X @ Z, C.T)
    return SynthesisResult(X, Z, Y, K, L, gamma, sigma, rho, True, OK)


def gramian_solution_linear(q: float, N0: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse controllability/observability Gramians of the unstable block.

    With ``a_i = q - i**2 > 0`` the Gramians of ``(-A0, B0)`` and
    ``(-A0', C0')`` have entries ``b_i b_j / (a_i + a_j)`` and
    ``c_i c_j / (a_i + a_j)``; their inverses solve the ``sigma = 0``
    Riccati equations.
    """
    if N0 < 1:
        raise ValueError("N0 must be >= 1")
    lam = eigenvalues(np.arange(N0 + 1))
    hit = np.abs(lam - q) < RESONANCE_TOL
    if np.any(hit):
        raise ResonantReaction(
            f"q={q:g} equals eigenvalue {lam[hit][0]:g}; add a small decay rate"
        )
    if not (lam[N0 - 1] < q < lam[N0]):
        raise ValueError(
            f"N0={N0} must count the unstable modes: need {lam[N0 - 1]:g} < q < {lam[N0]:g}"
        )
    a = q - lam[:N0]
    S = a[:, None] + a[None, :]
    b = input_coefficients(N0)
    c = output_coefficients(N0)
    X0 = np.linalg.inv(np.outer(b, b) / S)
    Z0 = np.linalg.inv(np.outer(c, c) / S)
    return 0.5 * (X0 + X0.T), 0.5 * (Z0 + Z0.T)


def unstable_mode_count(q: float) -> int:
    """Number of eigenvalues ``n**2`` below ``q``."""
    n = 0
    while n * n < q:
        n += 1
    return n


def linear_gain_structure(q: float, N: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Gains of the linear case: nonzero only on the ``N0`` unstable modes."""
    N0 = unstable_mode_count(q)
    if N < N0:
        raise ValueError(f"N={N} is below the number of unstable modes {N0}")
    X0, Z0 = gramian_solution_linear(q, N0)
    rho, ok = spectral_condition(X0, Z0, gamma)
    if not ok:
        raise ValueError(f"rho(X0 Z0) = {rho:.6g} is not below gamma^-2 = {gamma ** -2:.6g}")
    B0 = input_coefficients(N0)[:, None]
    C0 = output_coefficients(N0)[None, :]
    K = np.zeros((1, N))
    L = np.zeros((N, 1))
    K[:, :N0] = B0.T @ X0
    L[:N0] = Z0 @ np.linalg.solve(np.eye(N0) - gamma * gamma * X0 @ Z0, C0.T)
    return K, L
