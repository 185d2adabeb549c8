"""Sampled-data stability matrix and a certificate search for ``Psi <= 0``.

Block order of ``Psi`` (``N`` = mode count)::

    z (N) | e (N) | F/(gamma sigma) (N) | zeta (1) | delta_z (N) | delta_e (N) | W_z (N) | W_e (N)

The nonlinearity block is removed when ``sigma == 0``.  ``A`` inside
``Psi`` is built from the system passed in, which may carry a reduced
reaction coefficient ``q_tilde < q``; gains ``K``, ``L`` and ``X`` come from
the continuous-time design at the nominal ``q``.

The search never proves infeasibility: ``None`` only means no certificate
was found within the budget.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .modal import ModalSystem

log = logging.getLogger(__name__)

PSI_TOL = 1e-8
PD_FLOOR = 1e-9
POLYAK_TARGET = -1e-6
DEFAULT_BUDGET = 20_000
GRID = np.logspace(-3.0, 6.0, 60)

BLOCK_LABELS = ("z", "e", "F", "zeta", "delta_z", "delta_e", "W_z", "W_e")


@dataclass(frozen=True)
class PsiAssembly:
    """Upper-triangular block grid of ``Psi`` at fixed variables."""

    labels: tuple[str, ...]
    sizes: tuple[int, ...]
    h: float
    blocks: dict = field(repr=False)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def matrix(self) -> np.ndarray:
        off = self.offsets()
        out = np.zeros((self.size, self.size))
        for (i, j), M in self.blocks.items():
            out[off[i]:off[i + 1], off[j]:off[j + 1]] = M
            if i != j:
                out[off[j]:off[j + 1], off[i]:off[i + 1]] = M.T
        return out


def psi_blocks(sys: ModalSystem, K, L, X, gamma: float, sigma: float, h: float,
               Pz, Pe, Wz, We) -> PsiAssembly:
    N = sys.N
    K = np.asarray(K, dtype=float).reshape(1, N)
    L = np.asarray(L, dtype=float).reshape(N, 1)
    X, Pz, Pe, Wz, We = (np.asarray(M, dtype=float) for M in (X, Pz, Pe, Wz, We))
    for name, M in (("X", X), ("P_z", Pz), ("P_e", Pe), ("W_z", Wz), ("W_e", We)):
        if M.shape != (N, N):
            raise ValueError(f"{name} has shape {M.shape}, expected {(N, N)}")
    if h < 0:
        raise ValueError("sampling bound h must be >= 0")
    A, B, C = np.asarray(sys.A), np.asarray(sys.B), np.asarray(sys.C)
    I = np.eye(N)
    gs = gamma * sigma
    KK = K.T @ K
    BK = B @ K
    Acl = A - BK
    Ae = A - L @ C + gs * X
    PzBK = Pz @ BK
    KBW = K.T @ B.T @ Wz

    U = {
        (0, 0): Pz @ Acl + Acl.T @ Pz + KK + (sigma / gamma) * I,
        (0, 1): -PzBK + gs * X @ Pe + KK,
        (0, 2): gs * Pz,
        (0, 3): np.zeros((N, 1)),
        (0, 4): KK - PzBK,
        (0, 5): KK - PzBK,
        (0, 6): h * Acl.T @ Wz,
        (0, 7): h * gs * X @ We,
        (1, 1): Pe @ Ae + Ae.T @ Pe + KK,
        (1, 2): -gs * Pe,
        (1, 3): Pe @ L,
        (1, 4): KK,
        (1, 5): KK,
        (1, 6): -h * KBW,
        (1, 7): h * Ae.T @ We,
        (2, 2): -gs * I,
        (2, 6): h * gs * Wz,
        (2, 7): -h * gs * We,
        (3, 3): np.array([[-gamma ** -2]]),
        (3, 7): h * L.T @ We,
        (4, 4): -(math.pi ** 2 / 4) * Wz + KK,
        (4, 5): KK,
        (4, 6): -h * KBW,
        (5, 5): -(math.pi ** 2 / 4) * We + KK,
        (5, 6): -h * KBW,
        (6, 6): -Wz,
        (7, 7): -We,
    }
    sizes = [N, N, N, 1, N, N, N, N]
    labels = list(BLOCK_LABELS)
    if sigma == 0:
        U = {(i - (i > 2), j - (j > 2)): M for (i, j), M in U.items() if 2 not in (i, j)}
        del sizes[2], labels[2]
    return PsiAssembly(tuple(labels), tuple(sizes), float(h), U)


def assemble_psi(sys: ModalSystem, K, L, X, gamma: float, sigma: float, h: float,
                 Pz, Pe, Wz, We) -> np.ndarray:
    """Full symmetric ``Psi`` (size ``7N+1``, or ``6N+1`` when ``sigma == 0``)."""
    return psi_blocks(sys, K, L, X, gamma, sigma, h, Pz, Pe, Wz, We).matrix()


class PsiMap:
    """``Psi`` as an affine function of the stacked variables ``(P_z, P_e, W_z, W_e)``.

    Each symmetric ``N x N`` matrix is coordinatized in the Frobenius-orthonormal
    basis (diagonal entries, and off-diagonal entries scaled by ``sqrt(2)``), so
    Euclidean gradients in ``v`` are adjoints of the linear part.
    """

    def __init__(self, sys: ModalSystem, K, L, X, gamma: float, sigma: float, h: float):
        self.N = N = sys.N
        self.h = h
        self._args = (sys, K, L, X, gamma, sigma, h)
        self.iu = np.triu_indices(N)
        self.nb = len(self.iu[0])
        Z = np.zeros((N, N))
        self.base = assemble_psi(*self._args, Z, Z, Z, Z)
        self.n = self.base.shape[0]
        ops = []
        for k in range(4):
            for e in range(self.nb):
                coords = np.zeros(4 * self.nb)
                coords[k * self.nb + e] = 1.0
                ops.append((assemble_psi(*self._args, *self.to_mats(coords)) - self.base).ravel())
        self.ops = np.array(ops)

    def to_mats(self, v) -> list[np.ndarray]:
        mats = []
        i, j = self.iu
        off = i != j
        for k in range(4):
            c = np.asarray(v[k * self.nb:(k + 1) * self.nb], dtype=float)
            M = np.zeros((self.N, self.N))
            M[i, j] = np.where(off, c / math.sqrt(2.0), c)
            M = M + np.triu(M, 1).T
            mats.append(M)
        return mats

    def to_vec(self, Pz, Pe, Wz, We) -> np.ndarray:
        i, j = self.iu
        scale = np.where(i != j, math.sqrt(2.0), 1.0)
        return np.concatenate([np.asarray(M, dtype=float)[i, j] * scale for M in (Pz, Pe, Wz, We)])

    def __call__(self, v) -> np.ndarray:
        return self.base + (v @ self.ops).reshape(self.n, self.n)

    def lambda_max(self, v) -> float:
        return float(np.linalg.eigvalsh(self(v))[-1])

    def adjoint(self, G) -> np.ndarray:
        """Gradient of ``<G, Psi(v)>`` with respect to ``v``."""
        return self.ops @ np.asarray(G).ravel()

    def project(self, v, floor: float = PD_FLOOR) -> np.ndarray:
        stack = np.array(self.to_mats(v))
        w, U = np.linalg.eigh(stack)
        clipped = (U * np.maximum(w, floor)[:, None, :]) @ np.swapaxes(U, 1, 2)
        return self.to_vec(*clipped)


@dataclass(frozen=True)
class SampledCert:
    """Positive-definite ``P_z, P_e, W_z, W_e`` with ``lambda_max(Psi) <= 1e-8``."""

    Pz: np.ndarray = field(repr=False)
    Pe: np.ndarray = field(repr=False)
    Wz: np.ndarray = field(repr=False)
    We: np.ndarray = field(repr=False)
    h: float
    lambda_max: float
    stage: int
    iterations: int

    def min_eigenvalues(self) -> dict[str, float]:
        return {name: float(np.linalg.eigvalsh(M)[0])
                for name, M in (("P_z", self.Pz), ("P_e", self.Pe), ("W_z", self.Wz), ("W_e", self.We))}


def validate_certificate(cert: SampledCert, sys: ModalSystem, K, L, X, gamma: float,
                         sigma: float) -> tuple[bool, float]:
    """Rebuild ``Psi`` from scratch at the certified variables and re-check it."""
    lam = float(np.linalg.eigvalsh(
        assemble_psi(sys, K, L, X, gamma, sigma, cert.h, cert.Pz, cert.Pe, cert.Wz, cert.We)
    )[-1])
    pd = all(m >= PD_FLOOR * (1 - 1e-6) for m in cert.min_eigenvalues().values())
    return (lam <= PSI_TOL and pd), lam


def _grid_search(pm: PsiMap, P1, P2):
    N = pm.N
    I = np.eye(N)
    Z = np.zeros((N, N))
    c0 = pm(pm.to_vec(P1, P2, Z, Z))
    da = pm(pm.to_vec(Z, Z, I, Z)) - pm.base
    db = pm(pm.to_vec(Z, Z, Z, I)) - pm.base
    a, b = np.meshgrid(GRID, GRID, indexing="ij")
    stack = c0 + a.ravel()[:, None, None] * da + b.ravel()[:, None, None] * db
    lam = np.linalg.eigvalsh(stack)[:, -1]
    k = int(np.argmin(lam))
    return float(lam[k]), float(a.ravel()[k]), float(b.ravel()[k])


def _polyak(pm: PsiMap, v, budget: int, target: float = POLYAK_TARGET):
    best_f, best_v = np.inf, v
    it = 0
    for it in range(1, budget + 1):
        w, U = np.linalg.eigh(pm(v))
        f = w[-1]
        if f < best_f:
            best_f, best_v = f, v
        if f <= target:
            break
        u = U[:, -1]
        g = pm.adjoint(np.outer(u, u))
        gg = g @ g
        if gg == 0:
            break
        v = pm.project(v - ((f - target) / gg) * g)
    return float(best_f), best_v, it


def feasibility_search(sys: ModalSystem, K, L, X, Y, gamma: float, sigma: float, h: float,
                       budget: int = DEFAULT_BUDGET,
                       init: SampledCert | None = None) -> SampledCert | None:
    """Look for ``P_z, P_e, W_z, W_e > 0`` with ``Psi <= 0`` at sampling bound ``h``.

    Stage 1 scans ``P_z = X``, ``P_e = Y``, ``W_z = a I``, ``W_e = b I`` over a
    60 x 60 log grid.  If that fails, stage 2 runs projected subgradient
    descent on ``lambda_max(Psi)`` with Polyak steps, starting from the best
    grid point (or ``init`` when it is better).
    """
    pm = PsiMap(sys, K, L, X, gamma, sigma, h)
    Pz0, Pe0 = (pm.to_mats(pm.project(pm.to_vec(X, Y, np.eye(sys.N), np.eye(sys.N))))[:2])
    f, a, b = _grid_search(pm, Pz0, Pe0)
    v = pm.to_vec(Pz0, Pe0, a * np.eye(sys.N), b * np.eye(sys.N))
    stage, iters = 1, 0
    if f > PSI_TOL:
        if init is not None:
            v_init = pm.to_vec(init.Pz, init.Pe, init.Wz, init.We)
            f_init = pm.lambda_max(v_init)
            if f_init < f:
                f, v = f_init, v_init
        stage = 2
        f, v, iters = _polyak(pm, v, budget)
    if f > PSI_TOL:
        log.debug("h=%g: no certificate (best lambda_max %.3e after %d steps)", h, f, iters)
        return None
    Pz, Pe, Wz, We = pm.to_mats(v)
    cert = SampledCert(Pz, Pe, Wz, We, float(h), f, stage, iters)
    ok, lam = validate_certificate(cert, sys, K, L, X, gamma, sigma)
    if not ok:
        log.debug("h=%g: candidate failed re-validation (lambda_max %.3e)", h, lam)
        return None
    return SampledCert(Pz, Pe, Wz, We, float(h), lam, stage, iters)


@dataclass(frozen=True)
class SamplingBound:
    h: float
    certificate: SampledCert | None
    probes: int
    message: str = ""


def max_h(sys: ModalSystem, K, L, X, Y, gamma: float, sigma: float, h_hi: float = 0.5,
          tol: float = 1e-3, budget: int = DEFAULT_BUDGET) -> SamplingBound:
    """Largest certified sampling bound on ``[0, h_hi]``, by bisection to ``tol``.

    Certified feasibility is assumed monotone in ``h``.
    """
    probes = 1
    cert = feasibility_search(sys, K, L, X, Y, gamma, sigma, tol, budget)
    if cert is None:
        msg = f"no certificate even at h = tol = {tol:g}"
        log.warning(msg)
        return SamplingBound(0.0, None, probes, msg)
    probes += 1
    top = feasibility_search(sys, K, L, X, Y, gamma, sigma, h_hi, budget, init=cert)
    if top is not None:
        return SamplingBound(h_hi, top, probes, "upper end of the bracket is certified; raise h_hi")
    lo, hi = tol, h_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        probes += 1
        c = feasibility_search(sys, K, L, X, Y, gamma, sigma, mid, budget, init=cert)
        if c is None:
            hi = mid
        else:
            lo, cert = mid, c
    return SamplingBound(lo, cert, probes)
