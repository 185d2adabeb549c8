"""Neumann-Laplacian spectral data and the truncated N-mode plant.

The plant is the heat equation on [0, pi] with reaction coefficient ``q``,
Neumann actuation at ``x = pi`` and a point measurement at ``x = 0``.  Its
modal coordinates use the cosine eigenfunctions

    phi_0 = 1/sqrt(pi),    phi_n = sqrt(2/pi) cos(n x),  n >= 1,

with eigenvalues ``lambda_n = n**2``.  Mode indices are zero-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT_1_PI = 1.0 / math.sqrt(math.pi)
SQRT_2_PI = math.sqrt(2.0 / math.pi)


class ModeCountError(ValueError):
    """Raised when ``N**2 > q + sigma`` fails, i.e. an unstable mode is left out."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PlantParams:
    """Reaction coefficient, Lipschitz constant and target decay rate.

    ``alpha`` is folded into the reaction once: every downstream formula only
    sees ``q_eff = q + alpha``.
    """

    q: float
    sigma: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.q > 0 and math.isfinite(self.q)):
            raise ValueError(f"q must be positive and finite, got {self.q!r}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be >= 0, got {self.sigma!r}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be >= 0, got {self.alpha!r}")

    @property
    def q_eff(self) -> float:
        return self.q + self.alpha


def eigenvalues(n) -> np.ndarray:
    n = np.asarray(n)
    return (n * n).astype(float)


def input_coefficients(N: int) -> np.ndarray:
    """``b_n = phi_n(pi)`` for ``n = 0..N-1``."""
    n = np.arange(N)
    return np.where(n == 0, SQRT_1_PI, np.where(n % 2 == 0, 1.0, -1.0) * SQRT_2_PI)


def output_coefficients(N: int) -> np.ndarray:
    """``c_n = phi_n(0)`` for ``n = 0..N-1``."""
    n = np.arange(N)
    return np.where(n == 0, SQRT_1_PI, SQRT_2_PI)


def min_modes(params: PlantParams) -> int:
    """Smallest ``N`` with ``N**2 > q + alpha + sigma``."""
    bound = params.q_eff + params.sigma
    return math.isqrt(math.floor(bound)) + 1


@dataclass(frozen=True)
class ModalSystem:
    """First ``N`` modes: ``z' = A z + B u``, ``y = C z + residue``.

    ``q`` is the effective reaction coefficient (decay rate already folded
    in).  Arrays are read-only.
    """

    N: int
    q: float
    lam: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)

    @classmethod
    def from_reaction(cls, q: float, N: int) -> "ModalSystem":
        """Build the matrices for any ``q >= 0`` without the mode-count check."""
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        if not q >= 0:
            raise ValueError(f"q must be >= 0, got {q!r}")
        lam = eigenvalues(np.arange(N))
        b = input_coefficients(N)
        c = output_coefficients(N)
        return cls(
            N=N,
            q=float(q),
            lam=_frozen(lam),
            b=_frozen(b),
            c=_frozen(c),
            A=_frozen(np.diag(q - lam)),
            B=_frozen(b[:, None]),
            C=_frozen(c[None, :]),
        )

    def with_reaction(self, q: float) -> "ModalSystem":
        """Same modes, different reaction coefficient (used for reduced-q LMIs)."""
        return ModalSystem.from_reaction(q, self.N)


def build_modal_system(params: PlantParams, N: int) -> ModalSystem:
    """Truncated plant for ``params``; rejects ``N`` below :func:`min_modes`."""
    N_min = min_modes(params)
    if N < N_min:
        raise ModeCountError(
            f"N={N} violates N^2 > q + sigma (q_eff={params.q_eff:g}, "
            f"sigma={params.sigma:g}); need N >= {N_min}"
        )
    return ModalSystem.from_reaction(params.q_eff, N)


def _check_positions(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > math.pi):
        raise ValueError("positions must lie in [0, pi]")
    return x


def eval_eigenfunction(n: int, x):
    """Value of ``phi_n`` at ``x`` (scalar or array) in ``[0, pi]``."""
    if n < 0:
        raise ValueError(f"mode index must be >= 0, got {n}")
    xa = _check_positions(x)
    if n == 0:
        out = np.full(xa.shape, SQRT_1_PI)
    else:
        out = SQRT_2_PI * np.cos(n * xa)
    return float(out) if out.ndim == 0 else out


def eigenfunction_matrix(x, M: int) -> np.ndarray:
    """``Phi[j, n] = phi_n(x_j)`` for ``n < M``."""
    xa = _check_positions(x)
    n = np.arange(M)
    scale = np.where(n == 0, SQRT_1_PI, SQRT_2_PI)
    return scale * np.cos(np.outer(xa, n))


def cosine_grid(P: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform ``P``-point grid on [0, pi] with trapezoid (DCT-I) weights.

    On this grid the first ``P - 1`` eigenfunctions are exactly orthonormal.
    """
    if P < 2:
        raise ValueError("need at least two quadrature points")
    x = np.linspace(0.0, math.pi, P)
    w = np.full(P, math.pi / (P - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w
