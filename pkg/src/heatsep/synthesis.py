"""End-to-end design pipelines built on the residue gain and Riccati solver."""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .modal import ModeCountError, PlantParams, build_modal_system, min_modes
from .residue_gain import HARMONIC, SOBOLEV, GainBreakdown, residue_gain
from .riccati import SynthesisResult, synthesize_gains

log = logging.getLogger(__name__)

N_SCAN_CAP = 64
WORKERS_ENV = "HEATSEP_MAX_WORKERS"


@dataclass(frozen=True)
class FeasibilityReport:
    params: PlantParams
    N: int
    gamma_method: str
    gain: GainBreakdown
    result: SynthesisResult

    @property
    def feasible(self) -> bool:
        return self.result.feasible

    @property
    def reason(self) -> str:
        return self.result.reason


def synthesize(params: PlantParams, N: int, method: str = HARMONIC,
               allow_psd: bool = True) -> FeasibilityReport:
    """Residue gain, both Riccati equations and the coupling test for ``N`` modes."""
    sys = build_modal_system(params, N)
    gain = residue_gain(sys.q, params.sigma, N, method)
    result = synthesize_gains(sys, params.sigma, gain.gamma, allow_psd=allow_psd)
    return FeasibilityReport(params, N, method, gain, result)


def is_feasible(q: float, sigma: float, N: int, method: str = HARMONIC, alpha: float = 0.0) -> bool:
    try:
        return synthesize(PlantParams(q, sigma, alpha), N, method).feasible
    except ModeCountError:
        return False


def max_sigma(q: float, N: int, tol: float = 1e-3, method: str = HARMONIC,
              alpha: float = 0.0, paranoid: bool = False) -> float:
    """Largest Lipschitz constant for which synthesis succeeds, by bisection.

    Feasibility is assumed monotone in ``sigma``; ``paranoid`` re-checks ten
    interior points and warns if any of them fails.
    """
    q_eff = q + alpha
    if N * N <= q_eff:
        raise ModeCountError(f"N={N} violates N^2 > q even for sigma = 0")
    if not is_feasible(q, tol, N, method, alpha):
        log.warning("no feasible sigma >= tol=%g for q=%g, N=%d", tol, q, N)
        return 0.0
    lo, hi = tol, N * N - q_eff
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_feasible(q, mid, N, method, alpha):
            lo = mid
        else:
            hi = mid
    if paranoid:
        bad = [s for s in np.linspace(0.0, lo, 12)[1:-1] if not is_feasible(q, s, N, method, alpha)]
        if bad:
            warnings.warn(
                f"feasibility is not monotone in sigma for q={q}, N={N}: infeasible at {bad}",
                RuntimeWarning,
                stacklevel=2,
            )
    return lo


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _sigma_row(args):
    q, N, tol, method = args
    s = max_sigma(q, N, tol, method)
    return N, s, residue_gain(q, s, N, method).gamma


def sigma_table(q: float, N_max: int, tol: float = 1e-3, method: str = HARMONIC,
                N_min: int = 1) -> list[tuple[int, float, float]]:
    """Rows ``(N, sigma_max, gamma)`` with gamma evaluated at ``sigma_max``.

    Rows run in parallel when ``HEATSEP_MAX_WORKERS`` is above one.
    """
    jobs = [(q, N, tol, method) for N in range(max(N_min, min_modes(PlantParams(q))), N_max + 1)]
    workers = min(_max_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sigma_row, jobs))
    return [_sigma_row(j) for j in jobs]


def gamma_curve(q: float, sigma: float, N_values) -> list[tuple[int, float, float]]:
    """Rows ``(N, gamma_harmonic, gamma_sobolev)``."""
    return [
        (int(N), residue_gain(q, sigma, int(N), HARMONIC).gamma,
         residue_gain(q, sigma, int(N), SOBOLEV).gamma)
        for N in N_values
    ]


def min_feasible_N(q: float, sigma: float, method: str = HARMONIC, alpha: float = 0.0,
                   cap: int = N_SCAN_CAP) -> int:
    """Smallest mode count with a feasible synthesis (linear scan up to ``cap``)."""
    params = PlantParams(q, sigma, alpha)
    for N in range(min_modes(params), cap + 1):
        if synthesize(params, N, method).feasible:
            return N
    raise RuntimeError(f"no feasible N <= {cap} for q={q}, sigma={sigma}, method={method}")


def stability_constant(X, Y, gamma: float) -> float:
    """Overshoot bound ``M = 2 c2 / c1`` of the closed loop.

    ``c1``/``c2`` are the smallest/largest of ``eig(X)``, ``eig(Y)`` and
    ``1/gamma``.
    """
    wx = np.linalg.eigvalsh(np.asarray(X, dtype=float))
    wy = np.linalg.eigvalsh(np.asarray(Y, dtype=float))
    if wx[0] <= 0 or wy[0] <= 0:
        raise ValueError("X and Y must be positive definite")
    c1 = min(wx[0], wy[0], 1.0 / gamma)
    c2 = max(wx[-1], wy[-1], 1.0 / gamma)
    return 2.0 * c2 / c1


__all__ = [
    "FeasibilityReport", "HARMONIC", "SOBOLEV", "synthesize", "is_feasible", "max_sigma",
    "sigma_table", "gamma_curve", "min_feasible_N", "stability_constant",
]
