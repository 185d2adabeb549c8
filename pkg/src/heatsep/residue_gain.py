"""Input-to-residue L2 gain of the neglected modes.

The residue ``zeta = sum_{n>=N} c_n z_n`` is bounded through the harmonic
inequality ``(sum z_n)^2 <= sum mu_n z_n^2``, valid for every summable
sequence exactly when ``sum 1/mu_n <= 1``.  The gain ``gamma`` is the
smallest value for which the weights ``mu_n = gamma (pi/2)(n^2 - q - sigma)``
still satisfy that condition:

    gamma = (2/pi) sum_{n>=N} 1 / (n^2 - q - sigma).

``gamma_harmonic`` evaluates the closed form obtained from the cotangent
expansion; ``gamma_harmonic_series`` sums the series directly with a
verified tail enclosure and serves as its oracle.  ``gamma_sobolev`` is the
more conservative baseline based on Sobolev's inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import zeta

from .modal import ModeCountError

_ZETA_EVEN = zeta(2.0 * np.arange(1, 41))

HARMONIC = "harmonic"
SOBOLEV = "sobolev"
METHODS = (HARMONIC, SOBOLEV)


def harmonic_bound_holds(z, mu, rtol: float = 1e-12) -> bool:
    """Check ``(sum z)^2 <= sum mu z^2`` up to a relative rounding allowance."""
    z = np.asarray(z, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if z.shape != mu.shape:
        raise ValueError(f"length mismatch: z{z.shape} vs mu{mu.shape}")
    if np.any(mu <= 0):
        raise ValueError("weights mu must be positive")
    lhs = math.fsum(z) ** 2
    rhs = math.fsum(mu * z * z)
    return lhs <= rhs + rtol * max(lhs, rhs)


def check_harmonic_condition(mu) -> bool:
    """True iff ``sum 1/mu <= 1``."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("weights mu must be positive")
    return math.fsum(1.0 / mu) <= 1.0


class SeriesBracket(NamedTuple):
    """Partial sum of a positive series and an enclosure of its full value."""

    partial: float
    lower: float
    upper: float

    @property
    def estimate(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def _tail_integral(s: float, M: float) -> float:
    """``int_M^inf dx / (x^2 - s)`` for ``M^2 > s``."""
    if s > 0:
        d = math.sqrt(s)
        return math.log1p(2.0 * d / (M - d)) / (2.0 * d)
    if s == 0:
        return 1.0 / M
    a = math.sqrt(-s)
    return math.atan(a / M) / a


def inverse_square_series(s: float, N: int, terms: int) -> SeriesBracket:
    """Enclose ``sum_{n>=N} 1/(n^2 - s)`` using ``terms`` explicit terms.

    The neglected tail is bracketed by ``[I, I + g(M)]`` with ``I`` the tail
    integral from ``M = N + terms`` and ``g(M)`` its first term, since the
    summand decreases for ``n^2 > s``.
    """
    if terms < 1:
        raise ValueError("terms must be >= 1")
    if N * N <= s:
        raise ValueError(f"need N^2 > {s}, got N={N}")
    chunks = []
    chunk = 1 << 20
    for start in range(N + terms - 1, N - 1, -chunk):
        stop = max(N - 1, start - chunk)
        n = np.arange(start, stop, -1, dtype=float)
        chunks.append(math.fsum(1.0 / (n * n - s)))
    partial = math.fsum(chunks)
    M = float(N + terms)
    tail = _tail_integral(s, M)
    return SeriesBracket(partial, partial + tail, partial + tail + 1.0 / (M * M - s))


def _check_modes(q: float, sigma: float, N: int) -> float:
    s = q + sigma
    if not s >= 0:
        raise ValueError(f"q + sigma must be >= 0, got {s!r}")
    if N < 1 or N * N <= s:
        raise ModeCountError(
            f"N={N} violates N^2 > q + sigma = {s:g}"
        )
    return s


def gamma_harmonic_series(q: float, sigma: float, N: int, terms: int = 10**6) -> SeriesBracket:
    """Direct summation of the residue-gain series, scaled by ``2/pi``."""
    s = _check_modes(q, sigma, N)
    br = inverse_square_series(s, N, terms)
    k = 2.0 / math.pi
    return SeriesBracket(k * br.partial, k * br.lower, k * br.upper)


def _even_zeta_series(eps: float) -> float:
    """``sum_{k>=1} zeta(2k) eps^(2k-2)`` for ``|eps| <= 1/2``."""
    powers = eps * eps
    total = 0.0
    term = 1.0
    for zk in _ZETA_EVEN:
        total += zk * term
        term *= powers
        if term < 1e-18:
            break
    return total


def _gamma_closed_form(s: float, N: int) -> float:
    # (1 - pi d cot(pi d) + 2 sum_{n<N} d^2/(d^2 - n^2)) / (pi d^2) with the
    # cotangent pole at the nearest integer m cancelled analytically:
    # cot(pi eps) - 1/(pi eps) = -(2/pi) eps S(eps), S the even-zeta series.
    d = math.sqrt(s)
    m = int(round(d))
    eps = (s - m * m) / (d + m) if m else d  # d - m without cancellation
    n = np.arange(1, N, dtype=float)
    if m == 0:
        return (2.0 / math.pi) * (_even_zeta_series(d) + math.fsum(1.0 / (s - n * n)))
    others = n[n != m]
    parts = [1.0, 2.0 * d * eps * _even_zeta_series(eps)]
    if m <= N - 1:
        parts.append(d / (d + m))
    else:
        parts.append(-d / eps)
    parts.extend(2.0 * s / (s - others * others))
    return math.fsum(parts) / (math.pi * s)


@dataclass(frozen=True)
class GainBreakdown:
    """Residue gain with the weight schedule that produced it.

    ``Gamma`` is the Sobolev parameter (``None`` for the harmonic method).
    """

    gamma: float
    method: str
    N: int
    q: float
    sigma: float
    Gamma: float | None = None

    def mu(self, n) -> np.ndarray:
        """Weights ``mu_n`` for residual mode indices ``n >= N``."""
        n = np.asarray(n, dtype=float)
        if np.any(n < self.N):
            raise ValueError(f"weights are defined for n >= N={self.N}")
        if self.method == HARMONIC:
            return self.gamma * (math.pi / 2) * (n * n - self.q - self.sigma)
        G = self.Gamma
        return (math.pi / 2) * (1.0 / math.pi + G + n * n / G)

    @property
    def mu_rule(self) -> str:
        if self.method == HARMONIC:
            return f"mu_n = gamma*(pi/2)*(n^2 - {self.q + self.sigma:.12g}), n >= {self.N}"
        return f"mu_n = (pi/2)*(1/pi + {self.Gamma:g} + n^2/{self.Gamma:g}), n >= {self.N}"

    def inverse_weight_sum(self, terms: int = 10**6) -> SeriesBracket:
        """Enclosure of ``sum_{n>=N} 1/mu_n`` (the harmonic-condition sum)."""
        if self.method == HARMONIC:
            s = self.q + self.sigma
            k = 2.0 / (math.pi * self.gamma)
        else:
            G = self.Gamma
            s = -(G / math.pi + G * G)
            k = 2.0 * G / math.pi
        br = inverse_square_series(s, self.N, terms)
        return SeriesBracket(k * br.partial, k * br.lower, k * br.upper)


def gamma_harmonic(q: float, sigma: float, N: int) -> GainBreakdown:
    """Optimal residue gain from the harmonic inequality (closed form)."""
    s = _check_modes(q, sigma, N)
    return GainBreakdown(_gamma_closed_form(s, N), HARMONIC, N, float(q), float(sigma))


def gamma_sobolev(q: float, sigma: float, N: int) -> GainBreakdown:
    """Residue gain from Sobolev's inequality with ``Gamma = sqrt(lambda_N) = N``."""
    s = _check_modes(q, sigma, N)
    g = (2.0 * N + 1.0 / math.pi) / (N * N - s)
    return GainBreakdown(g, SOBOLEV, N, float(q), float(sigma), Gamma=float(N))


def residue_gain(q: float, sigma: float, N: int, method: str = HARMONIC) -> GainBreakdown:
    if method == HARMONIC:
        return gamma_harmonic(q, sigma, N)
    if method == SOBOLEV:
        return gamma_sobolev(q, sigma, N)
    raise ValueError(f"unknown gain method {method!r}; expected one of {METHODS}")
