"""Spectral Galerkin simulation of the closed loop.

The plant is integrated on ``M`` cosine modes,

    z_n' = (q - n^2) z_n + b_n u + f_n,    y = sum_{n<M} c_n z_n,

with the saturating reaction ``f(z) = sigma z / (1 + sigma |z|)`` evaluated
pointwise on a DCT-I grid.  The observer runs on the first ``N`` modes,

    zhat' = (A + gamma sigma X) zhat + B u - L (C zhat - y),

and the input is ``u = -K zhat`` either continuously (``h = 0``) or held
constant between sampling instants ``t_k = k h``.  Time stepping is
classical RK4 with a fixed step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .modal import ModalSystem, cosine_grid, eigenfunction_matrix, eigenvalues, input_coefficients, \
    output_coefficients
from .riccati import SynthesisResult

SNAPSHOT_POINTS = 101
TRACE_SAMPLES = 2000


class StabilityGuardError(ValueError):
    """``dt * lambda_{M-1} > 1``: the explicit step is too large for the fastest mode."""


class SimulationDiverged(RuntimeError):
    def __init__(self, t_last: float):
        super().__init__(f"non-finite state; last finite sample at t = {t_last:g}")
        self.t_last = t_last


def cubic_ic(x):
    """``x^3 - (3 pi / 2) x^2``, which has zero slope at both ends."""
    x = np.asarray(x, dtype=float)
    return x ** 3 - 1.5 * math.pi * x ** 2


@dataclass(frozen=True)
class SimConfig:
    """Discretization and scenario settings.

    ``ic`` is ``"cubic"``, a callable of ``x`` or an array of ``P`` samples on
    the quadrature grid.  ``h = 0`` means continuous input.
    """

    M: int = 64
    dt: float = 1e-4
    T: float = 20.0
    h: float = 0.0
    P: int = 512
    ic: str | Callable | np.ndarray = "cubic"
    snapshot_times: tuple[float, ...] = ()
    feedback: bool = True

    def validate(self, N: int) -> None:
        if self.M <= N:
            raise ValueError(f"plant truncation M={self.M} must exceed the design order N={N}")
        if not (self.dt > 0 and self.T >= 0):
            raise ValueError("need dt > 0 and T >= 0")
        lam_top = (self.M - 1) ** 2
        if self.dt * lam_top > 1.0:
            raise StabilityGuardError(
                f"dt * lambda_(M-1) = {self.dt * lam_top:g} exceeds 1; reduce dt or M"
            )
        if self.P < 2 * self.M:
            raise ValueError(f"P={self.P} < 2M={2 * self.M} risks aliasing")
        if self.P % 2:
            raise ValueError(f"P={self.P} must be even (mirror-symmetric grid)")
        if self.h < 0:
            raise ValueError("h must be >= 0")
        if self.h > 0:
            k = round(self.h / self.dt)
            if k < 1 or abs(k * self.dt - self.h) > 1e-9 * self.h:
                raise ValueError(f"h={self.h:g} must be a positive multiple of dt={self.dt:g}")


@dataclass
class SimTrace:
    t: np.ndarray
    state_norm: np.ndarray
    err_norm: np.ndarray
    u: np.ndarray
    y: np.ndarray
    zeta: np.ndarray
    N: int
    coeffs: np.ndarray | None = field(default=None, repr=False)
    zhat: np.ndarray | None = field(default=None, repr=False)
    snapshots: dict = field(default_factory=dict, repr=False)
    V: np.ndarray | None = field(default=None, repr=False)


def _ic_samples(ic, x: np.ndarray) -> np.ndarray:
    if isinstance(ic, str):
        if ic != "cubic":
            raise ValueError(f"unknown built-in initial condition {ic!r}")
        return cubic_ic(x)
    if callable(ic):
        return np.broadcast_to(np.asarray(ic(x), dtype=float), x.shape)
    vals = np.asarray(ic, dtype=float)
    if vals.shape != x.shape:
        raise ValueError(f"tabulated initial condition needs {x.size} samples, got {vals.shape}")
    return vals


def project_ic(ic, M: int, P: int) -> np.ndarray:
    """Cosine coefficients ``z_n(0)``, ``n < M``, by trapezoid quadrature on ``P`` points."""
    if P < 2 * M:
        raise ValueError(f"P={P} < 2M={2 * M} risks aliasing")
    x, w = cosine_grid(P)
    return eigenfunction_matrix(x, M).T @ (w * _ic_samples(ic, x))


class _Projector:
    """Grid round trip ``coeffs -> f(z(x_j)) -> modal coefficients`` (plain numpy)."""

    def __init__(self, M: int, P: int):
        x, w = cosine_grid(P)
        self.Phi = eigenfunction_matrix(x, M)
        self.PhiTw = (self.Phi * w[:, None]).T

    def __call__(self, coeffs, sigma):
        if sigma == 0:
            return np.zeros_like(coeffs)
        z = self.Phi @ coeffs
        return self.PhiTw @ (sigma * z / (1.0 + sigma * np.abs(z)))


def nonlinearity_modal(coeffs, sigma: float, P: int) -> np.ndarray:
    """Modal coefficients of ``sigma z / (1 + sigma |z|)`` for the field with ``coeffs``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    coeffs = np.asarray(coeffs, dtype=float)
    return _Projector(coeffs.size, P)(coeffs, sigma)


def reconstruct_field(coeffs, xs) -> np.ndarray:
    """Truncated cosine series evaluated at ``xs``."""
    coeffs = np.asarray(coeffs, dtype=float)
    return eigenfunction_matrix(xs, coeffs.size) @ coeffs


# Reassociation lets the inner reductions vectorize; NaN/inf semantics are
# kept so divergence is still detected.  Results are deterministic for a
# given machine and build.
_FASTMATH = {"reassoc", "contract", "nsz", "arcp"}


@njit(cache=True, fastmath=_FASTMATH)
def _rhs(s, u, ap, b, c, Lo, Ao, kc, Ce, Co, CeTw, CoTw, sigma, out, S, D):
    M = ap.shape[0]
    N = Ao.shape[0]
    # plant: diagonal modes driven by u (and -K zhat when kc is set)
    v = u
    for i in range(N):
        v -= kc[i] * s[M + i]
    y = 0.0
    for i in range(M):
        out[i] = ap[i] * s[i] + b[i] * v
        y += c[i] * s[i]
    # observer: Ao zhat + L y + B v
    for i in range(N):
        acc = Lo[i] * y + b[i] * v
        for k in range(N):
            acc += Ao[i, k] * s[M + k]
        out[M + i] = acc
    if sigma == 0.0:
        return
    half, ne = Ce.shape
    no = Co.shape[1]
    # grid is mirror-symmetric about pi/2: even modes are symmetric, odd
    # modes antisymmetric, so each half-grid row gives two field values
    for j in range(half):
        E = 0.0
        for k in range(ne):
            E += Ce[j, k] * s[2 * k]
        O = 0.0
        for k in range(no):
            O += Co[j, k] * s[2 * k + 1]
        zt = E + O
        zb = E - O
        ft = zt / (1.0 + sigma * abs(zt))
        fb = zb / (1.0 + sigma * abs(zb))
        S[j] = ft + fb
        D[j] = ft - fb
    for k in range(ne):
        acc = 0.0
        for j in range(half):
            acc += CeTw[k, j] * S[j]
        out[2 * k] += sigma * acc
    for k in range(no):
        acc = 0.0
        for j in range(half):
            acc += CoTw[k, j] * D[j]
        out[2 * k + 1] += sigma * acc


@njit(cache=True, fastmath=_FASTMATH)
def _integrate(s0, ap, b, c, Lo, Ao, k_row, Ce, Co, CeTw, CoTw, sigma, dt, n_steps, hold,
               rec_steps):
    """Fixed-step RK4; returns states and inputs at ``rec_steps`` and the count recorded."""
    n = s0.shape[0]
    M = ap.shape[0]
    N = n - M
    n_rec = rec_steps.shape[0]
    states = np.empty((n_rec, n))
    inputs = np.empty(n_rec)
    s = s0.copy()
    tmp = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    half = Ce.shape[0]
    S = np.empty(half)
    D = np.empty(half)
    kc = k_row if hold == 0 else np.zeros(N)
    u = 0.0
    ptr = 0
    for step in range(n_steps + 1):
        uk = 0.0
        for i in range(N):
            uk -= k_row[i] * s[M + i]
        if hold == 0 or step % hold == 0:
            u = uk
        if ptr < n_rec and rec_steps[ptr] == step:
            for i in range(n):
                if not np.isfinite(s[i]):
                    return states, inputs, ptr
                states[ptr, i] = s[i]
            inputs[ptr] = u
            ptr += 1
        if step == n_steps:
            break
        ug = 0.0 if hold == 0 else u
        _rhs(s, ug, ap, b, c, Lo, Ao, kc, Ce, Co, CeTw, CoTw, sigma, k1, S, D)
        for i in range(n):
            tmp[i] = s[i] + 0.5 * dt * k1[i]
        _rhs(tmp, ug, ap, b, c, Lo, Ao, kc, Ce, Co, CeTw, CoTw, sigma, k2, S, D)
        for i in range(n):
            tmp[i] = s[i] + 0.5 * dt * k2[i]
        _rhs(tmp, ug, ap, b, c, Lo, Ao, kc, Ce, Co, CeTw, CoTw, sigma, k3, S, D)
        for i in range(n):
            tmp[i] = s[i] + dt * k3[i]
        _rhs(tmp, ug, ap, b, c, Lo, Ao, kc, Ce, Co, CeTw, CoTw, sigma, k4, S, D)
        for i in range(n):
            s[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return states, inputs, ptr


def simulate_closed_loop(sys: ModalSystem, gains: SynthesisResult, cfg: SimConfig) -> SimTrace:
    """Integrate plant and observer from ``z(., 0)`` given by ``cfg.ic`` and ``zhat(0) = 0``.

    The trace is sampled every ``max(dt, T/2000)`` plus the final time and
    any requested snapshot times, and always carries per-mode coefficients.
    """
    N = sys.N
    cfg.validate(N)
    if cfg.feedback and not gains.feasible:
        raise ValueError(f"gains are not feasible ({gains.reason})")
    M, dt = cfg.M, cfg.dt
    sigma = float(gains.sigma)
    b = input_coefficients(M)
    c = output_coefficients(M)
    ap = sys.q - eigenvalues(np.arange(M))

    if cfg.feedback:
        K = np.asarray(gains.K, dtype=float).reshape(1, N)
        L = np.asarray(gains.L, dtype=float).reshape(N, 1)
        Aobs = np.asarray(sys.A) + gains.gamma * sigma * np.asarray(gains.X)
    else:
        K = np.zeros((1, N))
        L = np.zeros((N, 1))
        Aobs = np.asarray(sys.A)

    # s = [z (M); zhat (N)]; observer matrix without the input and output terms
    Ao = np.ascontiguousarray(Aobs - L @ np.asarray(sys.C))
    Lo = np.ascontiguousarray(L[:, 0])
    continuous = cfg.h == 0

    x, w = cosine_grid(cfg.P)
    half = cfg.P // 2
    Phi = eigenfunction_matrix(x[:half], M)
    Ce = np.ascontiguousarray(Phi[:, 0::2])
    Co = np.ascontiguousarray(Phi[:, 1::2])
    CeTw = np.ascontiguousarray((Ce * w[:half, None]).T)
    CoTw = np.ascontiguousarray((Co * w[:half, None]).T)

    n_steps = int(round(cfg.T / dt))
    stride = max(1, int(round(max(dt, cfg.T / TRACE_SAMPLES) / dt)))
    snap_steps = {min(n_steps, int(round(ts / dt))): float(ts) for ts in cfg.snapshot_times}
    rec = np.unique(np.concatenate([np.arange(0, n_steps + 1, stride), [n_steps],
                                    np.fromiter(snap_steps, dtype=np.int64, count=len(snap_steps))]))
    rec = rec.astype(np.int64)
    hold = int(round(cfg.h / dt)) if not continuous else 0

    s0 = np.zeros(M + N)
    s0[:M] = project_ic(cfg.ic, M, cfg.P)
    states, inputs, n_ok = _integrate(s0, ap, b, c, Lo, Ao, K[0].copy(), Ce, Co, CeTw, CoTw, sigma,
                                      dt, n_steps, hold, rec)
    if n_ok < rec.size:
        raise SimulationDiverged(float(rec[n_ok - 1] * dt) if n_ok else 0.0)

    on_trace = (rec % stride == 0) | (rec == n_steps)
    z = states[on_trace, :M]
    zhat = states[on_trace, M:]
    xs = np.linspace(0.0, math.pi, SNAPSHOT_POINTS)
    snaps = {}
    for step, ts in sorted(snap_steps.items()):
        snaps[ts] = reconstruct_field(states[np.searchsorted(rec, step), :M], xs)
    if snaps:
        snaps["x"] = xs
    return SimTrace(
        t=rec[on_trace] * dt,
        state_norm=np.sqrt(np.sum(z * z, axis=1)),
        err_norm=np.linalg.norm(zhat - z[:, :N], axis=1),
        u=inputs[on_trace],
        y=z @ c,
        zeta=z[:, N:] @ c[N:],
        N=N,
        coeffs=z,
        zhat=zhat,
        snapshots=snaps,
    )


def lyapunov_trace(trace: SimTrace, X, Y, gamma: float, N: int | None = None) -> np.ndarray:
    """``V = |z^N|_X^2 + |e^N|_Y^2 + gamma^-1 sum_{n>=N} z_n^2`` along the trace."""
    if trace.coeffs is None or trace.zhat is None:
        raise ValueError("trace has no per-mode data")
    N = trace.N if N is None else N
    z = trace.coeffs
    zN = z[:, :N]
    e = trace.zhat - zN
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    V = (np.einsum("ti,ij,tj->t", zN, X, zN) + np.einsum("ti,ij,tj->t", e, Y, e)
         + np.sum(z[:, N:] ** 2, axis=1) / gamma)
    trace.V = V
    return V
