"""Time evolution under piecewise-constant Hamiltonians.

The production path is a Lanczos (Hermitian Krylov) approximation of
``exp(-i h dt) psi`` with adaptive substeps; the dense eigendecomposition
path exists as an oracle for small systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm

from .ladder import DriveProtocol, LadderConfig, build_h0a, mirror_transform, resonant_propagators
from .pauli import DenseSizeError, OperatorSum, StateVector, to_dense

DENSE_ORACLE_MAX_QUBITS = 12


class KrylovConvergenceError(RuntimeError):
    """The Lanczos projection failed to meet tolerance even for a tiny substep."""


@dataclass(frozen=True)
class KrylovSettings:
    max_subspace: int = 30
    tolerance: float = 1e-12
    max_substep: float = math.inf
    min_substep: float = 1e-12

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_subspace < 2:
            raise ValueError("max_subspace must be at least 2")
        if not self.max_substep > 0:
            raise ValueError("max_substep must be positive")


def _tridiag_eig(alpha, beta):
    if len(alpha) == 1:
        return alpha.copy(), np.ones((1, 1))
    return eigh_tridiagonal(alpha, beta)


def _lanczos(matvec, v: np.ndarray, m_max: int, dt: float = 0.0, tol: float = 0.0):
    """Orthonormal Krylov basis with full reorthogonalisation.

    Returns ``(Q, alpha, beta, beta_last)`` where ``beta_last`` is the
    residual coupling out of the subspace (0 on invariant-subspace breakdown).
    With ``tol > 0`` the iteration stops early once the error estimate for
    a step ``dt`` is below ``tol``.
    """
    n = v.shape[0]
    Q = np.empty((m_max, n), dtype=np.complex128)
    alpha = np.empty(m_max)
    beta = np.empty(m_max)
    Q[0] = v
    scale = 0.0
    for j in range(m_max):
        w = matvec(Q[j])
        alpha[j] = np.vdot(Q[j], w).real
        w -= alpha[j] * Q[j]
        if j:
            w -= beta[j - 1] * Q[j - 1]
        # two passes of classical Gram-Schmidt keep the basis orthogonal to ~eps
        for _ in range(2):
            w -= Q[: j + 1].T @ (Q[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        scale = max(scale, abs(alpha[j]), b)
        if b <= 1e-13 * max(scale, 1.0):
            return Q[: j + 1], alpha[: j + 1], beta[:j], 0.0
        if j == m_max - 1:
            return Q[: j + 1], alpha[: j + 1], beta[:j], b
        if tol > 0 and j >= 3:
            evals, evecs = _tridiag_eig(alpha[: j + 1], beta[:j])
            if b * abs(_krylov_coeffs(evals, evecs, dt)[-1]) <= tol:
                return Q[: j + 1], alpha[: j + 1], beta[:j], b
        Q[j + 1] = w / b
    raise AssertionError("unreachable")


def _krylov_coeffs(evals, evecs, dt):
    return evecs @ (np.exp(-1j * dt * evals) * evecs[0].conj())


def evolve_segment(psi, h: OperatorSum, dt: float, settings: KrylovSettings | None = None):
    """``exp(-i h dt) |psi>`` by Lanczos projection with adaptive substeps.

    Each substep is accepted when ``beta_m |e_m^T exp(-i T_m dt) e_1|`` is
    below ``settings.tolerance``; otherwise the substep is shortened on the
    same Krylov basis.  The result is renormalised to the input norm.
    """
    settings = settings or KrylovSettings()
    if dt < 0:
        raise ValueError("dt must be non-negative; use evolve_segment_signed for backward steps")
    return _evolve(psi, h, dt, settings)


def evolve_segment_signed(psi, h: OperatorSum, dt: float, settings: KrylovSettings | None = None):
    """As :func:`evolve_segment` but allows ``dt < 0`` (evolution under ``-h``)."""
    settings = settings or KrylovSettings()
    if dt < 0:
        return _evolve(psi, h * -1.0, -dt, settings)
    return _evolve(psi, h, dt, settings)


def _evolve(psi, h: OperatorSum, dt: float, settings: KrylovSettings):
    wrap = isinstance(psi, StateVector)
    v = np.array(psi.amps if wrap else psi, dtype=np.complex128)
    if v.shape[0] != 1 << h.n_sites:
        raise ValueError(f"state has {v.shape[0]} amplitudes, operator acts on {h.n_sites} qubits")
    norm0 = np.linalg.norm(v)
    if dt == 0 or norm0 == 0 or not h.terms:
        return StateVector(v, h.n_sites) if wrap else v
    matvec = h.compiled().matvec
    m_max = min(settings.max_subspace, v.shape[0])
    remaining = dt
    v = v / norm0
    while remaining > 0:
        step = min(remaining, settings.max_substep)
        Q, alpha, beta, resid = _lanczos(matvec, v, m_max, step, settings.tolerance)
        evals, evecs = _tridiag_eig(alpha, beta)
        while True:
            c = _krylov_coeffs(evals, evecs, step)
            err = resid * abs(c[-1])
            if err <= settings.tolerance:
                break
            step *= 0.5
            if step < settings.min_substep:
                raise KrylovConvergenceError(
                    f"Krylov error {err:.3e} above tolerance at substep {step:.3e}"
                )
        v = c @ Q
        v /= np.linalg.norm(v)
        remaining -= step
        if remaining < 1e-15 * dt:
            break
    v *= norm0
    return StateVector(v, h.n_sites) if wrap else v


def _dense_guard(n: int, limit: int = DENSE_ORACLE_MAX_QUBITS):
    if n > limit:
        raise DenseSizeError(f"dense oracle limited to {limit} qubits, got {n}")


def dense_oracle_evolve(psi, h: OperatorSum, dt: float):
    """Exact ``exp(-i h dt) |psi>`` via ``numpy.linalg.eigh``."""
    _dense_guard(h.n_sites)
    wrap = isinstance(psi, StateVector)
    v = np.asarray(psi.amps if wrap else psi, dtype=np.complex128)
    evals, evecs = np.linalg.eigh(to_dense(h))
    out = evecs @ (np.exp(-1j * dt * evals) * (evecs.conj().T @ v))
    return StateVector(out, h.n_sites) if wrap else out


class DenseSegmentCache:
    """Eigendecompositions of each segment, reused across periods."""

    def __init__(self, protocol: DriveProtocol):
        _dense_guard(protocol.n_sites)
        self.eig = [np.linalg.eigh(to_dense(s.hamiltonian)) for s in protocol.segments]

    def apply(self, k: int, v: np.ndarray, dt: float) -> np.ndarray:
        evals, evecs = self.eig[k]
        return evecs @ (np.exp(-1j * dt * evals) * (evecs.conj().T @ v))


@dataclass(frozen=True)
class Snapshot:
    m: int
    offset: float
    t: float
    psi: StateVector


def _plan(protocol: DriveProtocol, offsets: Sequence[float]):
    """Split one period into ``(segment, duration)`` pieces and sample points."""
    T = protocol.period
    bounds = protocol.boundaries
    tol = 1e-12 * T
    for s in offsets:
        if not -tol <= s < T - tol:
            raise ValueError(f"sample offset {s} outside [0, T)")
    if list(offsets) != sorted(offsets):
        raise ValueError("sample offsets must be sorted")
    cuts = sorted(set(bounds.tolist()) | set(float(s) for s in offsets))
    merged = []
    for c in cuts:
        if not merged or c - merged[-1] > tol:
            merged.append(c)
        elif c in bounds:
            merged[-1] = c  # prefer exact segment boundaries
    pieces = []
    sample_after = {}
    for a, b in zip(merged[:-1], merged[1:]):
        k = protocol.segment_at(0.5 * (a + b))
        pieces.append((k, b - a))
    for s in offsets:
        j = int(np.argmin([abs(c - s) for c in merged]))
        sample_after[j] = s  # sample taken after the first j pieces
    return pieces, sample_after


def evolve_protocol(
    psi0,
    protocol: DriveProtocol,
    n_periods: int,
    sample_offsets: Sequence[float] | None = None,
    settings: KrylovSettings | None = None,
    method: str = "krylov",
) -> Iterator[Snapshot]:
    """Yield snapshots at ``t = m T + s`` for ``m < n_periods`` and each offset.

    ``n_periods = 0`` yields only the initial state.  ``method`` is
    ``"krylov"`` or ``"dense"`` (exact, small systems only).
    """
    T = protocol.period
    if sample_offsets is None:
        sample_offsets = (0.0, 0.5 * T)
    psi = psi0 if isinstance(psi0, StateVector) else StateVector(psi0, protocol.n_sites)
    if n_periods == 0:
        yield Snapshot(0, 0.0, 0.0, psi)
        return
    settings = settings or KrylovSettings()
    pieces, sample_after = _plan(protocol, sample_offsets)
    cache = DenseSegmentCache(protocol) if method == "dense" else None
    v = psi.amps.copy()
    n = protocol.n_sites
    for m in range(n_periods):
        for j in range(len(pieces) + 1):
            if j in sample_after:
                s = sample_after[j]
                yield Snapshot(m, s, m * T + s, StateVector(v.copy(), n))
            if j == len(pieces):
                break
            k, dt = pieces[j]
            if cache is not None:
                v = cache.apply(k, v, dt)
            else:
                v = _evolve(v, protocol.segments[k].hamiltonian, dt, settings)


def u0_at(cfg: LadderConfig, t: float) -> np.ndarray:
    """Dense resonant-drive propagator ``U_0(t)`` for any ``t >= 0``.

    Beyond one period ``U_0(t + T) = U_0(t) U_0(T)``, with ``U_0(T)`` the raw
    (not phase-fixed) product of the two resonant pulses.
    """
    T, tau = cfg.period, cfg.tau
    n_full = int(math.floor(t / T + 1e-12))
    s = max(t - n_full * T, 0.0)
    h0a = to_dense(build_h0a(cfg))
    h0b = to_dense(mirror_transform(build_h0a(cfg), cfg.L))
    ua, ub = resonant_propagators(cfg)
    x_raw = ub @ ua
    if s <= tau * T:
        u = expm(-1j * s * h0a)
    elif s <= 0.5 * T:
        u = ua
    elif s <= 0.5 * T + tau * T:
        u = expm(-1j * (s - 0.5 * T) * h0b) @ ua
    else:
        u = x_raw
    return u @ np.linalg.matrix_power(x_raw, n_full) if n_full else u
