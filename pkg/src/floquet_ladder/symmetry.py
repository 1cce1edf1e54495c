"""Dynamical space-time symmetries of the drive and their interaction-picture images.

Relations between Hermitian operators are compared directly (conjugation
removes any phase of the symmetry element).  Relations between unitaries are
compared after optimal global-phase alignment, since the phases of ``X`` and
of projective elements are conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.linalg import expm
from scipy.stats import unitary_group

from .ladder import (
    DriveProtocol,
    LadderConfig,
    SymmetryError,
    build_mirror_unitary,
    build_protocol,
    build_x_operator,
)
from .observables import TrajectoryRecord, _pair_by_period
from .pauli import to_dense
from .propagator import u0_at
from .vanvleck import FourierTable, build_dn, fourier_table, kick_operator

UNITARY_TOL = 1e-12
RELATION_TOL = 1e-9
SAMPLES_PER_SEGMENT = 8


class AlignmentError(ValueError):
    """The protocol's segment grid is not mapped onto itself by the time shift."""


@dataclass(frozen=True, eq=False)
class SymmetryElement:
    kind: str
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("unitary", "antiunitary"):
            raise ValueError(f"kind must be 'unitary' or 'antiunitary', got {self.kind!r}")
        u = np.asarray(self.matrix, dtype=np.complex128)
        dev = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
        if dev > UNITARY_TOL:
            raise ValueError(f"matrix is not unitary (deviation {dev:.2e})")
        object.__setattr__(self, "matrix", u)

    def conjugate(self, h: np.ndarray) -> np.ndarray:
        """``g h g^{-1}``, with complex conjugation for antiunitary elements."""
        u = self.matrix
        return u @ (h.conj() if self.kind == "antiunitary" else h) @ u.conj().T


@dataclass(frozen=True)
class SymmetryReport:
    relation: str
    max_residual: float
    tolerance: float = RELATION_TOL

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)

    def as_dict(self) -> dict:
        return {
            "relation": self.relation,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def opnorm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2))


def phase_aligned_residual(a: np.ndarray, b: np.ndarray) -> float:
    """``min_theta ||a - e^{i theta} b||`` (theta from the Frobenius optimum)."""
    ov = np.vdot(b, a)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return opnorm(a - phase * b)


def _sample_times(bounds: np.ndarray, per_segment: int) -> np.ndarray:
    frac = (np.arange(per_segment) + 0.5) / per_segment
    return np.concatenate([a + frac * (b - a) for a, b in zip(bounds[:-1], bounds[1:])])


def _grid_maps_to_itself(bounds: np.ndarray, image: np.ndarray, T: float) -> bool:
    tol = 1e-9 * T
    ref = np.mod(bounds[:-1], T)
    img = np.mod(image, T)
    img[np.abs(img - T) < tol] = 0.0
    return all(np.min(np.abs(ref - x)) < tol for x in img)


def _dense_segments(protocol: DriveProtocol) -> list:
    return [to_dense(s.hamiltonian) for s in protocol.segments]


def check_unitary_dynamical_symmetry(
    protocol: DriveProtocol, g: SymmetryElement, tol: float = RELATION_TOL
) -> SymmetryReport:
    """Max over segment-interior samples of ``||g H(t) g^-1 - H(t + T/2)||``."""
    if g.kind != "unitary":
        raise ValueError("expected a unitary element")
    T, b = protocol.period, protocol.boundaries
    if not _grid_maps_to_itself(b, b[:-1] + T / 2, T):
        raise AlignmentError("segment boundaries are not invariant under a half-period shift")
    mats = _dense_segments(protocol)
    res = 0.0
    for t in _sample_times(b, SAMPLES_PER_SEGMENT):
        lhs = g.conjugate(mats[protocol.segment_at(t)])
        res = max(res, opnorm(lhs - mats[protocol.segment_at(t + T / 2)]))
    return SymmetryReport(f"{g.label or 'g'} H(t) g^-1 = H(t+T/2)", res, tol)


def check_antiunitary_dynamical_symmetry(
    protocol: DriveProtocol, g: SymmetryElement, tol: float = RELATION_TOL
) -> SymmetryReport:
    """Max over samples of ``||g H(t) g^-1 - H(T/2 - t)||`` with ``g`` antiunitary."""
    if g.kind != "antiunitary":
        raise ValueError("expected an antiunitary element")
    T, b = protocol.period, protocol.boundaries
    if not _grid_maps_to_itself(b, T / 2 - b[1:], T):
        raise AlignmentError("segment boundaries are not invariant under reflection about T/4")
    mats = _dense_segments(protocol)
    res = 0.0
    for t in _sample_times(b, SAMPLES_PER_SEGMENT):
        lhs = g.conjugate(mats[protocol.segment_at(t)])
        res = max(res, opnorm(lhs - mats[protocol.segment_at((T / 2 - t) % T)]))
    return SymmetryReport(f"{g.label or 'g'} H(t) g^-1 = H(T/2-t)", res, tol)


def mirror_element(L: int) -> SymmetryElement:
    return SymmetryElement("unitary", build_mirror_unitary(L), "g_M")


def interaction_picture_element(
    cfg: LadderConfig, g: SymmetryElement, tol: float = 1e-10, verify: bool = True
) -> SymmetryElement:
    """``U_0(T/2)^{-1} g``; for unitary ``g`` checks ``[g_int]^2 = X^{-1} g^2`` up to phase.

    The check only holds for elements that are symmetries of the drive; pass
    ``verify=False`` to build the image of an arbitrary element.
    """
    u_half = u0_at(cfg, 0.5 * cfg.period)
    gi = u_half.conj().T @ g.matrix
    if verify and g.kind == "unitary":
        x = build_x_operator(cfg)
        res = phase_aligned_residual(gi @ gi, x.conj().T @ g.matrix @ g.matrix)
        if res > tol:
            raise SymmetryError(f"[g_int]^2 differs from X^-1 g^2 by {res:.3e}")
    return SymmetryElement(g.kind, gi, f"{g.label or 'g'}_int")


def interaction_propagator_between(table: FourierTable, t1: float, t0: float = 0.0) -> np.ndarray:
    """Exact ``U_int(t1, t0)`` for ``0 <= t0 <= t1`` from the frozen windows."""
    P = table.base_period
    pieces = []
    for k in range(int(math.floor(t0 / P)), int(math.ceil(t1 / P)) + 1):
        for w in table.windows:
            a, b = max(w.t0 + k * P, t0), min(w.t1 + k * P, t1)
            if b > a:
                pieces.append((a, b - a, w.matrix))
    u = np.eye(table.dim, dtype=np.complex128)
    for _, dt, h in sorted(pieces, key=lambda p: p[0]):
        u = expm(-1j * dt * h) @ u
    return u


def _check(label: str, pairs: Iterable, tol: float, phase: bool = False) -> SymmetryReport:
    fn = phase_aligned_residual if phase else (lambda a, b: opnorm(a - b))
    return SymmetryReport(label, max(fn(a, b) for a, b in pairs), tol)


def group_algebra_report(
    cfg: LadderConfig,
    tol: float = RELATION_TOL,
    negative_control: int | None = None,
    samples: int = 4,
    table: FourierTable | None = None,
) -> list[SymmetryReport]:
    """Interaction-picture group relations at segment-interior sample times.

    (i) ``X H_int(t) X^-1 = H_int(t - T)``; (ii) ``g_int H_int(t) g_int^-1 =
    H_int(t + T/2)``; (iii) ``X^2 = I``, ``g_int X g_int^-1 = X`` and
    ``[g_int]^2 = X^-1 g^2``; (iv) ``g_int K^[i](t) g_int^-1 = K^[i](t + T/2)``
    for i = 1, 2; plus the propagator relation ``g_int U_int(t, 0) g_int^-1 =
    U_int(t + T/2, T/2)``.  With ``negative_control`` set, ``X`` and ``g_M``
    are replaced by Haar-random unitaries drawn with that seed.
    """
    T = cfg.period
    table = table or fourier_table(cfg)
    if negative_control is None:
        x = build_x_operator(cfg)
        g = build_mirror_unitary(cfg.L)
    else:
        rng = np.random.default_rng(negative_control)
        dim = 1 << cfg.n_qubits
        x = unitary_group.rvs(dim, random_state=rng)
        g = unitary_group.rvs(dim, random_state=rng)
    gi = u0_at(cfg, 0.5 * T).conj().T @ g
    gi_inv = gi.conj().T
    x_inv = x.conj().T
    conj = lambda u, h, ui: u @ h @ ui

    starts = np.arange(4) * T / 2
    bounds = np.sort(np.concatenate([starts, starts + cfg.tau * T, [2 * T]]))
    ts = _sample_times(bounds, samples)
    P = table.base_period
    h = table.hamiltonian_at
    reports = [
        _check("X H_int(t) X^-1 = H_int(t-T)", ((conj(x, h(t), x_inv), h((t - T) % P)) for t in ts), tol),
        _check(
            "g_int H_int(t) g_int^-1 = H_int(t+T/2)",
            ((conj(gi, h(t), gi_inv), h((t + T / 2) % P)) for t in ts),
            tol,
        ),
        _check("X^2 = I", [(x @ x, np.eye(x.shape[0]))], tol, phase=True),
        _check("g_int X g_int^-1 = X", [(conj(gi, x, gi_inv), x)], tol, phase=True),
        _check("[g_int]^2 = X^-1 g^2", [(gi @ gi, x_inv @ g @ g)], tol, phase=True),
    ]
    kick_ts = ts[:: max(1, len(ts) // 8)]
    for order in (1, 2):
        reports.append(
            _check(
                f"g_int K^[{order}](t) g_int^-1 = K^[{order}](t+T/2)",
                (
                    (conj(gi, kick_operator(table, t, order), gi_inv), kick_operator(table, t + T / 2, order))
                    for t in kick_ts
                ),
                tol,
            )
        )
    reports.append(
        _check(
            "g_int U_int(t,0) g_int^-1 = U_int(t+T/2,T/2)",
            (
                (
                    conj(gi, interaction_propagator_between(table, t), gi_inv),
                    interaction_propagator_between(table, t + T / 2, T / 2),
                )
                for t in (T / 4, T / 2, T, 3 * T / 2)
            ),
            tol,
            phase=True,
        )
    )
    return reports


def expression_1a_residual(cfg: LadderConfig, n: int, table: FourierTable | None = None) -> float:
    """Residual of ``g' U_n(0) g_int^-1 = U_n(0) exp(i D_n T/2)`` with ``g' = U(T/2)^-1 g_M``.

    ``U_n(0) = exp(-i sum_{i<=n} K^[i](0))``; the relation holds up to the
    first neglected order of the expansion.
    """
    T = cfg.period
    table = table or fourier_table(cfg)
    g = build_mirror_unitary(cfg.L)
    gi = u0_at(cfg, 0.5 * T).conj().T @ g
    prot = build_protocol(cfg)
    seg0, seg1 = prot.segments[0], prot.segments[1]
    u_half = expm(-1j * seg1.duration * to_dense(seg1.hamiltonian)) @ expm(
        -1j * seg0.duration * to_dense(seg0.hamiltonian)
    )
    gp = u_half.conj().T @ g
    k = sum((kick_operator(table, 0.0, i) for i in range(1, n + 1)), np.zeros_like(g))
    un = expm(-1j * k)
    dn = build_dn(cfg, n, table)
    return phase_aligned_residual(gp @ un @ gi.conj().T, un @ expm(0.5j * T * dn))


def fourier_symmetry_residuals(cfg: LadderConfig, ms: Iterable[int], table: FourierTable | None = None) -> dict:
    """Residuals of ``X V_m X^-1 = e^{i pi m} V_m`` and ``g_int V_m g_int^-1 = e^{-i pi m/2} V_m``."""
    table = table or fourier_table(cfg)
    x = build_x_operator(cfg)
    gi = u0_at(cfg, 0.5 * cfg.period).conj().T @ build_mirror_unitary(cfg.L)
    rx = rg = 0.0
    for m in ms:
        v = table.component(m)
        rx = max(rx, opnorm(x @ v @ x.conj().T - np.exp(1j * math.pi * m) * v))
        rg = max(rg, opnorm(gi @ v @ gi.conj().T - np.exp(-0.5j * math.pi * m) * v))
    return {"X": rx, "g_int": rg}


def effective_commutators(cfg: LadderConfig, n: int, table: FourierTable | None = None) -> dict:
    """``||[X, D_n]||`` and ``||[g_int, D_n]||``."""
    table = table or fourier_table(cfg)
    d = build_dn(cfg, n, table)
    x = build_x_operator(cfg)
    gi = u0_at(cfg, 0.5 * cfg.period).conj().T @ build_mirror_unitary(cfg.L)
    return {"X": opnorm(x @ d - d @ x), "g_int": opnorm(gi @ d - d @ gi)}


def micromotion_residual(traj: Iterable[TrajectoryRecord], alpha_sign: int, name: str = "o_odd"):
    """``r(m) = <O(mT+T/2)> - alpha_sign <O(mT)>`` per period; returns ``(m, r)``."""
    if alpha_sign not in (1, -1):
        raise ValueError("alpha_sign must be +1 or -1")
    m, full, half = _pair_by_period(traj, name)
    return m, half - alpha_sign * full


__all__ = [
    "AlignmentError",
    "SymmetryElement",
    "SymmetryReport",
    "check_antiunitary_dynamical_symmetry",
    "check_unitary_dynamical_symmetry",
    "effective_commutators",
    "expression_1a_residual",
    "fourier_symmetry_residuals",
    "group_algebra_report",
    "interaction_picture_element",
    "interaction_propagator_between",
    "micromotion_residual",
    "mirror_element",
    "phase_aligned_residual",
]
