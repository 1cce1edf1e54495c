"""Four-step dual-drive protocol on a two-leg spin-1/2 ladder.

Spins are Pauli matrices (eigenvalues +-1).  Rung ``i`` of the ladder holds
the upper-chain spin ``S_i`` on qubit ``2i`` and the lower-chain spin
``sigma_i`` on qubit ``2i + 1``, so the left half of the ladder is the
contiguous block of qubits ``[0, L)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.linalg import expm

from .pauli import (
    DENSE_MAX_QUBITS,
    DenseSizeError,
    OperatorSum,
    PauliString,
    simplify,
    to_dense,
)

UPPER, LOWER = 0, 1


class ConfigError(ValueError):
    """Invalid ladder parameters."""


class SymmetryError(RuntimeError):
    """A unitary that should square to a multiple of identity does not."""


def qubit(i: int, leg: int) -> int:
    """Qubit index of site ``i`` on leg ``UPPER`` (S) or ``LOWER`` (sigma)."""
    return 2 * i + leg


def S(letter: str, *sites: int) -> tuple:
    return tuple((qubit(i, UPPER), letter) for i in sites)


def sig(letter: str, *sites: int) -> tuple:
    return tuple((qubit(i, LOWER), letter) for i in sites)


@dataclass(frozen=True)
class LadderConfig:
    """Model parameters; energies in units of ``j`` and hbar = 1."""

    L: int = 6
    omega: float = 1.0 / 0.026
    tau: float = 0.25
    j: float = 1.0
    g_x: float = 0.45225
    g_y: float = 0.45225
    g_z: float = 0.7
    g_zz: float = 1.3
    lambda_a: float = 0.5
    lambda_b: float = 0.5

    def __post_init__(self):
        if isinstance(self.L, bool) or int(self.L) != self.L:
            raise ConfigError("L must be an integer")
        object.__setattr__(self, "L", int(self.L))
        if self.L < 4 or self.L % 2:
            raise ConfigError(f"L must be even and >= 4, got {self.L}")
        if not self.omega > 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if not 0 < self.tau < 0.5:
            raise ConfigError(f"tau must lie in (0, 1/2), got {self.tau}")
        if not self.j > 0:
            raise ConfigError(f"j must be positive, got {self.j}")

    @classmethod
    def from_j_over_omega(cls, ratio: float, **kw) -> "LadderConfig":
        return cls(omega=kw.get("j", 1.0) / ratio, **kw)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    @property
    def j_prime(self) -> float:
        return self.j / (0.5 - self.tau)

    @property
    def j1(self) -> float:
        return self.omega / (4 * self.tau)

    @property
    def n_qubits(self) -> int:
        return 2 * self.L

    @property
    def center(self) -> int:
        """Left site of the center bond."""
        return self.L // 2 - 1

    @property
    def symmetric(self) -> bool:
        return self.lambda_a == self.lambda_b

    def derived(self) -> dict:
        return {"T": self.period, "J_prime": self.j_prime, "J_1": self.j1, "N_spins": self.n_qubits}

    def replace(self, **changes) -> "LadderConfig":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class Segment:
    hamiltonian: OperatorSum
    duration: float
    resonant: bool
    label: str = ""


@dataclass(frozen=True)
class DriveProtocol:
    """Piecewise-constant Hamiltonian over one period.

    Segments flagged ``resonant`` make up the strong drive ``H_0(t)``; the
    others make up the weak drive ``V(t)``.
    """

    segments: tuple
    n_sites: int

    @property
    def period(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def segment_at(self, t: float) -> int:
        """Index of the segment containing ``t mod T`` (half-open windows)."""
        tm = t % self.period
        b = self.boundaries
        k = int(np.searchsorted(b, tm, side="right")) - 1
        return min(max(k, 0), len(self.segments) - 1)

    def hamiltonian_at(self, t: float) -> OperatorSum:
        return self.segments[self.segment_at(t)].hamiltonian


def _sum(terms, n: int) -> OperatorSum:
    return simplify(OperatorSum(tuple(PauliString(c, ops) for c, ops in terms), n))


def resonant_terms(cfg: LadderConfig) -> list:
    L, h = cfg.L, cfg.L // 2
    out = []
    for i in range(0, h - 1):
        out.append((1.0, S("Z", i, i + 1)))
        out.append((1.0, sig("X", i, i + 1)))
    for i in range(h, L - 1):
        out.append((1.0, S("Y", i, i + 1)))
        out.append((1.0, sig("Z", i, i + 1)))
    return out


def build_h0a(cfg: LadderConfig) -> OperatorSum:
    return _sum([(cfg.j1 * c, ops) for c, ops in resonant_terms(cfg)], cfg.n_qubits)


def _onsite(cfg: LadderConfig, i: int, scale: float) -> list:
    return [
        (scale * cfg.g_zz, S("Z", i) + sig("Z", i)),
        (scale * cfg.g_x, S("X", i)),
        (scale * cfg.g_z, S("Z", i)),
        (scale * cfg.g_y, sig("Y", i)),
        (scale * cfg.g_z, sig("Z", i)),
    ]


def build_va(cfg: LadderConfig) -> OperatorSum:
    """Weak drive on the left half: bonds ``i = 0..L/2-2``, fields on ``0..L/2-1``."""
    h = cfg.L // 2
    jp = cfg.j_prime
    terms = []
    for i in range(0, h - 1):
        terms.append((jp, S("X", i, i + 1)))
        terms.append((jp, sig("Y", i, i + 1)))
    for i in range(0, h):
        terms.extend(_onsite(cfg, i, jp))
    return _sum(terms, cfg.n_qubits)


def build_vsc(cfg: LadderConfig, which: str) -> OperatorSum:
    """Center coupling; fields sit on ``*+1`` for ``a`` and on ``*`` for ``b``."""
    c = cfg.center
    lam = cfg.lambda_a if which == "a" else cfg.lambda_b
    site = c + 1 if which == "a" else c
    scale = cfg.j_prime * lam
    terms = [(scale, S("X", c, c + 1)), (scale, sig("Y", c, c + 1))]
    terms.extend(_onsite(cfg, site, scale))
    return _sum(terms, cfg.n_qubits)


def mirror_map(L: int) -> dict:
    return {qubit(i, leg): qubit(L - 1 - i, leg) for i in range(L) for leg in (UPPER, LOWER)}


def mirror_transform(op: OperatorSum, L: int) -> OperatorSum:
    """Conjugation by the ladder mirror, realised as a site relabeling."""
    if op.n_sites != 2 * L:
        raise ValueError(f"operator has {op.n_sites} qubits, ladder of length {L} has {2 * L}")
    return op.relabel(mirror_map(L))


def build_protocol(cfg: LadderConfig) -> DriveProtocol:
    T, tau = cfg.period, cfg.tau
    h0a = build_h0a(cfg)
    h0b = mirror_transform(h0a, cfg.L)
    va = build_va(cfg)
    vb = mirror_transform(va, cfg.L)
    segs = (
        Segment(h0a, tau * T, True, "H0a"),
        Segment(va + build_vsc(cfg, "a"), (0.5 - tau) * T, False, "Va+Vsc_a"),
        Segment(h0b, tau * T, True, "H0b"),
        Segment(vb + build_vsc(cfg, "b"), (0.5 - tau) * T, False, "Vb+Vsc_b"),
    )
    return DriveProtocol(segs, cfg.n_qubits)


def _dense_guard(n_qubits: int):
    if n_qubits > DENSE_MAX_QUBITS:
        raise DenseSizeError(f"{n_qubits} qubits exceeds dense limit {DENSE_MAX_QUBITS}")


def mirror_permutation(L: int) -> np.ndarray:
    """Basis-index permutation ``perm[b]`` implementing the mirror."""
    n = 2 * L
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros_like(idx)
    for src, dst in mirror_map(L).items():
        out |= ((idx >> src) & 1) << dst
    return out


def build_mirror_unitary(L: int) -> np.ndarray:
    """Permutation matrix of the mirror; real, symmetric, squares to identity."""
    _dense_guard(2 * L)
    perm = mirror_permutation(L)
    g = np.zeros((perm.size, perm.size), dtype=np.complex128)
    g[perm, np.arange(perm.size)] = 1.0
    return g


def phase_fix_involution(u: np.ndarray, atol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Rescale ``u`` so that ``u @ u == I``; returns ``(u_fixed, phi)`` with ``u^2 = e^{i phi}``."""
    sq = u @ u
    lam = np.trace(sq) / sq.shape[0]
    if abs(abs(lam) - 1) > atol or np.max(np.abs(sq - lam * np.eye(sq.shape[0]))) > atol:
        raise SymmetryError("square of the resonant-drive propagator is not proportional to identity")
    phi = float(np.angle(lam))
    return u * np.exp(-0.5j * phi), phi


def resonant_propagators(cfg: LadderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``exp(-i H0a tau T)`` and ``exp(-i H0b tau T)``."""
    _dense_guard(cfg.n_qubits)
    dt = cfg.tau * cfg.period
    h0a = build_h0a(cfg)
    ua = expm(-1j * dt * to_dense(h0a))
    ub = expm(-1j * dt * to_dense(mirror_transform(h0a, cfg.L)))
    return ua, ub


def build_x_operator(cfg: LadderConfig, return_phase: bool = False):
    """One-period propagator of the resonant drive, phase-fixed so ``X @ X = I``."""
    ua, ub = resonant_propagators(cfg)
    x, phi = phase_fix_involution(ub @ ua)
    # a Pauli string has entries in {0, +-1, +-i}; snapping removes the
    # exponential's roundoff so that X @ X == I holds exactly
    snapped = np.round(x.real) + 1j * np.round(x.imag)
    if np.abs(x - snapped).max() <= 1e-10:
        x = snapped
    return (x, phi) if return_phase else x


def x_pauli_string(L: int) -> PauliString:
    """Closed-form emergent Z2 string: S^x and sigma^y on sites ``0, *, *+1, L-1``."""
    c = L // 2 - 1
    sites = sorted({0, c, c + 1, L - 1})
    return PauliString(1.0, S("X", *sites) + sig("Y", *sites))


def closed_form_d0(cfg: LadderConfig) -> OperatorSum:
    """Zeroth-order prethermal Hamiltonian as left, right and center pieces.

    Boundary bonds touching site 0 or the center site ``*`` carry a minus
    sign; a bond touching both (``L = 4``) keeps its plus sign.  The center
    bond is weighted by ``lambda_a + lambda_b``.
    """
    L, c, J = cfg.L, cfg.center, cfg.j
    gx, gy, gz, gzz = cfg.g_x, cfg.g_y, cfg.g_z, cfg.g_zz
    la, lb = cfg.lambda_a, cfg.lambda_b
    t = []
    # left half
    for i in range(0, c):
        sign = (-1) ** ((i == 0) + (i + 1 == c))
        t.append((J * sign, S("X", i, i + 1)))
        t.append((J * sign, sig("Y", i, i + 1)))
    t += [(-J * gzz, S("Z", 0) + sig("Z", 0)), (-J * gx, S("X", 0)), (-J * gy, sig("Y", 0))]
    for i in range(1, c):
        t += [
            (J * gzz, S("Z", i) + sig("Z", i)),
            (J * gx, S("X", i)),
            (J * gz, S("Z", i)),
            (J * gy, sig("Y", i)),
            (J * gz, sig("Z", i)),
        ]
    # right half
    for i in range(L // 2, L - 1):
        t.append((J, S("X", i, i + 1)))
        t.append((J, sig("Y", i, i + 1)))
    for i in range(L // 2 + 1, L):
        t.append((J * gzz, S("Z", i) + sig("Z", i)))
    for i in range(L // 2 + 1, L - 1):
        t += [(J * gx, S("X", i)), (J * gz, S("Z", i)), (J * gy, sig("Y", i)), (J * gz, sig("Z", i))]
    t += [(J * gx, S("X", L - 1)), (J * gy, sig("Y", L - 1))]
    # center
    t += [(J * (la + lb), S("X", c, c + 1)), (J * (la + lb), sig("Y", c, c + 1))]
    t += [
        (J * (lb - 1) * gzz, S("Z", c) + sig("Z", c)),
        (J * (1 - la) * gzz, S("Z", c + 1) + sig("Z", c + 1)),
        (J * (lb - 1) * gx, S("X", c)),
        (J * (lb - 1) * gy, sig("Y", c)),
        (J * (1 - la) * gx, S("X", c + 1)),
        (J * (1 - la) * gy, sig("Y", c + 1)),
    ]
    return _sum(t, cfg.n_qubits)


def o_odd(cfg: LadderConfig) -> OperatorSum:
    """``S^x_{L/2-1} - S^x_{L/2}``."""
    c = cfg.center
    return _sum([(1.0, S("X", c)), (-1.0, S("X", c + 1))], cfg.n_qubits)


def o_odd2(cfg: LadderConfig) -> OperatorSum:
    """``sigma^y_{L/2-1} - sigma^y_{L/2}``."""
    c = cfg.center
    return _sum([(1.0, sig("Y", c)), (-1.0, sig("Y", c + 1))], cfg.n_qubits)
