"""High-frequency (van Vleck) expansion of the interaction-picture drive.

In the frame rotating with the resonant drive the weak drive is piecewise
constant: on each weak window ``[t0, t1)`` of the two-period cycle it equals a
frozen matrix ``A_w``, and it vanishes during the resonant pulses.  Every
Fourier component is therefore ``V_m = sum_w c_w(m) A_w`` with scalar
window integrals ``c_w(m)``, and every nested-commutator sum of the
expansion collapses to scalar series times commutators of the ``A_w``.

Conventions: ``V(t) = sum_m V_m exp(-i m w t)`` with ``w = 2 pi / P`` and
``P`` the base period (two drive periods).  Kick operators are Hermitian
generators ``K`` with ``U_int(t, 0) = exp(-iK(t)) exp(-iDt) exp(iK(0))``.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm
from scipy.signal import fftconvolve

from .ladder import LadderConfig, build_h0a, build_va, build_vsc, mirror_transform, resonant_propagators
from .pauli import DenseSizeError, to_dense

DENSE_MAX_QUBITS = 12
DEFAULT_M_MAX = 64
SERIES_TOL = 1e-10
_M_CAP = 1 << 22


class CutoffError(RuntimeError):
    """The Fourier cutoff cannot meet the requested tail tolerance."""


@dataclass(frozen=True, eq=False)
class Window:
    matrix: np.ndarray
    t0: float
    t1: float


def window_coeffs(t0: float, t1: float, m, base_period: float) -> np.ndarray:
    """``(1/P) int_{t0}^{t1} exp(i m w t) dt`` for integer array ``m``."""
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape, dtype=np.complex128)
    nz = m != 0
    w = 2 * math.pi / base_period
    mm = m[nz]
    out[nz] = (np.exp(1j * mm * w * t1) - np.exp(1j * mm * w * t0)) / (1j * mm * w * base_period)
    out[~nz] = (t1 - t0) / base_period
    return out


def _opnorm_bound(a: np.ndarray) -> float:
    # max column sum bounds the spectral norm of a Hermitian matrix
    return float(np.abs(a).sum(axis=0).max())


class _Components(Mapping):
    def __init__(self, table: "FourierTable"):
        self._t = table

    def __getitem__(self, m):
        if not isinstance(m, (int, np.integer)) or abs(m) > self._t.m_max:
            raise KeyError(m)
        return self._t.component(int(m))

    def __iter__(self):
        return iter(range(-self._t.m_max, self._t.m_max + 1))

    def __len__(self):
        return 2 * self._t.m_max + 1


@dataclass(frozen=True, eq=False)
class FourierTable:
    """Fourier components ``V_m`` for ``|m| <= m_max`` (computed on demand)."""

    windows: tuple
    base_period: float
    m_max: int = DEFAULT_M_MAX

    def __post_init__(self):
        if self.m_max < 1:
            raise ValueError("m_max must be positive")
        if not self.windows:
            raise ValueError("at least one window is required")
        dims = {w.matrix.shape for w in self.windows}
        if len(dims) != 1:
            raise ValueError("window matrices differ in shape")

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.base_period

    @property
    def dim(self) -> int:
        return self.windows[0].matrix.shape[0]

    @property
    def components(self) -> Mapping:
        return _Components(self)

    def coeffs(self, m) -> np.ndarray:
        """Array ``c[w, k]`` of window coefficients for the integers ``m[k]``."""
        return np.array([window_coeffs(w.t0, w.t1, m, self.base_period) for w in self.windows])

    def component(self, m: int) -> np.ndarray:
        c = self.coeffs([m])[:, 0]
        return sum(ci * w.matrix for ci, w in zip(c, self.windows))

    @cached_property
    def norm_sum(self) -> float:
        return sum(_opnorm_bound(w.matrix) for w in self.windows)

    def kick_tail_bound(self) -> float:
        """Upper bound on ``sum_{|m|>m_max} ||V_m|| / (m w)``."""
        return 2 * self.norm_sum / (math.pi**2 * self.omega * self.m_max)

    def hamiltonian_at(self, t: float) -> np.ndarray:
        tm = t % self.base_period
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for w in self.windows:
            if w.t0 <= tm < w.t1:
                out = out + w.matrix
        return out

    @cached_property
    def _commutators(self) -> dict:
        ws = [w.matrix for w in self.windows]
        out = {}
        for a in range(len(ws)):
            for b in range(a + 1, len(ws)):
                c = ws[a] @ ws[b] - ws[b] @ ws[a]
                out[a, b], out[b, a] = c, -c
        return out

    def _comm(self, a: int, b: int) -> np.ndarray | None:
        return None if a == b else self._commutators[a, b]


def interaction_windows(cfg: LadderConfig) -> tuple:
    """Frozen interaction-picture drive on the four weak windows of ``[0, 2T)``."""
    if cfg.n_qubits > DENSE_MAX_QUBITS:
        raise DenseSizeError(f"dense expansion limited to {DENSE_MAX_QUBITS} qubits, got {cfg.n_qubits}")
    T, tau = cfg.period, cfg.tau
    ua, ub = resonant_propagators(cfg)
    x = ub @ ua
    va = build_va(cfg)
    v_a = to_dense(va + build_vsc(cfg, "a"))
    v_b = to_dense(mirror_transform(va, cfg.L) + build_vsc(cfg, "b"))
    a1 = ua.conj().T @ v_a @ ua
    a2 = x.conj().T @ v_b @ x
    a3 = x.conj().T @ a1 @ x
    mats = [a1, a2, a3, v_b]
    starts = [tau * T, (0.5 + tau) * T, (1 + tau) * T, (1.5 + tau) * T]
    length = (0.5 - tau) * T
    return tuple(Window(0.5 * (a + a.conj().T), s, s + length) for a, s in zip(mats, starts))


def fourier_table(cfg: LadderConfig, m_max: int = DEFAULT_M_MAX) -> FourierTable:
    return FourierTable(interaction_windows(cfg), 2 * cfg.period, m_max)


def fourier_component(cfg: LadderConfig, m: int) -> np.ndarray:
    """``V_m`` of the ladder drive by analytic window integration."""
    return fourier_table(cfg, max(1, abs(m))).component(m)


def _first_order_cutoff(table: FourierTable, tol: float) -> int:
    # paired +-m terms decay as m^-3; the tail is below (sum ||A||)^2 / (pi^2 w M^2)
    need = math.sqrt(table.norm_sum**2 / (math.pi**2 * table.omega * tol))
    M = 1 << max(6, math.ceil(math.log2(max(need, 1.0))))
    if M > _M_CAP:
        raise CutoffError(f"first-order series needs cutoff {need:.3g} above cap {_M_CAP}")
    return M


def _first_order_scalars(table: FourierTable, M: int) -> np.ndarray:
    m = np.arange(1, M + 1)
    cp, cm = table.coeffs(m), table.coeffs(-m)
    w = table.omega
    # s[a, b] = sum_{m != 0} c_a(-m) c_b(m) / (2 m w)
    return (np.einsum("ak,bk->ab", cm / m, cp) - np.einsum("ak,bk->ab", cp / m, cm)) / (2 * w)


def _second_order_scalars(table: FourierTable, M: int) -> np.ndarray:
    """``t[a, b, c]`` such that the order-2 term is ``sum t_abc [[A_a, A_b], A_c]``."""
    m = np.arange(-M, M + 1)
    c = table.coeffs(m)
    w2 = table.omega**2
    nz = m != 0
    inv = np.zeros(m.shape)
    inv[nz] = 1.0 / m[nz]
    c0 = c[:, M]
    crev = c[:, ::-1]  # crev[:, k] = c(-m[k])
    n = len(table.windows)
    out = np.zeros((n, n, n), dtype=np.complex128)
    # sum_{m != 0} [[V_m, V_0], V_-m] / (2 m^2 w^2)
    out += np.einsum("ak,b,ck->abc", c * inv**2, c0, crev) / (2 * w2)
    # sum_{m != 0} sum_{m' != 0, m} [[V_m', V_{m-m'}], V_-m] / (3 m m' w^2)
    for a in range(n):
        u = c[a] * inv
        for b in range(n):
            g = fftconvolve(u, c[b])[M : 3 * M + 1] - u * c0[b]
            out[a, b] += np.einsum("k,ck->c", g * inv, crev) / (3 * w2)
    return out


def _assemble_first(table: FourierTable, s: np.ndarray) -> np.ndarray:
    out = np.zeros((table.dim, table.dim), dtype=np.complex128)
    n = len(table.windows)
    for a in range(n):
        for b in range(a + 1, n):
            out += (s[a, b] - s[b, a]) * table._comm(a, b)
    return out


def _assemble_second(table: FourierTable, t: np.ndarray) -> np.ndarray:
    out = np.zeros((table.dim, table.dim), dtype=np.complex128)
    n = len(table.windows)
    ws = [w.matrix for w in table.windows]
    for a in range(n):
        for b in range(a + 1, n):
            cab = table._comm(a, b)
            coef = t[a, b] - t[b, a]
            for c in range(n):
                if abs(coef[c]) > 0:
                    out += coef[c] * (cab @ ws[c] - ws[c] @ cab)
    return out


def vv_effective_term(table: FourierTable, order: int, tol: float = SERIES_TOL) -> np.ndarray:
    """Order-``order`` van Vleck term (0, 1 or 2), Hermitian.

    The scalar series behind orders 1 and 2 are summed to their own cutoff,
    chosen so that the neglected tail stays below ``tol``; ``table.m_max``
    only governs kick operators.
    """
    if order == 0:
        return table.component(0)
    if order == 1:
        M = _first_order_cutoff(table, tol)
        out = _assemble_first(table, _first_order_scalars(table, M))
    elif order == 2:
        M = 1 << 10
        prev = None
        while True:
            t = _second_order_scalars(table, M)
            if prev is not None:
                tail = np.abs(t - prev).max() * 2 * table.norm_sum**3
                if tail < tol:
                    break
                if M >= 1 << 16:
                    raise CutoffError(f"second-order series tail {tail:.3g} above tolerance {tol:.3g}")
            prev, M = t, 2 * M
        out = _assemble_second(table, t)
    else:
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    return 0.5 * (out + out.conj().T)


def _kick_check(table: FourierTable, tol: float | None):
    if tol is not None and table.kick_tail_bound() > tol:
        raise CutoffError(
            f"kick tail bound {table.kick_tail_bound():.3g} exceeds {tol:.3g} at m_max={table.m_max}"
        )


@dataclass(frozen=True)
class _KickScalars:
    first: np.ndarray  # first[w, k]: coefficient of A_w for m[k]
    second: np.ndarray  # second[a, b, k]: coefficient of [A_a, A_b] at frequency k
    m: np.ndarray


def _kick_scalars(table: FourierTable, M_inner: int) -> _KickScalars:
    mk = np.concatenate([np.arange(-table.m_max, 0), np.arange(1, table.m_max + 1)])
    w = table.omega
    first = 1j * table.coeffs(mk) / (mk * w)
    # F_k = sum_{m != 0} [V_-m, V_{m-k}] / (2 m w) + [V_-k, V_0] / (2 k w), then K2 = sum F_k e^{ikwt}/(ikw)
    mi = np.concatenate([np.arange(-M_inner, 0), np.arange(1, M_inner + 1)])
    cneg = table.coeffs(-mi) / (2 * mi * w)
    n = len(table.windows)
    f = np.empty((n, n, mk.size), dtype=np.complex128)
    for i, k in enumerate(mk):
        f[:, :, i] = cneg @ table.coeffs(mi - k).T
    c0 = table.coeffs([0])[:, 0]
    f += np.einsum("ak,b->abk", table.coeffs(-mk) / (2 * mk * w), c0)
    second = f / (1j * mk * w)
    return _KickScalars(first, second, mk)


def kick_operator(table: FourierTable, t: float, order: int, tol: float | None = None) -> np.ndarray:
    """Hermitian kick ``K^[order](t)`` (order 1 or 2) as a finite Fourier sum.

    The sum runs over ``0 < |m| <= table.m_max``; each truncated sum has zero
    mean over the base period.  With ``tol`` given, a :class:`CutoffError` is
    raised when the analytic tail bound exceeds it.
    """
    _kick_check(table, tol)
    ks = _table_kicks(table)
    if order == 1:
        phase = np.exp(-1j * ks.m * table.omega * t)
        coef = ks.first @ phase
        out = sum(c * w.matrix for c, w in zip(coef, table.windows))
    elif order == 2:
        # frequencies here follow exp(+i k w t)
        phase = np.exp(1j * ks.m * table.omega * t)
        coef = ks.second @ phase
        out = np.zeros((table.dim, table.dim), dtype=np.complex128)
        n = len(table.windows)
        for a in range(n):
            for b in range(a + 1, n):
                out += (coef[a, b] - coef[b, a]) * table._comm(a, b)
    else:
        raise ValueError(f"kick order must be 1 or 2, got {order}")
    return 0.5 * (out + out.conj().T)


_KICK_CACHE: dict = {}


def _table_kicks(table: FourierTable) -> _KickScalars:
    key = id(table)
    hit = _KICK_CACHE.get(key)
    if hit is None or hit[0] is not table:
        hit = (table, _kick_scalars(table, 1 << 13))
        _KICK_CACHE.clear()
        _KICK_CACHE[key] = hit
    return hit[1]


def build_dn(cfg: LadderConfig, n: int, table: FourierTable | None = None) -> np.ndarray:
    """Truncated effective Hamiltonian ``D_n = sum_{i <= n} V^[i]`` (dense)."""
    if n not in (0, 1, 2):
        raise ValueError(f"n must be 0, 1 or 2, got {n}")
    table = table or fourier_table(cfg)
    out = vv_effective_term(table, 0)
    for i in range(1, n + 1):
        out = out + vv_effective_term(table, i)
    return out


def interaction_propagator(table: FourierTable, t_end: float | None = None) -> np.ndarray:
    """Exact ``U_int(t_end, 0)`` from the frozen windows (default one base period)."""
    t_end = table.base_period if t_end is None else t_end
    u = np.eye(table.dim, dtype=np.complex128)
    for w in sorted(table.windows, key=lambda w: w.t0):
        dt = min(w.t1, t_end) - w.t0
        if dt > 0:
            u = expm(-1j * dt * w.matrix) @ u
    return u


__all__ = [
    "CutoffError",
    "FourierTable",
    "Window",
    "build_dn",
    "fourier_component",
    "fourier_table",
    "interaction_propagator",
    "interaction_windows",
    "kick_operator",
    "vv_effective_term",
    "window_coeffs",
]
