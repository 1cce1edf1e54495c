"""Measured quantities: expectations, entanglement, odd-operator series, plateaus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .pauli import OperatorSum, StateVector, apply_to_state

IMAG_TOL = 1e-10
NORM_TOL = 1e-8
SCHMIDT_CUTOFF = 1e-14
NORM_GUARD = 1e-6


class NonHermitianError(ValueError):
    """Expectation value with a non-negligible imaginary part."""


class MissingOffsetError(ValueError):
    """A period lacks one of the sample offsets ``{0, T/2}``."""


@dataclass(frozen=True)
class TrajectoryRecord:
    """One sample; ``offset`` is the position within the period as a fraction of ``T``."""

    m: int
    t: float
    o_odd: float
    o_odd2: float
    s_ent: float
    energy_density: float
    offset: float = 0.0
    extra: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.energy_density):
            raise ValueError("energy density must be finite")
        if self.s_ent < -1e-12:
            raise ValueError("entropy must be non-negative")


def _amps(psi) -> np.ndarray:
    return psi.amps if isinstance(psi, StateVector) else np.asarray(psi, dtype=np.complex128)


def expectation(op: OperatorSum, psi) -> float:
    """``<psi|op|psi>`` for Hermitian ``op``; raises if the imaginary part exceeds 1e-10."""
    v = _amps(psi)
    val = np.vdot(v, apply_to_state(op, v))
    if abs(val.imag) > IMAG_TOL:
        raise NonHermitianError(f"imaginary part {val.imag:.3e} of expectation value")
    return float(val.real)


def entanglement_entropy(psi, cut: int | None = None) -> float:
    """Von Neumann entropy (nats) of qubits ``[0, cut)``; default cut is half the qubits."""
    v = _amps(psi)
    n = int(v.size).bit_length() - 1
    if v.size != 1 << n:
        raise ValueError("state length is not a power of two")
    cut = n // 2 if cut is None else cut
    if not 0 < cut < n:
        raise ValueError(f"cut must lie in (0, {n}), got {cut}")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1) > NORM_TOL:
        raise ValueError(f"state norm {nrm:.12f} deviates from 1")
    # qubits below the cut are the low bits: rows index the high part
    s = np.linalg.svd(v.reshape(1 << (n - cut), 1 << cut), compute_uv=False)
    p = s**2
    p = p[p > SCHMIDT_CUTOFF]
    s = -float(np.sum(p * np.log(p)))
    return s if s > 0 else 0.0


def page_value(L: int) -> float:
    """``(L ln2 - 1) / 2``, the normalisation used for the half-ladder entropy."""
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    return (L * math.log(2) - 1) / 2


def energy_density(psi, d0: OperatorSum, n_spins: int) -> float:
    if n_spins != d0.n_sites:
        raise ValueError(f"n_spins={n_spins} does not match operator size {d0.n_sites}")
    return expectation(d0, psi) / n_spins


@dataclass(frozen=True)
class OddSeries:
    m: np.ndarray
    at_mT: np.ndarray
    at_half: np.ndarray
    o_s: np.ndarray
    o_s_norm: np.ndarray  # nan marks a guarded (missing) value


def _pair_by_period(records: Iterable[TrajectoryRecord], name: str):
    full, half = {}, {}
    for r in records:
        val = r.extra[name] if name in r.extra else getattr(r, name)
        if r.offset == 0.0:
            full[r.m] = val
        elif r.offset == 0.5:
            half[r.m] = val
    ms = sorted(set(full) | set(half))
    missing = [m for m in ms if m not in full or m not in half]
    if missing:
        raise MissingOffsetError(f"periods {missing[:5]} lack a sample at offset 0 or T/2")
    return np.array(ms, dtype=int), np.array([full[m] for m in ms]), np.array([half[m] for m in ms])


def odd_observable_series(records: Iterable[TrajectoryRecord], name: str = "o_odd") -> OddSeries:
    """``O^s(m) = <O(mT)> + <O(mT+T/2)>`` and its guarded normalisation by ``|<O(mT)>|``."""
    m, a, b = _pair_by_period(records, name)
    s = a + b
    norm = np.full(s.shape, np.nan)
    ok = np.abs(a) >= NORM_GUARD
    norm[ok] = s[ok] / np.abs(a[ok])
    return OddSeries(m, a, b, s, norm)


@dataclass(frozen=True)
class Plateau:
    t_rel: int | None
    t_star: int | None
    degenerate: bool = False

    @property
    def found(self) -> bool:
        return self.t_rel is not None

    @property
    def length(self) -> int:
        return 0 if self.t_rel is None else self.t_star - self.t_rel + 1


def window_slopes(series, window: int) -> np.ndarray:
    """Least-squares slope of every length-``window`` run (per sample)."""
    y = np.asarray(series, dtype=float)
    x = np.arange(window) - (window - 1) / 2
    denom = float(x @ x)
    runs = np.lib.stride_tricks.sliding_window_view(y, window)
    return runs @ x / denom


def plateau_detect(series, window: int, slope_tol: float) -> Plateau:
    """First flat window and the end of the contiguous flat run that follows.

    Indices are sample positions; ``t_star`` is the last index of the final
    flat window.  A constant-zero series yields the whole range, flagged
    ``degenerate``.
    """
    y = np.asarray(series, dtype=float)
    if window < 2:
        raise ValueError("window must be at least 2")
    if y.size < 3 * window:
        raise ValueError(f"series of length {y.size} shorter than 3 windows of {window}")
    if not np.any(y):
        return Plateau(0, y.size - 1, degenerate=True)
    flat = np.abs(window_slopes(y, window)) < slope_tol
    idx = np.flatnonzero(flat)
    if idx.size == 0:
        return Plateau(None, None)
    start = int(idx[0])
    end = start
    while end + 1 < flat.size and flat[end + 1]:
        end += 1
    return Plateau(start, end + window - 1)
