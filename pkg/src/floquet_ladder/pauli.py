"""Pauli-string operator algebra and matrix-free application to state vectors.

Qubit ``q`` is bit ``q`` of the basis-state index (qubit 0 is the least
significant bit) and ``Z|0> = +|0>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from numba import njit

PAULI_LETTERS = ("X", "Y", "Z")
COEFF_CUTOFF = 1e-14
DENSE_MAX_QUBITS = 14

# single-site products: (a, b) -> (phase, letter); None letter means identity
_SITE_PRODUCT = {
    ("X", "X"): (1, None),
    ("Y", "Y"): (1, None),
    ("Z", "Z"): (1, None),
    ("X", "Y"): (1j, "Z"),
    ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"),
    ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"),
    ("X", "Z"): (-1j, "Y"),
}


class DimensionError(ValueError):
    """Operator and state live on different numbers of qubits."""


class DenseSizeError(ValueError):
    """A dense representation was requested for too many qubits."""


@dataclass(frozen=True)
class PauliString:
    """``coeff`` times a tensor product of single-qubit Paulis.

    ``ops`` is a sorted tuple of ``(site, letter)`` pairs; identity sites are
    omitted, so the empty tuple is the identity operator.
    """

    coeff: complex = 1.0
    ops: tuple = ()

    def __post_init__(self):
        ops = self.ops.items() if isinstance(self.ops, Mapping) else self.ops
        canon = []
        for site, letter in sorted((int(s), str(l).upper()) for s, l in ops):
            if letter == "I":
                continue
            if letter not in PAULI_LETTERS:
                raise ValueError(f"unknown Pauli letter {letter!r}")
            if canon and canon[-1][0] == site:
                raise ValueError(f"site {site} appears twice")
            canon.append((site, letter))
        object.__setattr__(self, "ops", tuple(canon))
        object.__setattr__(self, "coeff", complex(self.coeff))

    @classmethod
    def from_label(cls, label: str, coeff: complex = 1.0) -> "PauliString":
        """Parse ``"X0 Z3"`` style labels; ``""`` or ``"I"`` is the identity."""
        ops = []
        for tok in label.split():
            if tok.upper() == "I":
                continue
            ops.append((int(tok[1:]), tok[0]))
        return cls(coeff, tuple(ops))

    @property
    def key(self) -> tuple:
        return self.ops

    @property
    def sites(self) -> tuple:
        return tuple(s for s, _ in self.ops)

    def label(self) -> str:
        return " ".join(f"{l}{s}" for s, l in self.ops) or "I"

    def masks(self) -> tuple[int, int, int]:
        """Return ``(x_mask, z_mask, n_y)`` with Y = i X Z per site."""
        x_mask = z_mask = n_y = 0
        for site, letter in self.ops:
            bit = 1 << site
            if letter in "XY":
                x_mask |= bit
            if letter in "ZY":
                z_mask |= bit
            if letter == "Y":
                n_y += 1
        return x_mask, z_mask, n_y

    def conj(self) -> "PauliString":
        return PauliString(self.coeff.conjugate(), self.ops)

    def scaled(self, factor: complex) -> "PauliString":
        return PauliString(self.coeff * factor, self.ops)

    def relabel(self, mapping: Mapping[int, int]) -> "PauliString":
        return PauliString(self.coeff, tuple((mapping.get(s, s), l) for s, l in self.ops))

    def commutes_with(self, other: "PauliString") -> bool:
        a, b = dict(self.ops), dict(other.ops)
        n_anti = sum(1 for s in a.keys() & b.keys() if a[s] != b[s])
        return n_anti % 2 == 0

    def __mul__(self, other):
        if isinstance(other, PauliString):
            return pauli_mul(self, other)
        return self.scaled(other)

    __rmul__ = scaled

    def __repr__(self):
        return f"PauliString({self.coeff:.6g}, {self.label()})"


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a @ b`` with the accumulated phase."""
    phase = a.coeff * b.coeff
    ops = dict(a.ops)
    for site, lb in b.ops:
        la = ops.get(site)
        if la is None:
            ops[site] = lb
            continue
        p, letter = _SITE_PRODUCT[(la, lb)]
        phase *= p
        if letter is None:
            del ops[site]
        else:
            ops[site] = letter
    return PauliString(phase, tuple(ops.items()))


@dataclass(frozen=True, eq=False)
class OperatorSum:
    """A linear combination of Pauli strings on ``n_sites`` qubits."""

    terms: tuple = ()
    n_sites: int = 1
    _compiled: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be positive")
        terms = tuple(self.terms)
        for t in terms:
            if t.ops and t.ops[-1][0] >= self.n_sites:
                raise ValueError(f"term {t.label()} acts outside {self.n_sites} qubits")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_terms(cls, terms: Iterable[PauliString], n_sites: int) -> "OperatorSum":
        return simplify(cls(tuple(terms), n_sites))

    @classmethod
    def identity(cls, n_sites: int, coeff: complex = 1.0) -> "OperatorSum":
        return cls((PauliString(coeff, ()),), n_sites)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        _check_same_size(self, other)
        return simplify(OperatorSum(self.terms + other.terms, self.n_sites))

    def __sub__(self, other: "OperatorSum") -> "OperatorSum":
        return self + other * -1.0

    def __neg__(self):
        return self * -1.0

    def __mul__(self, other):
        if isinstance(other, OperatorSum):
            _check_same_size(self, other)
            prods = [pauli_mul(a, b) for a in self.terms for b in other.terms]
            return simplify(OperatorSum(tuple(prods), self.n_sites))
        return OperatorSum(tuple(t.scaled(other) for t in self.terms), self.n_sites)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self.n_sites == other.n_sites and simplify(self).terms == simplify(other).terms

    def __hash__(self):
        return hash((self.n_sites, simplify(self).terms))

    def as_dict(self) -> dict:
        return {t.ops: t.coeff for t in simplify(self).terms}

    def conj(self) -> "OperatorSum":
        """Hermitian conjugate (Pauli strings are Hermitian)."""
        return OperatorSum(tuple(t.conj() for t in self.terms), self.n_sites)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        s = simplify(self)
        return all(abs(t.coeff.imag) <= atol for t in s.terms)

    def norm1(self) -> float:
        """Sum of absolute coefficients, an upper bound on the operator norm."""
        return float(sum(abs(t.coeff) for t in self.terms))

    def relabel(self, mapping: Mapping[int, int]) -> "OperatorSum":
        return simplify(OperatorSum(tuple(t.relabel(mapping) for t in self.terms), self.n_sites))

    def compiled(self) -> "CompiledOperator":
        # cached because the Krylov loop applies the same segment thousands of times
        c = self._compiled.get("op")
        if c is None:
            c = CompiledOperator(self)
            self._compiled["op"] = c
        return c

    def __repr__(self):
        body = " + ".join(f"({t.coeff:.4g}) {t.label()}" for t in self.terms[:6])
        more = f" + ... ({len(self.terms)} terms)" if len(self.terms) > 6 else ""
        return f"OperatorSum[{self.n_sites}]({body or '0'}{more})"


def _check_same_size(a: OperatorSum, b: OperatorSum):
    if a.n_sites != b.n_sites:
        raise DimensionError(f"n_sites mismatch: {a.n_sites} vs {b.n_sites}")


def simplify(s: OperatorSum) -> OperatorSum:
    """Merge equal strings, drop |coeff| < 1e-14, sort by ops."""
    acc: dict = {}
    for t in s.terms:
        acc[t.ops] = acc.get(t.ops, 0j) + t.coeff
    terms = tuple(
        PauliString(c, ops)
        for ops, c in sorted(acc.items(), key=lambda kv: kv[0])
        if abs(c) >= COEFF_CUTOFF
    )
    return OperatorSum(terms, s.n_sites)


def commutator(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    """``[a, b]``; only anticommuting string pairs contribute (twice)."""
    _check_same_size(a, b)
    out = []
    for p in a.terms:
        for q in b.terms:
            if not p.commutes_with(q):
                out.append(pauli_mul(p, q).scaled(2.0))
    return simplify(OperatorSum(tuple(out), a.n_sites))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes over the ``2**n_sites`` computational basis."""

    amps: np.ndarray
    n_sites: int

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amps, dtype=np.complex128)
        if amps.shape != (1 << self.n_sites,):
            raise DimensionError(f"expected {1 << self.n_sites} amplitudes, got {amps.shape}")
        object.__setattr__(self, "amps", amps)

    @classmethod
    def basis(cls, bits: str | int, n_sites: int) -> "StateVector":
        """Basis state; a string is read with qubit 0 as its first character."""
        if isinstance(bits, str):
            if len(bits) != n_sites or set(bits) - {"0", "1"}:
                raise ValueError(f"bitstring must have {n_sites} characters from '01'")
            index = sum(1 << q for q, b in enumerate(bits) if b == "1")
        else:
            index = int(bits)
        amps = np.zeros(1 << n_sites, dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps, n_sites)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalized(self) -> "StateVector":
        return StateVector(self.amps / self.norm, self.n_sites)

    def vdot(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amps, other.amps))


def _parity(values: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(values) & 1).astype(np.int8)


@njit(cache=True)
def _grouped_matvec(flips, diags, v, out):
    dim = v.shape[0]
    for g in range(flips.shape[0]):
        x = flips[g]
        d = diags[g]
        for c in range(dim):
            out[c] += d[c] * v[c ^ x]


class CompiledOperator:
    """Terms grouped by flip pattern: ``(Op psi)[c] = sum_x d_x[c] psi[c ^ x]``.

    Holds one complex diagonal per distinct flip mask, i.e. memory of
    ``n_masks * 2**n_sites`` amplitudes.
    """

    def __init__(self, op: OperatorSum):
        self.n_sites = op.n_sites
        dim = 1 << op.n_sites
        idx = np.arange(dim, dtype=np.int64)
        groups: dict = {}
        for t in simplify(op).terms:
            x, z, ny = t.masks()
            groups.setdefault(x, []).append((t.coeff * (1j) ** ny, z))
        self.flips = np.array(sorted(groups), dtype=np.int64)
        self.diags = np.zeros((len(groups), dim), dtype=np.complex128)
        for g, x in enumerate(self.flips):
            src = idx ^ x
            for c, z in groups[int(x)]:
                self.diags[g] += c * (1 - 2 * _parity(src & z))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(v.shape[0], dtype=np.complex128)
        if self.flips.size:
            _grouped_matvec(self.flips, self.diags, np.ascontiguousarray(v, dtype=np.complex128), out)
        return out


def apply_to_state(op: OperatorSum, psi):
    """``op |psi>`` without building a matrix.

    Accepts a :class:`StateVector` (returned as one) or a raw amplitude array.
    """
    if isinstance(psi, StateVector):
        if psi.n_sites != op.n_sites:
            raise DimensionError(f"operator on {op.n_sites} qubits, state on {psi.n_sites}")
        return StateVector(op.compiled().matvec(psi.amps), psi.n_sites)
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape[0] != 1 << op.n_sites:
        raise DimensionError(f"operator on {op.n_sites} qubits, state has {psi.shape[0]} amplitudes")
    return op.compiled().matvec(psi)


def to_dense(op: OperatorSum) -> np.ndarray:
    """Dense matrix of ``op``; oracle path, limited to 14 qubits."""
    if op.n_sites > DENSE_MAX_QUBITS:
        raise DenseSizeError(f"dense matrix for {op.n_sites} qubits exceeds limit {DENSE_MAX_QUBITS}")
    dim = 1 << op.n_sites
    mat = np.zeros((dim, dim), dtype=np.complex128)
    cols = np.arange(dim, dtype=np.int64)
    for t in op.terms:
        x, z, ny = t.masks()
        vals = t.coeff * (1j) ** ny * (1 - 2 * _parity(cols & z))
        mat[cols ^ x, cols] += vals
    return mat
