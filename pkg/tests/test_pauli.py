import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floquet_ladder.pauli import (
    DenseSizeError,
    DimensionError,
    OperatorSum,
    PauliString,
    StateVector,
    apply_to_state,
    commutator,
    pauli_mul,
    simplify,
    to_dense,
)
from oracles import kron_dense, kron_string

N = 5
letters = st.sampled_from("IXYZ")
strings = st.lists(letters, min_size=N, max_size=N).map(
    lambda ls: PauliString(1.0, tuple((q, l) for q, l in enumerate(ls)))
)
coeffs = st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False)
sums = st.lists(st.tuples(coeffs, strings), min_size=1, max_size=6).map(
    lambda ts: OperatorSum(tuple(p.scaled(c) for c, p in ts), N)
)


def test_single_qubit_products():
    x, y, z = (PauliString.from_label(f"{l}0") for l in "XYZ")
    assert pauli_mul(x, y).coeff == 1j and pauli_mul(x, y).ops == z.ops
    assert pauli_mul(y, x).coeff == -1j
    assert pauli_mul(x, x).ops == ()


def test_label_roundtrip_and_canonical_order():
    p = PauliString.from_label("Z3 X0 Y1")
    assert p.label() == "X0 Y1 Z3"
    assert PauliString.from_label("I").ops == ()


def test_bad_strings_rejected():
    with pytest.raises(ValueError):
        PauliString(1.0, ((0, "Q"),))
    with pytest.raises(ValueError):
        PauliString(1.0, ((0, "X"), (0, "Z")))
    with pytest.raises(ValueError):
        OperatorSum((PauliString.from_label("X7"),), 3)


@settings(max_examples=60, deadline=None)
@given(strings, strings)
def test_product_matches_kron(a, b):
    np.testing.assert_allclose(kron_string(pauli_mul(a, b), N), kron_string(a, N) @ kron_string(b, N), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(strings, strings)
def test_commutation_flag(a, b):
    ma, mb = kron_string(a, N), kron_string(b, N)
    assert a.commutes_with(b) == np.allclose(ma @ mb, mb @ ma)


@settings(max_examples=40, deadline=None)
@given(sums)
def test_to_dense_matches_kron(op):
    np.testing.assert_allclose(to_dense(op), kron_dense(op), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(sums, sums)
def test_commutator_matches_dense(a, b):
    da, db = kron_dense(a), kron_dense(b)
    np.testing.assert_allclose(to_dense(commutator(a, b)), da @ db - db @ da, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(sums, st.integers(0, 2**31 - 1))
def test_matvec_matches_dense(op, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=1 << N) + 1j * rng.normal(size=1 << N)
    np.testing.assert_allclose(apply_to_state(op, v), kron_dense(op) @ v, atol=1e-10)


def test_state_vector_api():
    s = StateVector.basis("10", 2)
    assert s.amps[1] == 1  # qubit 0 is the first character and the lowest bit
    assert s.norm == 1
    out = apply_to_state(OperatorSum((PauliString.from_label("Z0"),), 2), s)
    assert isinstance(out, StateVector) and out.amps[1] == -1
    with pytest.raises(DimensionError):
        apply_to_state(OperatorSum((PauliString.from_label("Z0"),), 3), s)


def test_simplify_merges_and_drops():
    p = PauliString.from_label("X0")
    s = simplify(OperatorSum((p, p.scaled(-1), PauliString.from_label("Z1", 2.0)), 2))
    assert [t.label() for t in s.terms] == ["Z1"]
    assert OperatorSum((p, p), 2) == OperatorSum((p.scaled(2),), 2)


def test_hermiticity_and_conj():
    op = OperatorSum((PauliString.from_label("X0 Y1", 1j),), 2)
    assert not op.is_hermitian()
    assert (op + op.conj()).is_hermitian()


def test_dense_size_guard():
    with pytest.raises(DenseSizeError):
        to_dense(OperatorSum((PauliString.from_label("X0"),), 15))


@pytest.mark.parametrize(
    "a, b, coeff, label",
    [("X0", "X0", 1, "I"), ("X0", "Y0", 1j, "Z0"), ("X0 Z1", "Z0 Z1", -1j, "Y0")],
)
def test_product_examples(a, b, coeff, label):
    p = pauli_mul(PauliString.from_label(a), PauliString.from_label(b))
    assert p.coeff == coeff and p.label() == label


@pytest.mark.parametrize(
    "a, b, expected",
    [("X0", "X0", {}), ("X0", "Y0", {((0, "Z"),): 2j}), ("Z0 Z1", "X0", {((0, "Y"), (1, "Z")): 2j})],
)
def test_commutator_examples(a, b, expected):
    c = commutator(OperatorSum((PauliString.from_label(a),), 2), OperatorSum((PauliString.from_label(b),), 2))
    assert c.as_dict() == expected


def test_basis_conventions():
    zero = StateVector.basis(0, 3)
    assert np.array_equal(apply_to_state(OperatorSum((PauliString.from_label("X0"),), 3), zero).amps, StateVector.basis(1, 3).amps)
    assert np.array_equal(apply_to_state(OperatorSum((PauliString.from_label("Z0"),), 3), zero).amps, zero.amps)
    np.testing.assert_array_equal(to_dense(OperatorSum((PauliString.from_label("X0"),), 1)), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(np.diag(to_dense(OperatorSum((PauliString.from_label("Z0 Z1"),), 2))), [1, -1, -1, 1])
    assert not to_dense(OperatorSum((), 2)).any()


@settings(max_examples=40, deadline=None)
@given(strings, strings, strings)
def test_product_associative(a, b, c):
    left, right = pauli_mul(pauli_mul(a, b), c), pauli_mul(a, pauli_mul(b, c))
    assert left.ops == right.ops and abs(left.coeff - right.coeff) < 1e-12


@settings(max_examples=40, deadline=None)
@given(sums)
def test_simplify_idempotent_and_exact(op):
    s = simplify(op)
    assert simplify(s).terms == s.terms
    np.testing.assert_allclose(to_dense(s), to_dense(op), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(sums, sums)
def test_commutator_of_hermitian_is_antihermitian(a, b):
    ha, hb = a + a.conj(), b + b.conj()
    m = to_dense(commutator(ha, hb))
    np.testing.assert_allclose(m.conj().T, -m, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(sums, st.integers(0, 2**31 - 1))
def test_apply_is_linear(op, seed):
    rng = np.random.default_rng(seed)
    u, v = (rng.normal(size=1 << N) + 1j * rng.normal(size=1 << N) for _ in range(2))
    a, b = 0.3 - 0.7j, 1.1
    np.testing.assert_allclose(apply_to_state(op, a * u + b * v), a * apply_to_state(op, u) + b * apply_to_state(op, v), atol=1e-10)
