import math

import numpy as np
import pytest
from scipy.linalg import expm

from floquet_ladder.ladder import LadderConfig, build_mirror_unitary, build_protocol, build_x_operator
from floquet_ladder.pauli import DenseSizeError, OperatorSum, PauliString, StateVector, to_dense
from floquet_ladder.propagator import (
    KrylovConvergenceError,
    KrylovSettings,
    dense_oracle_evolve,
    evolve_protocol,
    evolve_segment,
    evolve_segment_signed,
    u0_at,
)
from oracles import dense_period_propagator, haar_state, kron_dense


def random_hamiltonian(n, rng, n_terms=12):
    terms = []
    for _ in range(n_terms):
        ops = tuple((q, "XYZ"[rng.integers(3)]) for q in sorted(rng.choice(n, size=rng.integers(1, 3), replace=False)))
        terms.append(PauliString(float(rng.normal()), ops))
    return OperatorSum(tuple(terms), n)


def test_zero_time_is_identity():
    rng = np.random.default_rng(0)
    v = haar_state(4, rng)
    h = random_hamiltonian(4, rng)
    np.testing.assert_array_equal(evolve_segment(v, h, 0.0), v)


def test_single_qubit_phases():
    z = OperatorSum((PauliString.from_label("Z0"),), 1)
    out = evolve_segment(StateVector.basis(0, 1), z, 1.0)
    assert abs(out.amps[0] - np.exp(-1j)) < 1e-12
    x = OperatorSum((PauliString.from_label("X0"),), 1)
    out = dense_oracle_evolve(StateVector.basis(0, 1), x, math.pi / 2)
    np.testing.assert_allclose(out.amps, [0, -1j], atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_krylov_matches_expm(seed):
    rng = np.random.default_rng(seed)
    h = random_hamiltonian(7, rng, 20)
    v = haar_state(7, rng)
    dt = float(rng.uniform(0.1, 3.0))
    np.testing.assert_allclose(evolve_segment(v, h, dt), expm(-1j * dt * kron_dense(h)) @ v, atol=1e-10)


def test_small_subspace_forces_substeps():
    rng = np.random.default_rng(5)
    h = random_hamiltonian(6, rng, 20)
    v = haar_state(6, rng)
    out = evolve_segment(v, h, 2.0, KrylovSettings(max_subspace=6))
    np.testing.assert_allclose(out, dense_oracle_evolve(v, h, 2.0), atol=1e-10)


def test_convergence_error_when_substeps_exhausted():
    rng = np.random.default_rng(6)
    h = random_hamiltonian(6, rng, 20) * 50.0
    with pytest.raises(KrylovConvergenceError):
        evolve_segment(haar_state(6, rng), h, 1.0, KrylovSettings(max_subspace=3, min_substep=1e-2))


def test_negative_dt():
    rng = np.random.default_rng(1)
    h = random_hamiltonian(5, rng)
    v = haar_state(5, rng)
    with pytest.raises(ValueError):
        evolve_segment(v, h, -1.0)
    back = evolve_segment_signed(evolve_segment(v, h, 1.7), h, -1.7)
    np.testing.assert_allclose(back, v, atol=1e-11)


def test_semigroup_and_energy_conservation():
    rng = np.random.default_rng(2)
    h = random_hamiltonian(6, rng)
    v = haar_state(6, rng)
    a = dense_oracle_evolve(dense_oracle_evolve(v, h, 0.4), h, 0.9)
    np.testing.assert_allclose(a, dense_oracle_evolve(v, h, 1.3), atol=1e-12)
    hd = to_dense(h)
    w = evolve_segment(v, h, 5.0)
    assert abs(np.vdot(w, hd @ w) - np.vdot(v, hd @ v)) < 1e-10


def test_dense_oracle_guard():
    h = OperatorSum((PauliString.from_label("X0"),), 13)
    with pytest.raises(DenseSizeError):
        dense_oracle_evolve(np.zeros(1 << 13, complex), h, 1.0)


def test_zero_periods_yields_initial_state(cfg4):
    psi = StateVector.basis(0, 8)
    snaps = list(evolve_protocol(psi, build_protocol(cfg4), 0))
    assert len(snaps) == 1 and snaps[0].t == 0.0
    assert np.array_equal(snaps[0].psi.amps, psi.amps)


def test_sampling_schedule(cfg4):
    prot = build_protocol(cfg4)
    T = prot.period
    snaps = list(evolve_protocol(StateVector.basis(0, 8), prot, 3, sample_offsets=(0.0, 0.3 * T, 0.5 * T)))
    assert [(s.m, s.offset) for s in snaps] == [(m, o) for m in range(3) for o in (0.0, 0.3 * T, 0.5 * T)]
    np.testing.assert_allclose([s.t for s in snaps], [m * T + o for m in range(3) for o in (0.0, 0.3 * T, 0.5 * T)])
    with pytest.raises(ValueError):
        list(evolve_protocol(StateVector.basis(0, 8), prot, 1, sample_offsets=(T,)))


def test_period_matches_dense_product(cfg4):
    rng = np.random.default_rng(3)
    v = haar_state(8, rng)
    u = dense_period_propagator(cfg4)
    snaps = list(evolve_protocol(v, build_protocol(cfg4), 3, sample_offsets=(0.0,)))
    for s in snaps:
        np.testing.assert_allclose(s.psi.amps, np.linalg.matrix_power(u, s.m) @ v, atol=1e-10)


def test_krylov_vs_dense_over_many_periods(cfg4):
    rng = np.random.default_rng(4)
    v = haar_state(8, rng)
    prot = build_protocol(cfg4)
    kr = list(evolve_protocol(v, prot, 101, sample_offsets=(0.0,)))[-1].psi.amps
    de = list(evolve_protocol(v, prot, 101, sample_offsets=(0.0,), method="dense"))[-1].psi.amps
    assert abs(np.vdot(de, kr)) ** 2 >= 1 - 1e-10


def test_empty_protocol_is_static(cfg4):
    prot = build_protocol(cfg4)
    zero = type(prot)(tuple(type(s)(OperatorSum((), 8), s.duration, s.resonant, s.label) for s in prot.segments), 8)
    v = haar_state(8, np.random.default_rng(0))
    for s in evolve_protocol(v, zero, 4):
        np.testing.assert_array_equal(s.psi.amps, v)


def test_norm_drift_over_many_segments():
    rng = np.random.default_rng(7)
    h = random_hamiltonian(6, rng)
    v = haar_state(6, rng)
    for _ in range(10_000):
        v = evolve_segment(v, h, 0.05)
    assert abs(np.linalg.norm(v) - 1) <= 1e-10


def test_u0_at(cfg4):
    np.testing.assert_allclose(u0_at(cfg4, 0.0), np.eye(256), atol=1e-14)
    x = build_x_operator(cfg4)
    uT = u0_at(cfg4, cfg4.period)
    phase = np.vdot(x, uT) / 256
    assert abs(abs(phase) - 1) < 1e-12
    np.testing.assert_allclose(uT, phase * x, atol=1e-10)
    t = 0.37 * cfg4.period
    np.testing.assert_allclose(u0_at(cfg4, t + cfg4.period), u0_at(cfg4, t) @ uT, atol=1e-10)
    np.testing.assert_allclose(u0_at(cfg4, 0.5 * t).conj().T @ u0_at(cfg4, 0.5 * t), np.eye(256), atol=1e-12)


def test_mirror_shifts_period_propagator(cfg4):
    prot = build_protocol(cfg4)
    g = build_mirror_unitary(4)
    full = dense_period_propagator(cfg4)
    segs = [expm(-1j * s.duration * kron_dense(s.hamiltonian)) for s in prot.segments]
    first, second = segs[1] @ segs[0], segs[3] @ segs[2]
    shifted = first @ second  # U(3T/2, T/2): second half then first half of the next period
    np.testing.assert_allclose(second @ first, full, atol=1e-12)
    assert np.linalg.norm(g @ full @ g.T - shifted, 2) <= 1e-9


def test_broken_mirror_shift_fails():
    cfg = LadderConfig(L=4, omega=8 * math.pi, lambda_a=0.8, lambda_b=1.2)
    prot = build_protocol(cfg)
    segs = [expm(-1j * s.duration * kron_dense(s.hamiltonian)) for s in prot.segments]
    g = build_mirror_unitary(4)
    full = segs[3] @ segs[2] @ segs[1] @ segs[0]
    shifted = segs[1] @ segs[0] @ segs[3] @ segs[2]
    assert np.linalg.norm(g @ full @ g.T - shifted, 2) > 1e-3
