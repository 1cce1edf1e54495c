import math

import numpy as np
import pytest
from scipy.linalg import expm

from floquet_ladder.ladder import (
    DriveProtocol,
    LadderConfig,
    Segment,
    SymmetryError,
    build_mirror_unitary,
    build_protocol,
    build_vsc,
    build_x_operator,
    mirror_transform,
    o_odd,
)
from floquet_ladder.observables import MissingOffsetError, TrajectoryRecord
from floquet_ladder.pauli import OperatorSum, PauliString, to_dense
from floquet_ladder.propagator import u0_at
from floquet_ladder.symmetry import (
    AlignmentError,
    SymmetryElement,
    SymmetryReport,
    check_antiunitary_dynamical_symmetry,
    check_unitary_dynamical_symmetry,
    expression_1a_residual,
    group_algebra_report,
    interaction_picture_element,
    micromotion_residual,
    mirror_element,
    phase_aligned_residual,
)
from floquet_ladder.vanvleck import build_dn, fourier_table, kick_operator


@pytest.fixture(scope="module")
def table4():
    return fourier_table(LadderConfig(L=4, omega=8 * math.pi))


def toy_protocol(mats, n=1):
    return DriveProtocol(tuple(Segment(m, 0.25, False) for m in mats), n)


def op(label, c=1.0, n=1):
    return OperatorSum((PauliString.from_label(label, c),), n)


def test_report_and_element_invariants():
    assert SymmetryReport("r", 1e-10, 1e-9).passed
    assert not SymmetryReport("r", 2e-9, 1e-9).passed
    assert SymmetryReport("r", 0.0).as_dict()["passed"] is True
    with pytest.raises(ValueError):
        SymmetryElement("unitary", np.array([[1.0, 0], [0, 2.0]]))
    with pytest.raises(ValueError):
        SymmetryElement("projective", np.eye(2))


def test_phase_alignment():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert phase_aligned_residual(a, np.exp(0.7j) * a) < 1e-12
    assert phase_aligned_residual(a, a + 0.1) > 1e-3


def test_ladder_mirror_relation():
    cfg = LadderConfig(L=4)
    rep = check_unitary_dynamical_symmetry(build_protocol(cfg), mirror_element(4))
    assert rep.passed and rep.max_residual <= 1e-12


def test_broken_mirror_residual_is_drive_difference():
    cfg = LadderConfig(L=4, lambda_a=0.8, lambda_b=1.2)
    rep = check_unitary_dynamical_symmetry(build_protocol(cfg), mirror_element(4))
    diff = to_dense(mirror_transform(build_vsc(cfg, "a"), 4) - build_vsc(cfg, "b"))
    assert rep.max_residual == pytest.approx(np.linalg.norm(diff, 2), rel=1e-12)
    assert not rep.passed


def test_identity_on_repeating_protocol():
    p = toy_protocol([op("X0"), op("Z0"), op("X0"), op("Z0")])
    assert check_unitary_dynamical_symmetry(p, SymmetryElement("unitary", np.eye(2))).max_residual == 0.0
    q = toy_protocol([op("X0"), op("Z0"), op("Z0"), op("X0")])
    assert check_unitary_dynamical_symmetry(q, SymmetryElement("unitary", np.eye(2))).max_residual > 1


def test_alignment_error():
    p = DriveProtocol((Segment(op("X0"), 0.3, False), Segment(op("Z0"), 0.7, False)), 1)
    with pytest.raises(AlignmentError):
        check_unitary_dynamical_symmetry(p, SymmetryElement("unitary", np.eye(2)))
    with pytest.raises(ValueError):
        check_unitary_dynamical_symmetry(p, SymmetryElement("antiunitary", np.eye(2)))


def test_antiunitary_checks():
    conj = SymmetryElement("antiunitary", np.eye(2), "K")
    const = toy_protocol([op("X0")] * 4)
    assert check_antiunitary_dynamical_symmetry(const, conj).max_residual == 0.0
    # h1 on [0, T/2) and h2 on [T/2, T); reflection about T/4 maps each half to itself
    two = DriveProtocol((Segment(op("X0"), 0.5, False), Segment(op("Z0"), 0.5, False)), 1)
    assert check_antiunitary_dynamical_symmetry(two, conj).max_residual == 0.0
    imag = toy_protocol([op("Y0")] * 4)
    assert check_antiunitary_dynamical_symmetry(imag, conj).max_residual == pytest.approx(2.0)
    ladder = build_protocol(LadderConfig(L=4))
    rep = check_antiunitary_dynamical_symmetry(ladder, SymmetryElement("antiunitary", np.eye(256)))
    assert not rep.passed


def test_interaction_picture_element(cfg4):
    ident = SymmetryElement("unitary", np.eye(256))
    gi = interaction_picture_element(cfg4, ident, verify=False)
    with pytest.raises(SymmetryError):
        interaction_picture_element(cfg4, ident)
    np.testing.assert_allclose(gi.matrix, u0_at(cfg4, 0.5 * cfg4.period).conj().T, atol=1e-14)
    gm = interaction_picture_element(cfg4, mirror_element(4)).matrix
    x = build_x_operator(cfg4)
    sq = gm @ gm @ x
    assert abs(abs(sq[0, 0]) - 1) < 1e-10 and np.abs(sq - sq[0, 0] * np.eye(256)).max() < 1e-10
    assert np.abs(gm @ x @ gm.conj().T - x).max() <= 1e-10


def test_group_algebra(cfg4, table4):
    reports = group_algebra_report(cfg4, table=table4)
    assert len(reports) == 8
    assert all(r.passed for r in reports), [r.as_dict() for r in reports if not r.passed]
    control = group_algebra_report(cfg4, negative_control=1, table=table4)
    assert not any(r.passed for r in control)


def test_group_algebra_breaking_sweep():
    res = []
    for d in (0.0, 0.2, 0.4):
        cfg = LadderConfig(L=4, omega=8 * math.pi, lambda_a=0.5 - d / 2, lambda_b=0.5 + d / 2)
        res.append(group_algebra_report(cfg)[1].max_residual)
    assert res[0] <= 1e-9 < res[1] < res[2]


def test_expression_1a_shrinks():
    r = [expression_1a_residual(LadderConfig(L=4, omega=om), 2) for om in (8 * math.pi, 16 * math.pi)]
    assert r[1] < r[0]


def _records(a, b):
    recs = []
    for m, (x, y) in enumerate(zip(a, b)):
        recs.append(TrajectoryRecord(m, float(m), x, 0.0, 0.0, 0.0, 0.0))
        recs.append(TrajectoryRecord(m, m + 0.5, y, 0.0, 0.0, 0.0, 0.5))
    return recs


def test_micromotion_residual_series():
    m, r = micromotion_residual(_records([1.0, -0.5, 0.2], [-1.0, 0.4, -0.2]), -1)
    np.testing.assert_array_equal(m, [0, 1, 2])
    np.testing.assert_allclose(r, [0.0, -0.1, 0.0])
    _, r_even = micromotion_residual(_records([1.0], [0.9]), 1)
    np.testing.assert_allclose(r_even, [-0.1])
    with pytest.raises(ValueError):
        micromotion_residual(_records([1.0], [1.0]), 0)
    with pytest.raises(MissingOffsetError):
        micromotion_residual(_records([1.0], [1.0])[:1], -1)


def _eigenstate_residual(omega, dressed, n_periods=200):
    cfg = LadderConfig(L=4, omega=omega)
    table = fourier_table(cfg)
    segs = [expm(-1j * s.duration * to_dense(s.hamiltonian)) for s in build_protocol(cfg).segments]
    half = segs[1] @ segs[0]
    full = segs[3] @ segs[2] @ half
    o = to_dense(o_odd(cfg))
    if dressed:
        _, vecs = np.linalg.eigh(build_dn(cfg, 2, table))
        psi = expm(-1j * (kick_operator(table, 0.0, 1) + kick_operator(table, 0.0, 2))) @ vecs[:, 0]
    else:
        _, vecs = np.linalg.eigh(build_dn(cfg, 0, table))
        psi = vecs[:, 0]
    r = []
    for _ in range(n_periods):
        h = half @ psi
        r.append(np.vdot(psi, o @ psi).real + np.vdot(h, o @ h).real)
        psi = full @ psi
    return float(np.max(np.abs(r)))


@pytest.mark.xfail(strict=True, reason="kick dressing leaves an O(Omega^-2) residual of about 0.07 at Omega = 16 pi")
def test_d0_eigenstate_residual_bound():
    assert _eigenstate_residual(16 * math.pi, dressed=False) <= 1e-2


def test_d0_eigenstate_residual_falls_with_frequency():
    r16, r32 = (_eigenstate_residual(om, dressed=False) for om in (16 * math.pi, 32 * math.pi))
    assert r16 / r32 == pytest.approx(4.0, rel=0.2)


def test_dressed_eigenstate_residual_bound():
    assert _eigenstate_residual(16 * math.pi, dressed=True) <= 1e-2


def test_mirror_unitary_matches_element():
    np.testing.assert_array_equal(mirror_element(4).matrix, build_mirror_unitary(4))
