"""State, operator, and density-matrix primitives."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapsim import CommutingSet, DensityMatrix, StateVector, born_weights, commutation_check, normalize, project
from collapsim.errors import ConfigError, EmptyEigenmanifold, ZeroNorm
from collapsim.hilbert import pure_density, validate_hamiltonian


def test_normalize_trivial_cases():
    res = normalize(StateVector([1.0, 0.0]))
    assert np.allclose(res.state.amplitudes, [1.0, 0.0])
    assert res.weight == pytest.approx(1.0)
    res = normalize(StateVector([3.0, 4.0]))
    assert np.allclose(res.state.amplitudes, [0.6, 0.8])
    assert res.weight == pytest.approx(25.0)
    assert res.log_weight == pytest.approx(math.log(25.0))


def test_normalize_with_extreme_log_offset():
    # 60-digit oracle: log({0.3^2 + 0.4^2} e^{-1600}) = -1601.386294361119890...
    res = normalize(StateVector([0.3, 0.4], log_offset=-800.0))
    assert res.log_weight == pytest.approx(-1601.3862943611198, rel=1e-15)
    assert math.isfinite(res.log_weight)
    assert res.weight == 0.0  # the float weight underflows; the log carries it
    assert np.allclose(res.state.amplitudes, [0.6, 0.8])


def test_normalize_zero_raises():
    with pytest.raises(ZeroNorm):
        normalize(StateVector([0.0, 0.0]))


@given(
    re1=st.floats(-5, 5),
    im1=st.floats(-5, 5),
    re2=st.floats(-5, 5),
    im2=st.floats(-5, 5),
)
@settings(max_examples=100, deadline=None)
def test_normalize_is_unit(re1, im1, re2, im2):
    v = np.array([complex(re1, im1), complex(re2, im2)])
    if np.sum(np.abs(v) ** 2) < 1e-12:
        return
    res = normalize(StateVector(v))
    assert res.state.norm_sq() == pytest.approx(1.0, abs=1e-12)


def test_project_idempotent_and_complete(two_state):
    v = StateVector([0.6, 0.8])
    p1 = project(v, two_state, 0, 1.0)
    p2 = project(p1, two_state, 0, 1.0)
    assert np.array_equal(p1.amplitudes, p2.amplitudes)
    total = sum(
        project(v, two_state, 0, ev).norm_sq() for ev in (1.0, -1.0)
    )
    assert total == pytest.approx(v.norm_sq(), rel=1e-14)
    # Born weights of the initial amplitudes
    assert project(v, two_state, 0, 1.0).norm_sq() == pytest.approx(0.36)
    assert project(v, two_state, 0, -1.0).norm_sq() == pytest.approx(0.64)


def test_project_empty_manifold_raises(two_state):
    with pytest.raises(EmptyEigenmanifold):
        project(StateVector([1.0, 0.0]), two_state, 0, 2.0)


def test_commutation_check_cases(two_state):
    d = two_state.dim
    assert commutation_check(np.diag([0.4, -0.2]), two_state) == 0.0
    assert commutation_check(np.eye(d), two_state) == 0.0
    # hand-computed and verified with a dense-matrix oracle: max |[A, X]| = 2
    sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    a = np.diag([1.0, -1.0]).astype(complex)
    oracle = float(np.max(np.abs(a @ sx - sx @ a)))
    assert oracle == 2.0
    assert commutation_check(sx, two_state) == pytest.approx(2.0)


def test_validate_hamiltonian_rejects_non_hermitian():
    with pytest.raises(ConfigError):
        validate_hamiltonian(np.array([[0.0, 1.0], [0.0, 0.0]]))
    h = validate_hamiltonian(np.array([[1.0, 1j], [-1j, 0.5]]))
    assert h.shape == (2, 2)


def test_outcome_groups_degenerate():
    aset = CommutingSet([[1.0, 1.0, -1.0]])
    groups = aset.outcome_groups()
    assert len(groups) == 2
    assert groups[0].indices.tolist() == [0, 1]
    assert groups[1].indices.tolist() == [2]
    # joint grouping over two operators distinguishes (1, 0) from (1, 1)
    joint = CommutingSet([[1.0, 1.0, -1.0], [0.0, 1.0, 0.0]])
    assert len(joint.outcome_groups()) == 3
    assert joint.group_of_basis().tolist() == [0, 1, 2]


def test_pairwise_gap_sq(two_state):
    w = two_state.pairwise_gap_sq()
    assert np.array_equal(w, np.array([[0.0, 4.0], [4.0, 0.0]]))


def test_born_weights_sum_to_one(three_state, psi_three):
    bw = born_weights(psi_three, three_state)
    assert bw.tolist() == pytest.approx([0.36, 0.2304, 0.4096])
    assert float(bw.sum()) == pytest.approx(1.0)


def test_density_matrix_validation():
    DensityMatrix(pure_density(np.array([0.6, 0.8]))).validate()
    with pytest.raises(ConfigError):
        DensityMatrix(np.array([[0.5, 0.1], [0.3, 0.5]])).validate()  # not Hermitian
    with pytest.raises(ConfigError):
        DensityMatrix(np.diag([0.7, 0.7])).validate()  # trace 1.4
    with pytest.raises(ConfigError):
        DensityMatrix(np.diag([1.5, -0.5])).validate()  # negative eigenvalue


def test_operator_matrix_diagonal(three_state):
    m = three_state.operator_matrix(0)
    assert np.array_equal(m, np.diag([1.0, 0.0, -1.0]).astype(complex))
