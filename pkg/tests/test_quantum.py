import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retrodiction.errors import DimensionMismatch, InvalidOperator, NotCPTP
from retrodiction.prob_core import bayes_reverse_channel, is_doubly_stochastic, uniform
from retrodiction.quantum import (
    adjoint_channel,
    amplitude_damping,
    apply_channel,
    basis_povm,
    choi_min_eigenvalue,
    dagger,
    density_matrix,
    depolarizing,
    haar_unitary,
    induced_transition,
    kraus_channel,
    petz_reverse,
    povm,
    psd_power,
    pure_state,
    quantum_process,
    quantum_retrodicted_transition,
    random_density_matrix,
    random_kraus,
    random_povm,
    retrodictive_povm,
    retrodictive_states,
    support_projector,
    trace_preservation_residual,
    unitary_channel,
)

KET0, KET1 = np.array([1, 0]), np.array([0, 1])


def random_hermitian(d, rng):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return a + dagger(a)


def random_process(seed, d, n):
    rng = np.random.default_rng(seed)
    preps = [random_density_matrix(d, rank=int(rng.integers(1, d + 1)), seed=rng) for _ in range(n)]
    channel = random_kraus(d, d, int(rng.integers(1, 4)), seed=rng)
    meas = random_povm(d, n, rank=max(1, -(-d // n)), seed=rng)
    return quantum_process(preps, channel, meas)


# -- states and channels -----------------------------------------------------

def test_density_matrix_validation():
    with pytest.raises(InvalidOperator):
        density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(InvalidOperator):
        density_matrix(np.eye(2))
    with pytest.raises(ValueError):
        density_matrix([[0.5, 0.1], [0.3, 0.5]])


def test_identity_and_unitary_action():
    rho = random_density_matrix(3, seed=1)
    assert np.allclose(apply_channel(kraus_channel([np.eye(3)]), rho).matrix, rho.matrix)
    u = haar_unitary(3, 2)
    out = apply_channel(unitary_channel(u), rho).matrix
    np.testing.assert_allclose(out, u @ rho.matrix @ dagger(u), atol=1e-14)


def test_amplitude_damping_half_on_excited_state():
    out = apply_channel(amplitude_damping(0.5), pure_state(KET1)).matrix
    np.testing.assert_allclose(out, np.diag([0.5, 0.5]), atol=1e-15)


def test_channel_dimension_checks():
    with pytest.raises(DimensionMismatch):
        apply_channel(amplitude_damping(0.2), random_density_matrix(3, seed=0))
    with pytest.raises(NotCPTP):
        kraus_channel([np.diag([1.0, 0.5])])


def test_trace_preserved():
    ch = random_kraus(3, 3, 2, seed=7)
    for k in range(5):
        out = apply_channel(ch, random_density_matrix(3, seed=k)).matrix
        assert abs(np.trace(out).real - 1) <= 1e-12


def test_adjoint_duality_on_random_probes():
    rng = np.random.default_rng(0)
    ch = random_kraus(3, 2, 3, seed=rng)
    dual = adjoint_channel(ch)
    for _ in range(10):
        x, y = random_hermitian(2, rng), random_hermitian(3, rng)
        assert abs(np.trace(dual(x) @ y) - np.trace(x @ ch(y))) <= 1e-12
    np.testing.assert_allclose(dual(np.eye(2)), np.eye(3), atol=1e-12)


def test_adjoint_of_unitary_and_depolarizing():
    rng = np.random.default_rng(1)
    u = haar_unitary(3, rng)
    x = random_hermitian(3, rng)
    np.testing.assert_allclose(adjoint_channel(unitary_channel(u))(x), dagger(u) @ x @ u, atol=1e-13)
    np.testing.assert_allclose(adjoint_channel(depolarizing(3))(x), np.trace(x) * np.eye(3) / 3,
                               atol=1e-13)


def test_depolarizing_is_cptp():
    for d in (2, 3, 4):
        ch = depolarizing(d, 0.4)
        assert choi_min_eigenvalue(ch) >= -1e-12
        assert trace_preservation_residual(ch) <= 1e-12


# -- induced transitions -----------------------------------------------------

def test_unitary_projective_setup_is_doubly_stochastic():
    rng = np.random.default_rng(3)
    eb, hb, u = haar_unitary(4, rng), haar_unitary(4, rng), haar_unitary(4, rng)
    qp = quantum_process([pure_state(eb[:, k]) for k in range(4)], unitary_channel(u),
                         basis_povm(hb), gamma=uniform(range(4)))
    assert is_doubly_stochastic(induced_transition(qp), tol=1e-12)


def test_identity_aligned_gives_identity_channel():
    qp = quantum_process([pure_state(KET0), pure_state(KET1)], kraus_channel([np.eye(2)]),
                         basis_povm(np.eye(2)), gamma=uniform((0, 1)))
    np.testing.assert_allclose(induced_transition(qp).table, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(quantum_retrodicted_transition(qp).table, np.eye(2), atol=1e-12)


def test_amplitude_damping_transition_is_not_doubly_stochastic():
    c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
    basis = np.array([[c, -s], [s, c]])
    qp = quantum_process([pure_state(basis[:, k]) for k in range(2)], amplitude_damping(0.3),
                         basis_povm(basis))
    phi = induced_transition(qp)
    direct = [[np.real(basis[:, y].conj() @ amplitude_damping(0.3)(np.outer(basis[:, x], basis[:, x]))
                       @ basis[:, y]) for y in range(2)] for x in range(2)]
    np.testing.assert_allclose(phi.table, direct, atol=1e-15)
    assert not is_doubly_stochastic(phi)


# -- Petz map ----------------------------------------------------------------

def test_petz_of_unitary_is_inverse_conjugation():
    rng = np.random.default_rng(4)
    u = haar_unitary(3, rng)
    rev = petz_reverse(unitary_channel(u), random_density_matrix(3, seed=rng))
    x = random_hermitian(3, rng)
    np.testing.assert_allclose(rev(x), dagger(u) @ x @ u, atol=1e-10)


def test_petz_of_identity_is_identity():
    rng = np.random.default_rng(5)
    rev = petz_reverse(kraus_channel([np.eye(2)]), random_density_matrix(2, seed=rng))
    x = random_hermitian(2, rng)
    np.testing.assert_allclose(rev(x), x, atol=1e-10)


def test_petz_of_complete_depolarizing_at_maximally_mixed():
    rev = petz_reverse(depolarizing(3), np.eye(3) / 3)
    rho = random_density_matrix(3, seed=6).matrix
    np.testing.assert_allclose(rev(rho), np.eye(3) / 3, atol=1e-12)


def test_petz_with_singular_output_restricts_to_support():
    # inputs confined to a 2-dim subspace of a qutrit; the identity channel keeps it there
    g0 = np.diag([0.6, 0.4, 0.0])
    rev = petz_reverse(kraus_channel([np.eye(3)]), g0)
    np.testing.assert_allclose(rev.domain, np.diag([1, 1, 0]), atol=1e-12)
    assert trace_preservation_residual(rev) <= 1e-10
    np.testing.assert_allclose(rev(g0), g0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 5), n_kraus=st.integers(1, 4))
def test_petz_is_cptp_with_fixed_point(seed, d, n_kraus):
    rng = np.random.default_rng(seed)
    ch = random_kraus(d, d, n_kraus, seed=rng)
    g0 = random_density_matrix(d, rank=int(rng.integers(1, d + 1)), seed=rng).matrix
    rev = petz_reverse(ch, g0)
    assert choi_min_eigenvalue(rev) >= -1e-10
    assert trace_preservation_residual(rev) <= 1e-10
    np.testing.assert_allclose(rev(ch(g0)), g0, atol=1e-10)


# -- retrodiction objects ----------------------------------------------------

def test_single_preparation_gives_support_projector():
    rho = random_density_matrix(3, rank=2, seed=8)
    qp = quantum_process([rho], random_kraus(3, 3, 2, seed=9), povm([np.eye(3)]))
    theta = retrodictive_povm(qp)
    np.testing.assert_allclose(theta[0], support_projector(rho.matrix), atol=1e-10)
    sigma = retrodictive_states(qp)
    np.testing.assert_allclose(sigma[0].matrix, qp.channel(rho.matrix), atol=1e-12)


def test_basis_preparations_give_basis_projectors():
    preps = [pure_state(np.eye(3)[k]) for k in range(3)]
    qp = quantum_process(preps, depolarizing(3, 0.3), basis_povm(np.eye(3)), gamma=uniform(range(3)))
    for k, t in enumerate(retrodictive_povm(qp).elements):
        np.testing.assert_allclose(t, np.diag(np.eye(3)[k]), atol=1e-12)


def test_two_nonorthogonal_preparations():
    plus = np.array([1, 1]) / math.sqrt(2)
    qp = quantum_process([pure_state(KET0), pure_state(plus)], kraus_channel([np.eye(2)]),
                         povm([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]),
                         gamma=uniform((0, 1)), tol=math.inf)
    theta = retrodictive_povm(qp)
    # explicit 2x2 algebra: gamma0 = (|0><0| + |+><+|)/2
    g0 = 0.5 * np.outer(KET0, KET0) + 0.5 * np.outer(plus, plus)
    inv = psd_power(g0, -0.5)
    np.testing.assert_allclose(theta[0], 0.5 * inv @ np.outer(KET0, KET0) @ inv, atol=1e-12)
    for t in theta.elements:
        assert np.linalg.eigvalsh(t).min() >= -1e-12
    np.testing.assert_allclose(sum(theta.elements), np.eye(2), atol=1e-10)


def test_commuting_measurement_gives_eigenprojectors():
    rho = np.diag([0.7, 0.3])
    qp = quantum_process([density_matrix(rho), density_matrix(np.diag([0.2, 0.8]))],
                         kraus_channel([np.eye(2)]), basis_povm(np.eye(2)),
                         gamma=uniform((0, 1)), tol=math.inf)
    sigma = retrodictive_states(qp, tol=math.inf)
    np.testing.assert_allclose(sigma[0].matrix, np.diag([1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(sigma[1].matrix, np.diag([0.0, 1.0]), atol=1e-12)


def test_noncommuting_sigma_is_a_state():
    qp = random_process(10, 2, 2)
    for s in retrodictive_states(qp).values():
        assert abs(np.trace(s.matrix).real - 1) <= 1e-12
        assert np.linalg.eigvalsh(s.matrix).min() >= -1e-12


def test_unitary_setup_reverse_is_transpose():
    rng = np.random.default_rng(11)
    eb, hb, u = haar_unitary(3, rng), haar_unitary(3, rng), haar_unitary(3, rng)
    qp = quantum_process([pure_state(eb[:, k]) for k in range(3)], unitary_channel(u),
                         basis_povm(hb), gamma=uniform(range(3)))
    phi = induced_transition(qp)
    np.testing.assert_allclose(quantum_retrodicted_transition(qp).table, phi.table.T, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 4), n=st.integers(2, 5))
def test_quantum_retrodiction_matches_bayes(seed, d, n):
    qp = random_process(seed, d, n)
    phi = induced_transition(qp)
    classical = bayes_reverse_channel(phi, qp.gamma)
    np.testing.assert_allclose(quantum_retrodicted_transition(qp).table, classical.table, atol=1e-9)
    np.testing.assert_allclose(sum(retrodictive_povm(qp).elements), support_projector(qp.gamma0),
                               atol=1e-10)


# -- Haar sampling -----------------------------------------------------------

def test_haar_scalar_has_unit_modulus():
    assert abs(abs(haar_unitary(1, 0)[0, 0]) - 1) <= 1e-15


@pytest.mark.parametrize("d", [2, 3, 5, 8])
def test_haar_is_unitary_and_reproducible(d):
    u = haar_unitary(d, 42)
    assert np.abs(dagger(u) @ u - np.eye(d)).max() <= 1e-12
    assert np.array_equal(u, haar_unitary(d, 42))


def test_haar_first_moment():
    # E|U_00|^2 = 1/d for Haar measure
    vals = [abs(haar_unitary(3, s)[0, 0]) ** 2 for s in range(3000)]
    assert abs(np.mean(vals) - 1 / 3) < 0.02


def test_random_kraus_is_cptp():
    ch = random_kraus(3, 2, 3, seed=0)
    assert choi_min_eigenvalue(ch) >= -1e-12
    assert trace_preservation_residual(ch) <= 1e-12
