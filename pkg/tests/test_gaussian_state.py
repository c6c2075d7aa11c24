"""Tests for gaussian_state module."""
import numpy as np
import pytest

from gaussian_state import (
    OMEGA,
    SA_MATRIX,
    Basis,
    InadmissibleStateError,
    PhaseModSpec,
    TwoModeGaussian,
    basis_change,
    coherent,
    cov_to_vec10,
    displacement_amplitudes,
    from_moments,
    mixed_basis_state,
    phase_modulated_state,
    semiclassical_means,
    sideband_exchange,
    state_from_json,
    symplectic_eigenvalues,
    thermal,
    vacuum,
    vec10_to_cov,
)


def test_sa_matrix_is_orthogonal_involution():
    assert np.allclose(SA_MATRIX @ SA_MATRIX, np.eye(4), atol=1e-12)
    assert np.allclose(SA_MATRIX, SA_MATRIX.T)
    # the basis change is symplectic as well
    assert np.allclose(SA_MATRIX @ OMEGA @ SA_MATRIX.T, OMEGA, atol=1e-12)


def test_vacuum_in_both_bases():
    vac = vacuum()
    sa = vac.in_basis("sa")
    assert sa.basis is Basis.SYM_ANTISYM
    assert np.allclose(sa.mean, 0.0)
    assert np.allclose(sa.cov, np.eye(4))


def test_basis_change_example():
    a = 1.7
    sa = basis_change(coherent([0.0, a, 0.0, a]))
    assert np.allclose(sa.mean, [0.0, a * np.sqrt(2.0), 0.0, 0.0])


def test_basis_change_is_involutive(random_admissible_states):
    for state in random_admissible_states:
        back = basis_change(basis_change(state))
        assert back.basis is state.basis
        assert np.allclose(back.mean, state.mean, atol=1e-12)
        assert np.allclose(back.cov, state.cov, atol=1e-12)


def test_basis_change_preserves_invariants(random_admissible_states):
    """Symplectic spectrum, trace and determinant survive the basis change."""
    for state in random_admissible_states:
        sa = basis_change(state)
        assert np.allclose(symplectic_eigenvalues(sa.cov), symplectic_eigenvalues(state.cov), atol=1e-10)
        assert np.trace(sa.cov) == pytest.approx(np.trace(state.cov))
        assert np.linalg.det(sa.cov) == pytest.approx(np.linalg.det(state.cov), rel=1e-9)
        assert sa.is_admissible()


def test_symplectic_eigenvalues_of_simple_states():
    assert np.allclose(vacuum().symplectic_eigenvalues(), [1.0, 1.0])
    assert np.allclose(thermal(0.5).symplectic_eigenvalues(), [1.5, 1.5])
    # two-mode squeezed vacuum is pure
    r = 0.6
    ch, sh = np.cosh(2 * r), np.sinh(2 * r)
    cov = np.array([[ch, 0, sh, 0], [0, ch, 0, -sh], [sh, 0, ch, 0], [0, -sh, 0, ch]])
    assert np.allclose(symplectic_eigenvalues(cov), [1.0, 1.0], atol=1e-10)


def test_constructors():
    state = coherent([1.0, 0.0, 0.0, 0.0])
    assert np.allclose(state.cov, np.eye(4))
    assert state.mean.tolist() == [1.0, 0.0, 0.0, 0.0]
    assert np.allclose(thermal(0.5).cov, 1.5 * np.eye(4))


def test_inadmissible_state_reports_eigenvalue():
    with pytest.raises(InadmissibleStateError) as exc:
        thermal(-0.5)
    assert exc.value.eigenvalue == pytest.approx(0.5)
    with pytest.raises(InadmissibleStateError) as exc:
        from_moments(np.zeros(4), np.diag([1.0, 1.0, -0.2, 1.0]))
    assert exc.value.eigenvalue == pytest.approx(-0.2)


def test_squeezed_but_admissible_state_passes():
    """Single-quadrature squeezing below vacuum is fine if the conjugate is anti-squeezed."""
    state = from_moments(np.zeros(4), np.diag([0.5, 2.0, 1.0, 1.0]))
    assert state.is_admissible()
    assert not TwoModeGaussian(np.zeros(4), np.diag([0.5, 1.0, 1.0, 1.0])).is_admissible()


def test_state_validation():
    with pytest.raises(ValueError):
        TwoModeGaussian(np.zeros(3), np.eye(4))
    asym = np.eye(4)
    asym[0, 1] = 0.1
    with pytest.raises(ValueError):
        TwoModeGaussian(np.zeros(4), asym)
    with pytest.raises(ValueError):
        Basis.parse("homodyne")
    state = vacuum()
    with pytest.raises(ValueError):
        state.mean[0] = 1.0


@pytest.mark.parametrize("phi", [0.0, 0.4, np.pi / 2, 2.5, 4.0])
def test_phase_modulated_state(phi):
    s = 2.0
    state = phase_modulated_state(PhaseModSpec(s=s, phi=phi))
    assert state.basis is Basis.SIDEBAND
    sa = state.in_basis(Basis.SYM_ANTISYM)
    assert np.allclose(sa.mean, [0.0, s * np.cos(phi), s * np.sin(phi), 0.0], atol=1e-12)
    assert np.linalg.norm(state.mean) == pytest.approx(s)
    a_plus, a_minus = displacement_amplitudes(state)
    assert abs(a_plus + np.conj(a_minus)) < 1e-12
    p_mean, q_mean = semiclassical_means(state)
    assert abs(p_mean) < 1e-12
    # Q = q_s - i p_a with p_a = s sin(phi)
    assert abs(q_mean - s * np.exp(-1j * phi)) < 1e-12


def test_phase_modulated_examples_and_noise():
    sa = phase_modulated_state(PhaseModSpec(s=2.0)).in_basis("sa")
    assert np.allclose(sa.mean, [0.0, 2.0, 0.0, 0.0], atol=1e-12)
    sa = phase_modulated_state(PhaseModSpec(s=2.0, phi=np.pi / 2)).in_basis("sa")
    assert np.allclose(sa.mean, [0.0, 0.0, 2.0, 0.0], atol=1e-12)
    noisy = phase_modulated_state(PhaseModSpec(s=31.3, excess_p=0.25, excess_q=0.28))
    assert np.allclose(np.diag(noisy.cov), [1.25, 1.28, 1.28, 1.25])
    with pytest.raises(ValueError):
        PhaseModSpec(s=-1.0)


def test_semiclassical_means_amplitude_displacement():
    state = coherent([1.3, 0.0, 0.0, 0.0], Basis.SYM_ANTISYM)
    assert semiclassical_means(state) == (complex(1.3, 0.0), complex(0.0, 0.0))
    assert semiclassical_means(vacuum()) == (0j, 0j)


def test_sideband_exchange(random_admissible_states):
    state = coherent([1.0, 2.0, 3.0, 4.0])
    swapped = sideband_exchange(state)
    assert swapped.mean.tolist() == [3.0, -4.0, 1.0, -2.0]
    for state in random_admissible_states:
        twice = sideband_exchange(sideband_exchange(state))
        assert np.allclose(twice.cov, state.cov, atol=1e-12)
    sa = sideband_exchange(coherent([1.0, 0.0, 0.0, 0.0], "sa"))
    assert sa.basis is Basis.SYM_ANTISYM


def test_json_round_trip(random_admissible_states):
    state = random_admissible_states[0].in_basis("sa")
    data = state.to_json()
    assert data["basis"] == "sa"
    back = state_from_json(data)
    assert back.basis is Basis.SYM_ANTISYM
    assert np.allclose(back.cov, state.cov)
    with pytest.raises(ValueError):
        state_from_json({"mean": [0, 0, 0, 0]})


def test_mixed_basis_state():
    state = mixed_basis_state([0.0, 2.0, 0.0, 0.0], "sa", np.eye(4) * 1.1, "sideband")
    assert state.basis is Basis.SIDEBAND
    assert np.allclose(state.mean, [0.0, np.sqrt(2.0), 0.0, np.sqrt(2.0)])
    assert np.allclose(state.cov, 1.1 * np.eye(4))


def test_vec10_layout(random_admissible_states):
    cov = random_admissible_states[3].cov
    vec = cov_to_vec10(cov)
    assert vec.shape == (10,)
    assert vec[0] == cov[0, 0] and vec[4] == cov[1, 1] and vec[7] == cov[2, 2] and vec[9] == cov[3, 3]
    assert vec[1] == cov[0, 1] and vec[8] == cov[2, 3]
    assert np.allclose(vec10_to_cov(vec), cov)
