"""
Test suite for the three-level NV spin in the rotating particle.
Run tests with: pytest test_spin_levels.py -v
"""

import math

import numpy as np
import pytest

from sgi_sim.core_model import DEFAULT_CONSTANTS, ParticleParams
from sgi_sim.errors import ParameterError
from sgi_sim.spin_levels import (
    SpinAmplitudes,
    SpinHamiltonianParams,
    build_spin_hamiltonian,
    edh_ratio,
    edh_torque,
    evolve_spin,
    max_step,
    off_resonance_margin,
    resonance_scan,
    two_level_transfer_bound,
)

B0 = 0.01
THETA0 = 0.01
OMEGA0 = 2 * math.pi * 1e4


@pytest.fixture
def params():
    return SpinHamiltonianParams.from_physics(B0, THETA0, OMEGA0)


class TestHamiltonian:
    """Test the effective spin Hamiltonian."""

    def test_hermitian(self, params):
        """Test H(t) = H(t)^dagger at arbitrary times."""
        for t in (0.0, 1.3e-5, 0.7):
            H = build_spin_hamiltonian(t, params)
            np.testing.assert_allclose(H, H.conj().T)

    def test_reduces_to_static_matrix_at_zero(self, params):
        """Test H(0) = H0."""
        np.testing.assert_allclose(build_spin_hamiltonian(0.0, params), params.H0)

    def test_coupling_from_tilt(self, params):
        """Test W = mu B sin(theta0) / sqrt(2)."""
        expected = DEFAULT_CONSTANTS.mu_nv * B0 * math.sin(THETA0) / math.sqrt(2)
        assert params.W == pytest.approx(expected)

    def test_negative_coupling_rejected(self):
        """Test that W < 0 is rejected."""
        with pytest.raises(ParameterError):
            SpinHamiltonianParams(1e-24, 1e-24, -1e-27, OMEGA0)

    def test_step_cap(self, params):
        """Test the piecewise step resolves the fastest level."""
        fastest = params.Delta_plus / params.hbar
        assert max_step(params) == pytest.approx(2 * math.pi / (200 * fastest))


class TestSpinAmplitudes:
    """Test the spin state record."""

    def test_basis_states(self):
        """Test the three basis states."""
        np.testing.assert_array_equal(SpinAmplitudes.basis('zero').populations(), [0, 1, 0])
        with pytest.raises(ParameterError):
            SpinAmplitudes.basis('up')

    def test_normalization_required(self):
        """Test that unnormalized states are rejected."""
        with pytest.raises(ParameterError):
            SpinAmplitudes(1.0, 1.0, 0.0)


class TestEvolution:
    """Test unitary evolution."""

    def test_unitarity(self, params):
        """Test |c+|^2 + |c0|^2 + |c-|^2 = 1 within 1e-10."""
        state = SpinAmplitudes.from_array(np.array([1, 1j, -1]) / math.sqrt(3))
        evolution = evolve_spin(state, params, 1e-5, samples=2001)
        assert evolution.norm_drift <= 1e-10

    def test_methods_agree(self, params):
        """Test the rotating-frame solution against piecewise propagation."""
        state = SpinAmplitudes.basis('minus')
        exact = evolve_spin(state, params, 2e-9, samples=21)
        stepped = evolve_spin(state, params, 2e-9, samples=21, method='piecewise')
        np.testing.assert_allclose(stepped.amplitudes, exact.amplitudes, atol=1e-8)

    def test_unknown_method(self, params):
        """Test that unknown methods are rejected."""
        with pytest.raises(ParameterError):
            evolve_spin(SpinAmplitudes.basis('plus'), params, 1e-6, method='magnus')

    def test_transfer_from_minus_stays_below_bound_scale(self, params):
        """Test max transfer out of -1 over 10 us against the two-level bound."""
        evolution = evolve_spin(SpinAmplitudes.basis('minus'), params, 1e-5, samples=2001)
        bound = two_level_transfer_bound(params, 'minus')
        assert evolution.max_transfer <= 1e-5
        assert bound / 10 <= evolution.max_transfer <= 10 * bound

    def test_state_at(self, params):
        """Test that sampled states stay normalized records."""
        evolution = evolve_spin(SpinAmplitudes.basis('plus'), params, 1e-6, samples=11)
        assert evolution.state_at(10).populations().sum() == pytest.approx(1.0)
        assert evolution.initial_level == 0


class TestOffResonance:
    """Test the off-resonance criteria."""

    def test_baseline_margin(self, params):
        """Test min(|Delta+|, |Delta-|)/W of about 1308 passes the 1e3 factor."""
        report = off_resonance_margin(params)
        assert report.margin == pytest.approx(1308, rel=1e-2)
        assert report.margin == report.margin_minus
        assert report.passed
        assert report.to_dict()['passed'] is True

    def test_large_tilt_fails(self):
        """Test that a large tilt couples the levels too strongly."""
        report = off_resonance_margin(SpinHamiltonianParams.from_physics(B0, 0.5, OMEGA0))
        assert not report.passed

    def test_untilted_has_no_coupling(self):
        """Test theta0 = 0 gives an infinite margin and no transfer."""
        params = SpinHamiltonianParams.from_physics(B0, 0.0, OMEGA0)
        assert off_resonance_margin(params).margin == math.inf
        assert two_level_transfer_bound(params) == 0.0

    def test_transfer_bound(self, params):
        """Test 4W^2/(4W^2 + Delta^2) of about 2.3e-6."""
        assert two_level_transfer_bound(params, 'minus') == pytest.approx(2.34e-6, rel=2e-2)
        with pytest.raises(ParameterError):
            two_level_transfer_bound(params, 'zero')


class TestResonance:
    """Test the rotation-driven resonance."""

    def test_resonance_dominates_neighbours(self):
        """Test transfer at the resonant omega0 exceeds +-5% detuned points by 100x."""
        constants = DEFAULT_CONSTANTS
        omega_star = (constants.D_zfs + constants.mu_nv * B0 * math.cos(THETA0)) / (2 * constants.hbar)
        grid = [0.95 * omega_star, omega_star, 1.05 * omega_star]
        table = resonance_scan(lambda w: SpinHamiltonianParams.from_physics(B0, THETA0, w), grid, 1e-6)
        low, peak, high = table['max_transfer']
        assert peak > 0.9
        assert peak > 100 * low
        assert peak > 100 * high
        assert table['two_level_bound'].iloc[1] == pytest.approx(1.0)


class TestEinsteinDeHaas:
    """Test the EdH torque and its size."""

    def test_ratio_at_weak_field(self):
        """Test hbar omega0 / (mu B1) of about 3.6e-3 at 1 G."""
        assert edh_ratio(OMEGA0, 1e-4) == pytest.approx(3.57e-3, rel=1e-2)
        with pytest.raises(ParameterError):
            edh_ratio(OMEGA0, 0.0)

    def test_torque_components(self):
        """Test the Zeeman and EdH parts of the torque separately."""
        particle = ParticleParams(mass=1e-17)
        zeeman = edh_torque([1, 0, 0], [0, 0, 0], [0, 0, B0], particle)
        np.testing.assert_allclose(zeeman, [0, DEFAULT_CONSTANTS.mu_nv * B0, 0])
        L = particle.inertia * OMEGA0
        edh = edh_torque([1, 0, 0], [0, L, 0], [0, 0, 0], particle)
        np.testing.assert_allclose(edh, [0, 0, DEFAULT_CONSTANTS.hbar * OMEGA0])
        np.testing.assert_allclose(edh_torque([0, 0, 1], [0, 0, L], [0, 0, B0], particle), [0, 0, 0])
