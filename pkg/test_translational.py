"""
Test suite for arm trajectories and interferometer closure.
Run tests with: pytest test_translational.py -v
"""

import numpy as np
import pytest

from sgi_sim.core_model import DEFAULT_CONSTANTS, ParticleParams
from sgi_sim.errors import ClosureError, ParameterError
from sgi_sim.field_protocol import FieldProtocol
from sgi_sim.rotational import build_time_grid
from sgi_sim.translational import (
    BranchMotion,
    SpinBranch,
    branch_pair,
    close_interferometer,
    closure_residual,
    equilibrium_position,
    evolve_branch,
    max_separation,
    stage_energy,
    superposition_size_eq,
    trap_frequency,
)

PARTICLE = ParticleParams(mass=1e-17)
GYRO_GUESS = FieldProtocol(B0=0.01, B1=1e-4, eta=45.0, tau1=0.482, tau2=0.514, tau3=0.8022, tau4=1.320)
STATIC_GUESS = FieldProtocol(B0=0.01, B1=1e-4, eta=45.0, tau1=0.494, tau2=0.513, tau3=0.800, tau4=1.314)


@pytest.fixture(scope="module")
def gyro_closed():
    return close_interferometer(GYRO_GUESS, PARTICLE, branch_pair('gyroscopic_pm1'))


@pytest.fixture(scope="module")
def static_closed():
    return close_interferometer(STATIC_GUESS, PARTICLE, branch_pair('static_0m1'))


def _arms(protocol, scheme, dt=1e-3):
    grid = build_time_grid(protocol, protocol.tau4, dt)
    return [evolve_branch(branch, protocol, PARTICLE, grid) for branch in branch_pair(scheme)]


class TestTrap:
    """Test trap constants."""

    def test_trap_frequency(self):
        """Test Omega = sqrt(-chi/mu0) eta = 3.161 rad/s at 0.45 G/um."""
        assert trap_frequency(45.0) == pytest.approx(3.161, rel=1e-3)
        assert trap_frequency(-45.0) == pytest.approx(3.161, rel=1e-3)

    def test_equilibrium_separation(self):
        """Test the s=+1/s=-1 equilibrium separation of 16.7 um."""
        assert superposition_size_eq(PARTICLE, 45.0) == pytest.approx(1.671e-5, rel=1e-3)

    def test_equilibrium_positions_straddle_centre(self):
        """Test that the two spin states sit symmetric about Z0."""
        Z0 = GYRO_GUESS.Z0
        up = equilibrium_position(1, -45.0, PARTICLE, Z0)
        down = equilibrium_position(-1, -45.0, PARTICLE, Z0)
        assert up - Z0 == pytest.approx(Z0 - down)
        assert up - down == pytest.approx(superposition_size_eq(PARTICLE, 45.0))
        assert equilibrium_position(0, -45.0, PARTICLE, Z0) == Z0

    def test_spin_up_sits_below_centre_for_positive_gradient(self):
        """Test z_eq = Z0 - s eta~ mu / (m Omega^2) and its sign."""
        Z0 = GYRO_GUESS.Z0
        omega = trap_frequency(45.0)
        shift = DEFAULT_CONSTANTS.mu_nv * 45.0 / (PARTICLE.mass * omega ** 2)
        assert equilibrium_position(1, 45.0, PARTICLE, Z0) == pytest.approx(Z0 - shift)
        assert equilibrium_position(1, 45.0, PARTICLE, Z0) < Z0 < equilibrium_position(-1, 45.0, PARTICLE, Z0)
        assert equilibrium_position(1, -45.0, PARTICLE, Z0) > Z0

    def test_no_equilibrium_without_gradient(self):
        """Test that the free stage has no equilibrium."""
        with pytest.raises(ParameterError):
            equilibrium_position(1, 0.0, PARTICLE, GYRO_GUESS.Z0)


class TestSpinBranch:
    """Test spin histories."""

    def test_flip_at_tau3(self):
        """Test that the spin changes at tau3."""
        branch = SpinBranch(1, -1, 'L')
        assert branch.spin_at(0.5, 0.8) == 1
        assert branch.spin_at(0.8, 0.8) == -1

    def test_unsupported_flip_rejected(self):
        """Test that 0 -> +1 is not a supported flip."""
        with pytest.raises(ParameterError):
            SpinBranch(0, 1, 'L')

    def test_scheme_pairs(self):
        """Test the two arm pairs."""
        left, right = branch_pair('static_0m1')
        assert (left.s_initial, left.s_after_flip) == (-1, 0)
        assert (right.s_initial, right.s_after_flip) == (0, -1)
        with pytest.raises(ParameterError):
            branch_pair('unknown')


class TestBranchMotion:
    """Test the closed-form trajectories."""

    def test_closed_form_matches_ode(self):
        """Test closed form against the adaptive integrator on every stage."""
        grid = build_time_grid(GYRO_GUESS, GYRO_GUESS.tau4, 5e-3)
        for branch in branch_pair('gyroscopic_pm1'):
            exact = evolve_branch(branch, GYRO_GUESS, PARTICLE, grid)
            numeric = evolve_branch(branch, GYRO_GUESS, PARTICLE, grid, method='ode')
            np.testing.assert_allclose(numeric.z, exact.z, rtol=0, atol=1e-10)
            np.testing.assert_allclose(numeric.p_z / PARTICLE.mass, exact.p_z / PARTICLE.mass, rtol=0, atol=1e-9)

    def test_energy_conserved_within_stage(self):
        """Test the stage-one energy along the closed form."""
        branch = SpinBranch(1, -1, 'L')
        motion = BranchMotion(branch, GYRO_GUESS, PARTICLE)
        t = np.linspace(0.0, GYRO_GUESS.tau1 * 0.999, 200)
        z, p = motion.state(t)
        energy = stage_energy(z, p, 1, -45.0, PARTICLE, GYRO_GUESS.Z0)
        assert np.max(np.abs(energy - energy[0])) <= 1e-8 * abs(energy[0])

    def test_opposite_spins_mirror_about_spin_zero(self):
        """Test z_+ + z_- = 2 z_0 over [0, tau4] for opposite spin histories."""
        grid = build_time_grid(GYRO_GUESS, GYRO_GUESS.tau4, 5e-3)
        left, right = (evolve_branch(branch, GYRO_GUESS, PARTICLE, grid) for branch in branch_pair('gyroscopic_pm1'))
        neutral = evolve_branch(SpinBranch(0, 0, 'L'), GYRO_GUESS, PARTICLE, grid)
        scale = np.max(np.abs(left.z - right.z))
        assert scale > 0.0
        np.testing.assert_allclose(left.z + right.z, 2.0 * neutral.z, rtol=0, atol=1e-9 * scale)
        np.testing.assert_allclose(left.p_z + right.p_z, 2.0 * neutral.p_z, rtol=0,
                                   atol=1e-9 * np.max(np.abs(left.p_z - right.p_z)))

    def test_starts_at_rest(self):
        """Test z = p = 0 at t = 0."""
        motion = BranchMotion(SpinBranch(1, -1, 'L'), GYRO_GUESS, PARTICLE)
        assert motion.state(0.0) == (0.0, 0.0)

    def test_free_flight_stage(self):
        """Test uniform motion between tau1 and tau2."""
        motion = BranchMotion(SpinBranch(1, -1, 'L'), GYRO_GUESS, PARTICLE)
        z1, p1 = motion.state(GYRO_GUESS.tau1)
        z2, p2 = motion.state(GYRO_GUESS.tau2)
        assert p2 == pytest.approx(p1, rel=1e-12)
        assert z2 - z1 == pytest.approx(p1 / PARTICLE.mass * (GYRO_GUESS.tau2 - GYRO_GUESS.tau1), rel=1e-9)

    def test_coupling_requires_ode(self):
        """Test that cos(theta) coupling refuses the closed form."""
        grid = np.linspace(0.0, 0.1, 11)
        with pytest.raises(ParameterError):
            evolve_branch(SpinBranch(1, -1, 'L'), GYRO_GUESS, PARTICLE, grid, theta_coupling='cos_theta',
                          theta_of_t=lambda t: 0.0)


class TestClosure:
    """Test the closure solver."""

    def test_gyroscopic_closure_times(self, gyro_closed):
        """Test that the +-1 closure lands within 10% of the reference times."""
        assert gyro_closed.tau3 == pytest.approx(0.8022, rel=0.1)
        assert gyro_closed.tau4 == pytest.approx(1.320, rel=0.1)
        assert gyro_closed.tau1 == GYRO_GUESS.tau1

    def test_gyroscopic_residuals(self, gyro_closed):
        """Test |dz| <= 1 nm and |dp/m| <= 1 nm/s at tau4."""
        dz, dp = closure_residual(gyro_closed, PARTICLE, branch_pair('gyroscopic_pm1'))
        assert abs(dz) <= 1e-9
        assert abs(dp / PARTICLE.mass) <= 1e-9

    def test_static_closure_times(self, static_closed):
        """Test that the {0,-1} closure lands within 10% of the reference times."""
        assert static_closed.tau3 == pytest.approx(0.800, rel=0.1)
        assert static_closed.tau4 == pytest.approx(1.314, rel=0.1)
        dz, dp = closure_residual(static_closed, PARTICLE, branch_pair('static_0m1'))
        assert abs(dz) <= 1e-9
        assert abs(dp / PARTICLE.mass) <= 1e-9

    def test_no_iterations_raises_with_residuals(self):
        """Test that an unclosed template with no iterations raises ClosureError."""
        with pytest.raises(ClosureError) as excinfo:
            close_interferometer(GYRO_GUESS, PARTICLE, branch_pair('gyroscopic_pm1'), max_iter=0)
        assert len(excinfo.value.residuals) == 2
        assert excinfo.value.protocol is not None

    def test_same_unknown_twice_rejected(self):
        """Test that the two unknowns must differ."""
        with pytest.raises(ParameterError):
            close_interferometer(GYRO_GUESS, PARTICLE, branch_pair('gyroscopic_pm1'), unknowns=('tau4', 'tau4'))


class TestSuperpositionSize:
    """Test the arm separation of both schemes."""

    def test_static_scheme_about_ten_microns(self, static_closed):
        """Test the {0,-1} maximum separation is 10 um within a factor 2."""
        left, right = _arms(static_closed, 'static_0m1')
        assert 5e-6 <= max_separation(left, right) <= 2e-5

    def test_gyroscopic_scheme_doubles_separation(self, gyro_closed, static_closed):
        """Test the +-1 separation is at least 1.8 times the {0,-1} one."""
        gyro = max_separation(*_arms(gyro_closed, 'gyroscopic_pm1'))
        static = max_separation(*_arms(static_closed, 'static_0m1'))
        assert gyro >= 1.8 * static
        assert gyro == pytest.approx(2.146e-5, rel=0.05)

    def test_arms_meet_at_tau4(self, gyro_closed):
        """Test that the sampled arms end together."""
        left, right = _arms(gyro_closed, 'gyroscopic_pm1')
        assert abs(left.final.z - right.final.z) <= 1e-9
        assert left.final.t == pytest.approx(gyro_closed.tau4)

    def test_constants_used(self):
        """Test that the default constants carry the diamond susceptibility."""
        assert DEFAULT_CONSTANTS.chi_rho == pytest.approx(-6.2e-9)
