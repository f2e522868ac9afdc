"""
Test suite for scenario parsing, orchestration, outputs, sweeps and the CLI.
Run tests with: pytest test_scenario.py -v
"""

import copy
import json
import math
import os

import pandas as pd
import pytest

from sgi_sim.core_model import DEFAULT_CONSTANTS
from sgi_sim.errors import ConfigError
from sgi_sim.scenario import (
    GYRO_COLUMNS,
    STATIC_COLUMNS,
    build_report,
    config_hash,
    emit_outputs,
    list_presets,
    load_preset,
    omega0_curve,
    parse_config,
    preset_names,
    run_scenario,
    spin_checks,
)
from sgi_sim.sweep import SweepRunner, SweepStats, default_grid, dp_in_hbar, run_sweep
from sgi_sim.validator import validate_config

HBAR = DEFAULT_CONSTANTS.hbar


@pytest.fixture(scope="module")
def gyro_result():
    return run_scenario(parse_config(load_preset('gyroscopic_baseline')))


@pytest.fixture(scope="module")
def static_result():
    return run_scenario(parse_config(load_preset('static_contrast_peaks')))


def _errors(document):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(document)
    return excinfo.value.errors


class TestPresets:
    """Test the built-in scenarios."""

    def test_presets_listed(self):
        """Test that every reference scenario ships as a preset."""
        assert set(list_presets()) >= {'gyroscopic_baseline', 'gyroscopic_contrast_curve', 'static_trajectories',
                                       'static_offset_sweep', 'static_contrast_peaks'}

    def test_unknown_preset(self):
        """Test that an unknown preset raises ConfigError."""
        with pytest.raises(ConfigError):
            load_preset('no_such_preset')

    def test_every_preset_parses(self):
        """Test that each preset validates."""
        for name in list_presets():
            config = parse_config(load_preset(name))
            assert config.name == name

    def test_short_aliases(self):
        """Test that the short reproduction names resolve to their presets."""
        assert {'fig3', 'fig4', 'figA1', 'figA2', 'figA4'} <= set(preset_names())
        assert set(list_presets()) <= set(preset_names())
        assert load_preset('fig3')['name'] == 'gyroscopic_baseline'
        assert load_preset('fig4')['name'] == 'gyroscopic_contrast_curve'
        assert load_preset('figA2') == load_preset('static_trajectories')
        assert load_preset('figA4')['name'] == 'static_contrast_peaks'


class TestRegimeWarnings:
    """Test the rotation-rate window reported by validation."""

    def test_baseline_inside_window(self):
        """Test that the baseline raises no regime warning."""
        result, _ = validate_config(load_preset('gyroscopic_baseline'))
        assert result.is_valid
        assert not [w for w in result.warnings if w.startswith('Regime:')]

    def test_slow_rotation_warns(self):
        """Test that omega0 below ten times the gyroscopic scale is valid but warned."""
        document = load_preset('gyroscopic_baseline')
        document['rotation']['omega0_hz'] = 500
        result, _ = validate_config(document)
        assert result.is_valid
        regime = [w for w in result.warnings if w.startswith('Regime:')]
        assert len(regime) == 1
        assert 'sqrt(mu B0/I)' in regime[0]

    def test_separation_factor_from_document(self):
        """Test that the document's regime factor overrides the default."""
        document = load_preset('gyroscopic_baseline')
        document['rotation']['omega0_hz'] = 500
        document['regime'] = {'separation_factor': 1.0}
        result, _ = validate_config(document)
        assert result.is_valid
        assert not [w for w in result.warnings if w.startswith('Regime:')]


class TestParseConfig:
    """Test document validation and SI conversion."""

    def test_baseline_values_in_si(self):
        """Test the gyroscopic baseline after unit conversion."""
        config = parse_config(load_preset('gyroscopic_baseline'))
        assert config.particle.mass == 1e-17
        assert config.protocol.B0 == pytest.approx(0.01)
        assert config.protocol.eta == pytest.approx(45.0)
        assert config.rotation.omega0 == pytest.approx(2 * math.pi * 1e4)
        assert config.particle.nv_angle_alpha == pytest.approx(math.pi / 6)
        assert config.particle.nv_offset_d == pytest.approx(1e-8)
        assert config.quantum.dp_psi == pytest.approx(HBAR)
        assert config.auto_close
        assert config.outputs.stride == 20

    def test_empty_document(self):
        """Test that an empty document is rejected."""
        errors = _errors({})
        assert any('Empty document' in e for e in errors)

    def test_all_errors_reported_together(self):
        """Test that a missing suffix and an unknown key are both listed."""
        document = load_preset('gyroscopic_baseline')
        document['particle'].pop('mass_kg')
        document['particle']['mass'] = 1e-17
        document['field']['bogus_gauss'] = 1.0
        errors = _errors(document)
        assert "Missing unit suffix: particle.mass" in errors
        assert "Unknown key: field.bogus_gauss" in errors

    def test_wrong_unit_dimension(self):
        """Test that a time unit on a field is rejected."""
        document = load_preset('gyroscopic_baseline')
        document['field'].pop('B0_gauss')
        document['field']['B0_s'] = 1.0
        assert any(e.startswith('Wrong unit: field.B0_s') for e in _errors(document))

    def test_unordered_stage_times(self):
        """Test that tau1 < tau2 < tau3 < tau4 is enforced."""
        document = load_preset('gyroscopic_baseline')
        document['protocol']['tau2_s'] = 0.3
        assert any(e.startswith('Inconsistent protocol') for e in _errors(document))

    def test_gyroscopic_scheme_needs_rotation(self):
        """Test that omega0 = 0 is refused for the +-1 scheme."""
        document = load_preset('gyroscopic_baseline')
        document['rotation']['omega0_hz'] = 0
        assert any(e.startswith('Refused') for e in _errors(document))

    def test_temperature_and_occupation_conflict(self):
        """Test that both thermal inputs together are rejected."""
        document = load_preset('gyroscopic_baseline')
        document['quantum']['temperature_k'] = 1e-4
        assert any(e.startswith('Conflict') for e in _errors(document))

    def test_temperature_sets_occupation(self):
        """Test n = k_B T / (hbar omega0)."""
        document = load_preset('gyroscopic_baseline')
        document['quantum'].pop('occupation_n')
        document['quantum']['temperature_k'] = 4.80e-5
        document['rotation']['omega0_hz'] = 5e4
        config = parse_config(document)
        assert config.quantum.occupation_n == pytest.approx(20, rel=1e-2)

    def test_large_tilt_warns(self):
        """Test that theta0 > 0.1 rad parses with a warning."""
        document = load_preset('gyroscopic_baseline')
        document['rotation']['theta0_rad'] = 0.2
        config = parse_config(document)
        assert config.warnings

    def test_config_hash(self):
        """Test that the hash follows the document content."""
        document = load_preset('gyroscopic_baseline')
        changed = copy.deepcopy(document)
        changed['rotation']['theta0_rad'] = 0.02
        assert config_hash(document) == config_hash(copy.deepcopy(document))
        assert config_hash(document) != config_hash(changed)
        assert parse_config(document).config_hash == config_hash(document)


class TestGyroscopicRun:
    """Test a full run of the gyroscopic baseline."""

    def test_closed_and_separated(self, gyro_result):
        """Test the closure and the +-1 superposition size."""
        assert gyro_result.protocol.tau4 == pytest.approx(1.320, rel=0.1)
        assert gyro_result.max_separation == pytest.approx(2.146e-5, rel=0.05)
        assert gyro_result.regime.passed

    def test_mismatches(self, gyro_result):
        """Test delta_phi and delta_theta against their expected ranges."""
        mismatch = gyro_result.mismatch
        assert 0.025 <= abs(mismatch.delta_phi) <= 0.10
        assert abs(mismatch.delta_theta) <= mismatch.delta_theta_bound

    def test_contrast(self, gyro_result):
        """Test the contrast bound at 2 pi x 10 kHz."""
        contrast = gyro_result.contrast
        assert 0.0 < contrast.contrast_zero_T < 1.0
        assert contrast.contrast_measured is not None
        assert contrast.contrast_measured >= contrast.contrast_zero_T * (1 - 1e-9)

    def test_spin_checks(self, gyro_result):
        """Test the off-resonance margin and transfer within the threshold."""
        spin = gyro_result.spin
        assert spin['off_resonance']['margin'] == pytest.approx(1308, rel=1e-2)
        assert spin['transfer_passed']
        assert spin['edh_ratio_B1'] == pytest.approx(3.57e-3, rel=1e-2)
        assert spin['gamma_term'] == 'omitted'

    def test_provenance(self, gyro_result):
        """Test that provenance names the config hash and solver settings."""
        provenance = gyro_result.provenance
        assert provenance['config_hash'] == gyro_result.config.config_hash
        assert provenance['solver']['closure'] == 'auto'
        assert provenance['linear_valid']
        assert provenance['timestamp'].endswith('+00:00')

    def test_summary_row(self, gyro_result):
        """Test the flat summary row."""
        row = gyro_result.summary()
        assert row['scheme'] == 'gyroscopic_pm1'
        assert row['delta_phi_rad'] == gyro_result.mismatch.delta_phi
        assert row['off_resonance_margin'] == gyro_result.spin['off_resonance']['margin']

    def test_emit_outputs(self, gyro_result, tmp_path):
        """Test the strided trajectory CSV and the JSON report."""
        outputs = gyro_result.config.outputs
        written = emit_outputs(gyro_result, type(outputs)(directory=str(tmp_path), stride=20))
        table = pd.read_csv(written['trajectory'])
        assert list(table.columns) == GYRO_COLUMNS
        assert len(table) == math.ceil(gyro_result.left.t.size / 20)
        with open(written['report']) as f:
            report = json.load(f)
        assert report['scheme'] == 'gyroscopic_pm1'
        assert report['provenance']['config_hash'] == gyro_result.config.config_hash
        assert report['contrast']['temperature_convention'] == 'k_B T = n hbar omega0'
        assert 'peaks' not in written

    def test_omega0_curve(self, gyro_result):
        """Test the default contrast curve anchored at this run."""
        curve = omega0_curve(gyro_result)
        assert len(curve) == 39 * 2 * 2
        assert sorted(set(curve['dp_hbar'])) == pytest.approx([1.0, 7.0])
        assert (curve['contrast'] > 0).all()


class TestStaticRun:
    """Test a run of the non-rotating scheme."""

    def test_static_outputs(self, static_result, tmp_path):
        """Test the static column set, empty gyroscopic contrast and the peak table."""
        outputs = static_result.config.outputs
        written = emit_outputs(static_result, type(outputs)(directory=str(tmp_path), stride=50))
        table = pd.read_csv(written['trajectory'])
        assert list(table.columns) == STATIC_COLUMNS
        report = build_report(static_result)
        assert report['contrast'] == {'contrast_zero_T': None, 'contrast_thermal': None}
        assert report['mismatch'] is None
        assert report['static']['peak_count'] >= 3
        assert os.path.exists(written['peaks'])

    def test_no_classical_mismatch_without_offset(self, static_result):
        """Test delta_theta = 0 at d = 0."""
        assert static_result.static.delta_theta == 0.0
        assert static_result.static.contrast_semiclassical == 1.0

    def test_omega0_curve_refused(self, static_result):
        """Test that the curve needs a gyroscopic run."""
        with pytest.raises(ConfigError):
            omega0_curve(static_result)

    def test_spin_checks_skip_evolution_without_rotation(self):
        """Test that omega0 = 0 only reports the static margins."""
        checks = spin_checks(parse_config(load_preset('static_trajectories')))
        assert 'max_transfer' not in checks
        assert checks['off_resonance']['passed']


class TestSweep:
    """Test parameter sweeps."""

    def test_dp_sweep(self, gyro_result):
        """Test that wider packets lower the contrast."""
        grid = dp_in_hbar([1, 3, 7])
        table = run_sweep(gyro_result.config, 'dp', grid, workers=1, base=gyro_result)
        assert list(table.columns[:3]) == ['dp', 'status', 'error']
        assert (table['status'] == 'ok').all()
        contrast = table['contrast_zero_T'].to_numpy()
        assert contrast[0] > contrast[1] > contrast[2]

    def test_occupation_sweep_threaded(self, gyro_result):
        """Test the thermal bound falls with n on a thread pool."""
        table = run_sweep(gyro_result.config, 'n', [0, 5, 20], workers=3, base=gyro_result)
        assert list(table['n']) == [0.0, 5.0, 20.0]
        thermal = table['contrast_thermal'].to_numpy()
        assert thermal[0] > thermal[1] > thermal[2]

    def test_close_grid_values_kept_apart(self, gyro_result):
        """Test that grid values equal to six digits still give one row each."""
        table = run_sweep(gyro_result.config, 'n', [1.0, 1.0000001], workers=1, base=gyro_result)
        assert len(table) == 2
        assert (table['status'] == 'ok').all()
        assert list(table['occupation_n']) == [1.0, 1.0000001]

    def test_points_carry_their_own_hash(self, gyro_result):
        """Test that each swept point records the hash of its own document."""
        base_hash = gyro_result.config.config_hash
        for axis, grid in (('dp', dp_in_hbar([1, 2])), ('n', [0, 3])):
            table = run_sweep(gyro_result.config, axis, grid, workers=1, base=gyro_result)
            hashes = list(table['config_hash'])
            assert len(set(hashes)) == 2
            assert base_hash not in hashes

    def test_omega0_points_carry_their_own_hash(self, gyro_result):
        """Test distinct hashes along the rotation axis."""
        omega0 = gyro_result.config.rotation.omega0
        table = run_sweep(gyro_result.config, 'omega0', [omega0 * 1.5, omega0 * 2.0], workers=1, base=gyro_result)
        assert (table['status'] == 'ok').all()
        assert len(set(table['config_hash'])) == 2
        assert gyro_result.config.config_hash not in set(table['config_hash'])

    def test_worker_count_does_not_change_table(self, gyro_result):
        """Test that a sweep gives the same table on one and on four workers."""
        grid = [0, 1, 2, 5, 10, 20]
        serial = run_sweep(gyro_result.config, 'n', grid, workers=1, base=gyro_result)
        pooled = run_sweep(gyro_result.config, 'n', grid, workers=4, base=gyro_result)
        pd.testing.assert_frame_equal(serial, pooled)

    def test_repeat_run_reproduces_summary(self):
        """Test that running a scenario twice gives the same summary."""
        config = parse_config(load_preset('static_trajectories'))
        first = pd.DataFrame([run_scenario(config).summary()])
        second = pd.DataFrame([run_scenario(config).summary()])
        pd.testing.assert_frame_equal(first, second, check_exact=False, rtol=1e-12)

    def test_grid_must_increase(self, gyro_result):
        """Test that unordered and empty grids are rejected."""
        with pytest.raises(ConfigError):
            run_sweep(gyro_result.config, 'n', [5, 1], base=gyro_result)
        with pytest.raises(ConfigError):
            run_sweep(gyro_result.config, 'n', [], base=gyro_result)

    def test_unknown_axis(self, gyro_result):
        """Test that only the supported axes are accepted."""
        with pytest.raises(ConfigError):
            run_sweep(gyro_result.config, 'theta0', [0.01], base=gyro_result)

    def test_static_scheme_refuses_packet_sweep(self):
        """Test that dp sweeps need the gyroscopic scheme."""
        with pytest.raises(ConfigError):
            run_sweep(parse_config(load_preset('static_trajectories')), 'dp', [HBAR])

    def test_failed_points_are_recorded(self):
        """Test that a failing task becomes a failed row."""
        runner = SweepRunner(1)
        runner.add_task('good', lambda: {'value': 1})
        runner.add_task('bad', lambda: (_ for _ in ()).throw(ValueError("boom")))
        runner.add_task('skipped', lambda: {'value': 2})
        runner.disable_task('skipped')
        rows = runner.run()
        assert rows['good']['status'] == 'ok'
        assert rows['bad'] == {'status': 'failed', 'error': 'ValueError: boom'}
        assert 'skipped' not in rows
        assert runner.stats.get_summary()['errors_by_type'] == {'ValueError': 1}

    def test_stats_summary(self):
        """Test the success rate bookkeeping."""
        stats = SweepStats()
        stats.record_success()
        stats.record_failure(ConfigError(["x"]))
        summary = stats.get_summary()
        assert summary['success_rate'] == 0.5
        assert summary['errors_by_type'] == {'ConfigError': 1}

    def test_default_grid(self, gyro_result):
        """Test the default grids bracket the base value."""
        grid = default_grid('omega0', gyro_result.config)
        assert grid[0] < gyro_result.config.rotation.omega0 < grid[-1]
        assert default_grid('n', gyro_result.config)[0] == 0.0


class TestCommandLine:
    """Test the CLI entry point."""

    @pytest.fixture(autouse=True)
    def testing_env(self, monkeypatch):
        monkeypatch.setenv("SGI_ENV", "testing")

    def _exit_code(self, argv):
        from main import main
        with pytest.raises(SystemExit) as excinfo:
            main(argv)
        return excinfo.value.code

    def test_validate_preset(self, capsys):
        """Test that a preset validates with exit code 0."""
        assert self._exit_code(['validate', 'gyroscopic_baseline']) == 0
        assert json.loads(capsys.readouterr().out)['is_valid'] is True

    def test_validate_reports_regime_warning(self, tmp_path, capsys):
        """Test that validate lists the rotation-rate warning and still exits 0."""
        document = load_preset('gyroscopic_baseline')
        document['rotation']['omega0_hz'] = 500
        path = tmp_path / 'slow.json'
        path.write_text(json.dumps(document))
        assert self._exit_code(['validate', str(path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload['is_valid'] is True
        assert any(w.startswith('Regime:') for w in payload['warnings'])

    def test_reproduce_alias(self, tmp_path, capsys):
        """Test that reproduce accepts a short alias and writes the trajectory."""
        assert self._exit_code(['reproduce', 'figA1', '--output-dir', str(tmp_path)]) == 0
        assert (tmp_path / 'trajectory.csv').exists()
        summary = json.loads(capsys.readouterr().out)
        assert summary['scheme'] == 'static_0m1'
        assert summary['config_hash'] == config_hash(load_preset('static_trajectories'))

    def test_reproduce_unknown_alias(self):
        """Test that argparse rejects names outside the preset list."""
        assert self._exit_code(['reproduce', 'fig99']) == 2

    def test_validate_bad_file(self, tmp_path):
        """Test exit code 2 for an invalid scenario file."""
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'scheme': 'gyroscopic_pm1'}))
        assert self._exit_code(['validate', str(path)]) == 2

    def test_unreadable_json(self, tmp_path):
        """Test exit code 2 for malformed JSON."""
        path = tmp_path / 'broken.json'
        path.write_text('{not json')
        assert self._exit_code(['simulate', str(path)]) == 2

    def test_missing_scenario(self):
        """Test exit code 2 for an unknown scenario name."""
        assert self._exit_code(['simulate', 'no_such_scenario']) == 2

    def test_spin_check_refuses_static_particle(self):
        """Test that spin-check needs omega0 > 0."""
        assert self._exit_code(['spin-check', 'static_trajectories']) == 2

    def test_grid_unit_mismatch(self):
        """Test that a sweep grid unit must fit the axis."""
        assert self._exit_code(['sweep', 'gyroscopic_baseline', '--axis', 'dp', '--grid', '1,2',
                                '--unit', 'khz']) == 2

    def test_close(self, capsys):
        """Test that close prints the solved stage times."""
        assert self._exit_code(['close', 'gyroscopic_baseline']) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload['tau4_s'] == pytest.approx(1.320, rel=0.1)
        assert abs(payload['residual_z_m']) <= 1e-9
