"""Scenario parsing, orchestration and output emission.

A scenario document selects a scheme and carries unit-suffixed physical
inputs. ``run_scenario`` drives closure, translation, rotation, mismatch,
contrast and the spin checks; ``emit_outputs`` writes the trajectory CSV
and the JSON report.
"""

import copy
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np
import pandas as pd

from config import Config, get_config

from .contrast import (ContrastInputs, ContrastReport, coherent_amplitude, contrast_vs_omega0_curve,
                       gyro_contrast_bound)
from .core_model import (DEFAULT_CONSTANTS, ParticleParams, QuantumInit, RegimeReport, RotationInit,
                         temperature_to_occupation, validate_regime)
from .errors import ClosureError, ConfigError
from .field_protocol import FieldProtocol, b_com
from .rotational import (MismatchReport, RotationalSeries, attach_rotation, build_time_grid,
                         gyroscope_initial, integrate_full, integrate_linearized, mismatch_report)
from .spin_levels import (OffResonanceReport, SpinAmplitudes, SpinHamiltonianParams, edh_ratio,
                          evolve_spin, off_resonance_margin, two_level_transfer_bound)
from .static_baseline import StaticResult, contrast_vs_offset, offset_crossing, run_static_scheme
from .translational import BranchMotion, BranchTrajectory, branch_pair, close_interferometer, closure_residual, \
    evolve_branch, max_separation
from .validator import validate_config

logger = logging.getLogger(__name__)

PACKAGE_VERSION = '0.1.0'
PRESET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'presets')
# short names accepted by `reproduce`
PRESET_ALIASES = {
    'fig3': 'gyroscopic_baseline',
    'fig4': 'gyroscopic_contrast_curve',
    'figA1': 'static_trajectories',
    'figA2': 'static_trajectories',
    'figA4': 'static_contrast_peaks',
}

GYRO_COLUMNS = ['t_s', 'z_L_m', 'z_R_m', 'pz_L', 'pz_R', 'theta_L_rad', 'theta_R_rad',
                'theta_bar_L_rad', 'theta_bar_R_rad', 'phi_L_rad', 'phi_R_rad', 'psi_L_rad', 'psi_R_rad']
STATIC_COLUMNS = ['t_s', 'z_L_m', 'z_R_m', 'pz_L', 'pz_R', 'theta_L_rad', 'theta_R_rad',
                  'theta_dot_L_rad_s', 'theta_dot_R_rad_s']


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: float
    atol: float
    steps_per_period: int
    linear_steps_per_period: int
    closure_max_iter: int
    full_rotation: bool = False
    field_sign_strict: bool = False


@dataclass(frozen=True)
class OutputSettings:
    directory: str
    stride: int = 1
    trajectory_csv: bool = True
    report_json: bool = True
    peaks_csv: bool = True


@dataclass(frozen=True)
class RegimeSettings:
    separation_factor: float
    off_resonance_factor: float
    spin_transfer_threshold: float


@dataclass(frozen=True)
class AnalysisSettings:
    peak_window: float = 0.01
    spin_window: float = 1e-5
    spin_samples: int = 200001
    offset_grid: Optional[tuple] = None
    curve_omega0_grid: Optional[tuple] = None
    curve_dp_family: Optional[tuple] = None
    curve_n_family: Optional[tuple] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario with every quantity in SI."""
    name: str
    scheme: str
    particle: ParticleParams
    protocol: FieldProtocol
    auto_close: bool
    closure_unknowns: tuple
    rotation: RotationInit
    quantum: QuantumInit
    integrator: IntegratorSettings
    outputs: OutputSettings
    regime: RegimeSettings
    analysis: AnalysisSettings
    document: dict = field(default_factory=dict, compare=False)
    warnings: tuple = ()

    @property
    def config_hash(self) -> str:
        return config_hash(self.document)


@dataclass
class RunResult:
    """Everything one scenario run produced."""
    config: ScenarioConfig
    protocol: FieldProtocol
    left: BranchTrajectory
    right: BranchTrajectory
    regime: RegimeReport
    mismatch: Optional[MismatchReport] = None
    contrast: Optional[ContrastReport] = None
    static: Optional[StaticResult] = None
    spin: dict = field(default_factory=dict)
    offset_table: Optional[pd.DataFrame] = None
    provenance: dict = field(default_factory=dict)

    @property
    def max_separation(self) -> float:
        return max_separation(self.left, self.right)

    def summary(self) -> dict:
        """Flat row used by sweeps."""
        row = {
            'scheme': self.config.scheme,
            'tau3_s': self.protocol.tau3,
            'tau4_s': self.protocol.tau4,
            'max_separation_m': self.max_separation,
            'regime_passed': self.regime.passed,
            'config_hash': self.provenance.get('config_hash'),
        }
        if self.mismatch is not None:
            row.update({
                'delta_theta_rad': self.mismatch.delta_theta,
                'delta_theta_bound_rad': self.mismatch.delta_theta_bound,
                'delta_phi_rad': self.mismatch.delta_phi,
                'delta_psi_rad': self.mismatch.delta_psi,
            })
        if self.contrast is not None:
            row.update({
                'contrast_zero_T': self.contrast.contrast_zero_T,
                'contrast_thermal': self.contrast.contrast_thermal,
                'contrast_measured': self.contrast.contrast_measured,
            })
        if self.static is not None:
            row.update({
                'delta_theta_rad': self.static.delta_theta,
                'contrast_semiclassical': self.static.contrast_semiclassical,
            })
        if 'off_resonance' in self.spin:
            row['off_resonance_margin'] = self.spin['off_resonance']['margin']
        return row


def config_hash(document: dict) -> str:
    """SHA-256 of the canonical JSON form of a scenario document."""
    canonical = json.dumps(document, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def load_document(path: str) -> dict:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError([f"Invalid JSON in {path}: {e}"])
    except OSError as e:
        raise ConfigError([f"Cannot read {path}: {e}"])


def list_presets() -> list[str]:
    return sorted(name[:-5] for name in os.listdir(PRESET_DIR) if name.endswith('.json'))


def preset_names() -> list[str]:
    """Preset file names followed by their short aliases."""
    return list_presets() + sorted(PRESET_ALIASES)


def load_preset(name: str) -> dict:
    """Scenario document of a built-in preset or one of its aliases."""
    name = PRESET_ALIASES.get(name, name)
    if name not in list_presets():
        raise ConfigError([f"Unknown preset: {name!r}; available: {', '.join(preset_names())}"])
    return load_document(os.path.join(PRESET_DIR, f"{name}.json"))


def parse_config(document, defaults: Optional[Config] = None) -> ScenarioConfig:
    """Validate a scenario document and build the module-level records.

    Raises:
        ConfigError listing every violation
    """
    defaults = defaults or get_config()
    result, values = validate_config(document, defaults.SEPARATION_FACTOR)
    if not result.is_valid:
        for error in result.errors:
            logger.error(f"Config error: {error}")
        raise ConfigError(result.errors)

    particle_values = values['particle']
    particle = ParticleParams(
        mass=particle_values['mass'],
        density=particle_values.get('density', 3500.0),
        inertia=particle_values.get('inertia'),
        nv_offset_d=particle_values.get('nv_offset_d', 0.0),
        nv_angle_alpha=particle_values.get('nv_angle_alpha', 0.0),
    )
    field_values = values['field']
    protocol_values = values['protocol']
    protocol = FieldProtocol(
        B0=field_values['B0'], B1=field_values['B1'], eta=field_values['eta'],
        tau1=protocol_values['tau1'], tau2=protocol_values['tau2'],
        tau3=protocol_values['tau3'], tau4=protocol_values['tau4'],
    )
    rotation = RotationInit(values['rotation']['omega0'], values['rotation']['theta0'])

    quantum_values = values.get('quantum', {})
    occupation = quantum_values.get('occupation_n', 0.0)
    if 'temperature' in quantum_values:
        occupation = temperature_to_occupation(quantum_values['temperature'], rotation.omega0)
    quantum = QuantumInit(
        dp_psi=quantum_values.get('dp_psi', DEFAULT_CONSTANTS.hbar),
        theta0=rotation.theta0,
        dp_phi=quantum_values.get('dp_phi'),
        occupation_n=float(occupation),
    )

    integrator_values = values.get('integrator', {})
    integrator = IntegratorSettings(
        rtol=float(integrator_values.get('rtol', defaults.RTOL)),
        atol=float(integrator_values.get('atol', defaults.ATOL)),
        steps_per_period=int(integrator_values.get('steps_per_period', defaults.STEPS_PER_PERIOD)),
        linear_steps_per_period=int(integrator_values.get('linear_steps_per_period',
                                                          defaults.LINEAR_STEPS_PER_PERIOD)),
        closure_max_iter=int(integrator_values.get('closure_max_iter', defaults.CLOSURE_MAX_ITER)),
        full_rotation=bool(integrator_values.get('full_rotation', False)),
        field_sign_strict=bool(integrator_values.get('field_sign_strict', False)),
    )
    name = str(document.get('name', 'scenario'))
    output_values = values.get('outputs', {})
    outputs = OutputSettings(
        directory=output_values.get('directory', os.path.join(defaults.OUTPUT_DIR, name)),
        stride=int(output_values.get('stride', 1)),
        trajectory_csv=bool(output_values.get('trajectory_csv', True)),
        report_json=bool(output_values.get('report_json', True)),
        peaks_csv=bool(output_values.get('peaks_csv', True)),
    )
    regime_values = values.get('regime', {})
    regime = RegimeSettings(
        separation_factor=float(regime_values.get('separation_factor', defaults.SEPARATION_FACTOR)),
        off_resonance_factor=float(regime_values.get('off_resonance_factor', defaults.OFF_RESONANCE_FACTOR)),
        spin_transfer_threshold=float(regime_values.get('spin_transfer_threshold',
                                                        defaults.SPIN_TRANSFER_THRESHOLD)),
    )
    analysis_values = values.get('analysis', {})

    def as_tuple(key):
        value = analysis_values.get(key)
        return tuple(float(v) for v in value) if value is not None else None

    analysis = AnalysisSettings(
        peak_window=analysis_values.get('peak_window', 0.01),
        spin_window=analysis_values.get('spin_window', 1e-5),
        spin_samples=int(analysis_values.get('spin_samples', 200001)),
        offset_grid=as_tuple('offset_grid'),
        curve_omega0_grid=as_tuple('curve_omega0_grid'),
        curve_dp_family=as_tuple('curve_dp_family'),
        curve_n_family=as_tuple('curve_n_family'),
    )
    unknowns = tuple(protocol_values.get('closure_unknowns', ('tau3', 'tau4')))
    return ScenarioConfig(
        name=name,
        scheme=document['scheme'],
        particle=particle,
        protocol=protocol,
        auto_close=protocol_values.get('mode', 'auto') == 'auto',
        closure_unknowns=unknowns,
        rotation=rotation,
        quantum=quantum,
        integrator=integrator,
        outputs=outputs,
        regime=regime,
        analysis=analysis,
        document=copy.deepcopy(document),
        warnings=tuple(result.warnings),
    )


def _alert(alerts, severity, title, message, details=None):
    if alerts is not None:
        alerts.alert(severity, title, message, details)


def _close(config: ScenarioConfig, alerts) -> FieldProtocol:
    if not config.auto_close:
        return config.protocol
    try:
        return close_interferometer(config.protocol, config.particle, branch_pair(config.scheme),
                                    unknowns=config.closure_unknowns,
                                    max_iter=config.integrator.closure_max_iter)
    except ClosureError as e:
        _alert(alerts, "CRITICAL", "Closure Failed", str(e),
               {"scenario": config.name, "residuals": list(e.residuals or ())})
        raise


def close_protocol(config: ScenarioConfig, alerts=None) -> tuple[FieldProtocol, tuple[float, float]]:
    """Closed (or fixed) protocol and its (dz, dp) residual at tau4."""
    protocol = _close(config, alerts)
    residual = closure_residual(protocol, config.particle, branch_pair(config.scheme))
    logger.info(f"Closure residual: dz={residual[0]:.3g} m, dp={residual[1]:.3g} kg m/s")
    return protocol, (float(residual[0]), float(residual[1]))


def spin_checks(config: ScenarioConfig, alerts=None) -> dict:
    """Off-resonance margin, two-level transfer bounds and a short evolution window."""
    rotation = config.rotation
    params = SpinHamiltonianParams.from_physics(config.protocol.B0, rotation.theta0, rotation.omega0)
    margin: OffResonanceReport = off_resonance_margin(params, config.regime.off_resonance_factor)
    checks = {
        'off_resonance': margin.to_dict(),
        'transfer_bound_plus': two_level_transfer_bound(params, 'plus'),
        'transfer_bound_minus': two_level_transfer_bound(params, 'minus'),
        'edh_ratio_B1': edh_ratio(rotation.omega0, config.protocol.B1),
        'gamma_term': 'omitted',
    }
    if not margin.passed:
        _alert(alerts, "WARNING", "Spin Levels Near Resonance",
               f"Off-resonance margin {margin.margin:.3g} below {margin.factor:g}",
               {"scenario": config.name})
    if config.analysis.spin_window > 0 and rotation.omega0 > 0:
        transfers = {}
        for level in ('plus', 'minus'):
            evolution = evolve_spin(SpinAmplitudes.basis(level), params, config.analysis.spin_window,
                                    samples=config.analysis.spin_samples)
            transfers[level] = evolution.max_transfer
        checks['max_transfer'] = transfers
        checks['spin_window_s'] = config.analysis.spin_window
        worst = max(transfers.values())
        checks['transfer_passed'] = worst <= config.regime.spin_transfer_threshold
        if not checks['transfer_passed']:
            _alert(alerts, "WARNING", "Spin Transfer Above Threshold",
                   f"Max transfer {worst:.3g} exceeds {config.regime.spin_transfer_threshold:g}",
                   {"scenario": config.name})
    return checks


def _run_gyroscopic(config: ScenarioConfig, protocol: FieldProtocol, result_kwargs: dict):
    rotation, particle = config.rotation, config.particle
    settings = config.integrator
    dt = (2 * math.pi / rotation.omega0) / settings.linear_steps_per_period
    t_grid = build_time_grid(protocol, protocol.tau4, dt)
    logger.info(f"Gyroscopic run '{config.name}': {t_grid.size} samples up to tau4={protocol.tau4:.4f} s")

    pair = branch_pair(config.scheme)
    arms, series, full = [], [], []
    for branch in pair:
        motion = BranchMotion(branch, protocol, particle)
        arm = evolve_branch(branch, protocol, particle, t_grid)
        linear: RotationalSeries = integrate_linearized(rotation, protocol, particle, branch, motion.position,
                                                        t_grid, field_sign_strict=settings.field_sign_strict)
        series.append(linear)
        arms.append(attach_rotation(arm, linear))
        if settings.full_rotation:
            full.append(integrate_full(gyroscope_initial(rotation, particle), protocol, particle, branch,
                                       motion.position, t_grid, rotation.omega0, rtol=settings.rtol,
                                       atol=settings.atol, steps_per_period=settings.steps_per_period,
                                       field_sign_strict=settings.field_sign_strict))

    mismatch = mismatch_report(series[0], series[1], rotation, particle, protocol.B0,
                               full[0] if full else None, full[1] if full else None)

    left, right = series
    alpha_L = coherent_amplitude(left.theta[-1], left.theta_dot[-1], left.theta_bar[-1], particle, rotation.omega0)
    alpha_R = coherent_amplitude(right.theta[-1], right.theta_dot[-1], right.theta_bar[-1], particle,
                                 rotation.omega0)
    scale = math.sqrt(particle.inertia * rotation.omega0 / (2.0 * DEFAULT_CONSTANTS.hbar))
    measured_shift = scale * float(right.theta_bar[-1] - left.theta_bar[-1])
    B_c_tau4 = float(b_com(protocol, protocol.tau4, arms[0].z[-1]))
    quantum = config.quantum
    contrast = gyro_contrast_bound(ContrastInputs(
        delta_phi=mismatch.delta_phi, delta_psi=mismatch.delta_psi,
        dp_phi=quantum.dp_phi, dp_psi=quantum.dp_psi, B0=protocol.B0, theta0=rotation.theta0,
        omega0=rotation.omega0, particle=particle, occupation_n=quantum.occupation_n,
        alpha_L=alpha_L.alpha, alpha_R=alpha_R.alpha, delta_X_measured=measured_shift, B_c_tau4=B_c_tau4,
    ))
    result_kwargs.update(left=arms[0], right=arms[1], mismatch=mismatch, contrast=contrast)
    result_kwargs['provenance_extra'] = {
        'linear_valid': bool(left.valid and right.valid),
        'alpha_L': [alpha_L.alpha.real, alpha_L.alpha.imag],
        'alpha_R': [alpha_R.alpha.real, alpha_R.alpha.imag],
    }


def _run_static(config: ScenarioConfig, protocol: FieldProtocol, result_kwargs: dict):
    settings = config.integrator
    static = run_static_scheme(protocol, config.particle, theta0=config.rotation.theta0, auto_close=False,
                               peak_window=config.analysis.peak_window, rtol=settings.rtol, atol=settings.atol)
    result_kwargs.update(left=static.left, right=static.right, static=static)
    if config.analysis.offset_grid:
        table = contrast_vs_offset(protocol, config.particle, config.analysis.offset_grid,
                                   theta0=config.rotation.theta0)
        result_kwargs['offset_table'] = table
        crossing = offset_crossing(table)
        result_kwargs['provenance_extra'] = {'offset_crossing_m': crossing}


def run_scenario(config: ScenarioConfig, alerts=None) -> RunResult:
    """Execute one scenario.

    Args:
        config: Validated scenario
        alerts: Optional object with ``alert(severity, title, message, details)``

    Returns:
        RunResult with trajectories, reports and provenance
    """
    started = time.perf_counter()
    regime = validate_regime(DEFAULT_CONSTANTS, config.particle, config.rotation, config.protocol.B0,
                             config.regime.separation_factor, config.protocol.B1)
    if config.scheme == 'gyroscopic_pm1' and not regime.passed:
        _alert(alerts, "WARNING", "Regime Check Failed", "; ".join(regime.warnings),
               {"scenario": config.name, "flags": regime.flags})

    protocol = _close(config, alerts)
    result_kwargs = {}
    if config.scheme == 'gyroscopic_pm1':
        _run_gyroscopic(config, protocol, result_kwargs)
        spin = spin_checks(config, alerts)
    else:
        _run_static(config, protocol, result_kwargs)
        spin = {}
    extra = result_kwargs.pop('provenance_extra', {})

    elapsed = time.perf_counter() - started
    provenance = {
        'config_hash': config.config_hash,
        'package_version': PACKAGE_VERSION,
        'timestamp': datetime.now(timezone.utc).isoformat(),
        'wall_time_s': elapsed,
        'solver': {
            'rtol': config.integrator.rtol,
            'atol': config.integrator.atol,
            'steps_per_period': config.integrator.steps_per_period,
            'linear_steps_per_period': config.integrator.linear_steps_per_period,
            'full_rotation': config.integrator.full_rotation,
            'field_sign_strict': config.integrator.field_sign_strict,
            'closure': 'auto' if config.auto_close else 'fixed',
        },
        'config_warnings': list(config.warnings),
    }
    provenance.update(extra)
    result = RunResult(config=config, protocol=protocol, regime=regime, spin=spin, provenance=provenance,
                       **result_kwargs)
    logger.info(f"Scenario '{config.name}' finished in {elapsed:.1f} s, "
                f"max separation {result.max_separation * 1e6:.2f} um")
    return result


def trajectory_table(result: RunResult) -> pd.DataFrame:
    """Per-sample table; the column set depends on the scheme only."""
    left, right = result.left, result.right
    columns = {
        't_s': left.t, 'z_L_m': left.z, 'z_R_m': right.z, 'pz_L': left.p_z, 'pz_R': right.p_z,
        'theta_L_rad': left.theta, 'theta_R_rad': right.theta,
    }
    if result.config.scheme == 'gyroscopic_pm1':
        columns.update({
            'theta_bar_L_rad': left.extras['theta_bar'], 'theta_bar_R_rad': right.extras['theta_bar'],
            'phi_L_rad': left.phi, 'phi_R_rad': right.phi, 'psi_L_rad': left.psi, 'psi_R_rad': right.psi,
        })
        order = GYRO_COLUMNS
    else:
        columns.update({
            'theta_dot_L_rad_s': left.extras['theta_dot'], 'theta_dot_R_rad_s': right.extras['theta_dot'],
        })
        order = STATIC_COLUMNS
    return pd.DataFrame(columns)[order]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def build_report(result: RunResult) -> dict:
    protocol = result.protocol
    report = {
        'name': result.config.name,
        'scheme': result.config.scheme,
        'protocol': {
            'B0_tesla': protocol.B0, 'B1_tesla': protocol.B1, 'eta_t_per_m': protocol.eta,
            'tau1_s': protocol.tau1, 'tau2_s': protocol.tau2, 'tau3_s': protocol.tau3, 'tau4_s': protocol.tau4,
            'closed': result.config.auto_close,
        },
        'max_separation_m': result.max_separation,
        'regime': result.regime.to_dict(),
        'mismatch': result.mismatch.to_dict() if result.mismatch is not None else None,
        'contrast': (result.contrast.to_dict() if result.contrast is not None
                     else {'contrast_zero_T': None, 'contrast_thermal': None}),
        'static': result.static.to_dict() if result.static is not None else None,
        'spin': result.spin,
        'provenance': result.provenance,
    }
    return _jsonable(report)


def emit_outputs(result: RunResult, outputs: Optional[OutputSettings] = None) -> dict:
    """Write the trajectory CSV, report JSON and auxiliary tables.

    Returns:
        Mapping of output kind to written path
    """
    outputs = outputs or result.config.outputs
    os.makedirs(outputs.directory, exist_ok=True)
    written = {}
    if outputs.trajectory_csv:
        path = os.path.join(outputs.directory, 'trajectory.csv')
        trajectory_table(result).iloc[::outputs.stride].to_csv(path, index=False)
        written['trajectory'] = path
    if outputs.peaks_csv and result.static is not None and result.static.peaks:
        path = os.path.join(outputs.directory, 'contrast_peaks.csv')
        result.static.peaks_table().to_csv(path, index=False)
        written['peaks'] = path
    if result.offset_table is not None:
        path = os.path.join(outputs.directory, 'offset_sweep.csv')
        result.offset_table.to_csv(path, index=False)
        written['offset_sweep'] = path
    if outputs.report_json:
        path = os.path.join(outputs.directory, 'report.json')
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(build_report(result), f, indent=2)
        written['report'] = path
    for kind, path in written.items():
        logger.info(f"Wrote {kind}: {path}")
    return written


def omega0_curve(result: RunResult) -> pd.DataFrame:
    """Contrast bound against omega0 anchored at this run's delta_phi (scaled as 1/omega0)."""
    if result.mismatch is None:
        raise ConfigError(["the omega0 curve needs a gyroscopic run"])
    config = result.config
    analysis = config.analysis
    omega_ref = config.rotation.omega0
    grid = analysis.curve_omega0_grid or tuple(2 * math.pi * 1e3 * np.linspace(5, 100, 39))
    dp_family = analysis.curve_dp_family or (DEFAULT_CONSTANTS.hbar, 7 * DEFAULT_CONSTANTS.hbar)
    n_family = analysis.curve_n_family or (0.0, 20.0)
    return contrast_vs_omega0_curve(
        result.protocol.B0, config.rotation.theta0, config.particle, grid,
        [dp / DEFAULT_CONSTANTS.hbar for dp in dp_family], n_family,
        anchor=(omega_ref, abs(result.mismatch.delta_phi)),
    )
