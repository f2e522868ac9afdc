"""
Command-line entry point for the rotating-nanodiamond interferometer simulator.
Usage: python main.py {simulate,sweep,close,spin-check,reproduce,validate} ...
"""
import os
import sys
import json
import argparse
import logging
from dataclasses import replace
from logging.handlers import RotatingFileHandler

from dotenv import load_dotenv

load_dotenv()

from config import get_config
from monitoring import MonitoringAlert, ProvenanceRecorder
from sgi_sim.errors import ConfigError, SimulationError
from sgi_sim.scenario import (close_protocol, emit_outputs, load_document, load_preset, preset_names,
                              omega0_curve, parse_config, run_scenario, spin_checks)
from sgi_sim.sweep import SWEEP_AXES, run_sweep
from sgi_sim.units import UNIT_SUFFIXES, dimension_of, to_si
from sgi_sim.validator import validate_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

AXIS_DIMENSIONS = {
    'omega0': 'angular_frequency',
    'dp': 'action',
    'mass': 'mass',
}


def setup_logging(config):
    """Rotating file log plus console output."""
    root = logging.getLogger()
    root.setLevel(getattr(logging, str(config.LOG_LEVEL).upper(), logging.INFO))
    formatter = logging.Formatter('%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]')

    console = logging.StreamHandler()
    console.setFormatter(formatter)
    root.addHandler(console)

    if config.LOG_FILE:
        log_dir = os.path.dirname(config.LOG_FILE)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(config.LOG_FILE, maxBytes=config.LOG_MAX_BYTES,
                                           backupCount=config.LOG_BACKUP_COUNT)
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)


def _document(source):
    """A preset name or a path to a JSON scenario."""
    if os.path.exists(source):
        return load_document(source)
    if source in preset_names():
        return load_preset(source)
    raise ConfigError([f"No scenario file or preset named {source!r}"])


def _print_json(payload):
    print(json.dumps(payload, indent=2, default=str))


def _parse_grid(text, axis, unit):
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigError([f"Wrong value: grid must be comma-separated numbers, got {text!r}"])
    if unit is None:
        return values
    if unit not in UNIT_SUFFIXES:
        raise ConfigError([f"Unknown unit: {unit}"])
    if axis not in AXIS_DIMENSIONS or dimension_of(unit) != AXIS_DIMENSIONS[axis]:
        raise ConfigError([f"Wrong unit: {unit} does not fit the {axis} axis"])
    return [to_si(v, unit) for v in values]


def _finish_run(config, result, outputs_dir=None, stride=None):
    outputs = config.outputs
    if outputs_dir is not None or stride is not None:
        outputs = replace(outputs, directory=outputs_dir or outputs.directory, stride=stride or outputs.stride)
    written = emit_outputs(result, outputs)
    if config.analysis.curve_omega0_grid is not None and result.mismatch is not None:
        path = os.path.join(outputs.directory, 'contrast_vs_omega0.csv')
        omega0_curve(result).to_csv(path, index=False)
        written['contrast_curve'] = path
    provenance_file = get_config().PROVENANCE_FILE
    if provenance_file:
        ProvenanceRecorder(provenance_file).record(config.name, result.provenance, written)
    _print_json(result.summary())
    return written


def cmd_simulate(args, alerts):
    config = parse_config(_document(args.config))
    result = run_scenario(config, alerts)
    _finish_run(config, result, args.output_dir, args.stride)
    return EXIT_OK


def cmd_reproduce(args, alerts):
    config = parse_config(load_preset(args.preset))
    result = run_scenario(config, alerts)
    _finish_run(config, result, args.output_dir)
    return EXIT_OK


def cmd_sweep(args, alerts):
    config = parse_config(_document(args.config))
    grid = _parse_grid(args.grid, args.axis, args.unit)
    table = run_sweep(config, args.axis, grid, workers=args.workers, alerts=alerts)
    output_dir = args.output_dir or config.outputs.directory
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, f"sweep_{args.axis}.csv")
    table.to_csv(path, index=False)
    logger.info(f"Wrote sweep table: {path}")
    print(table.to_string(index=False))
    return EXIT_OK if (table['status'] == 'ok').all() else EXIT_NUMERICAL


def cmd_close(args, alerts):
    config = parse_config(_document(args.config))
    protocol, residuals = close_protocol(config, alerts)
    _print_json({
        'tau1_s': protocol.tau1, 'tau2_s': protocol.tau2,
        'tau3_s': protocol.tau3, 'tau4_s': protocol.tau4,
        'residual_z_m': residuals[0], 'residual_p_kg_m_s': residuals[1],
    })
    return EXIT_OK


def cmd_spin_check(args, alerts):
    config = parse_config(_document(args.config))
    if config.rotation.omega0 <= 0:
        raise ConfigError(["Refused: spin-check needs a rotating particle (omega0 > 0)"])
    checks = spin_checks(config, alerts)
    _print_json(checks)
    return EXIT_OK if checks['off_resonance']['passed'] else EXIT_NUMERICAL


def cmd_validate(args, alerts):
    result, _ = validate_config(_document(args.config), get_config().SEPARATION_FACTOR)
    _print_json({'is_valid': result.is_valid, 'errors': result.errors, 'warnings': result.warnings})
    return EXIT_OK if result.is_valid else EXIT_CONFIG


def build_parser():
    parser = argparse.ArgumentParser(description="Rotating-nanodiamond Stern-Gerlach interferometer simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run one scenario and write CSV/JSON outputs")
    simulate.add_argument("config", help="Scenario JSON file or preset name")
    simulate.add_argument("--output-dir", help="Override the output directory")
    simulate.add_argument("--stride", type=int, help="Keep every n-th trajectory row")
    simulate.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="Sweep one parameter")
    sweep.add_argument("config", help="Scenario JSON file or preset name")
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--grid", required=True, help="Comma-separated values")
    sweep.add_argument("--unit", help="Unit suffix of the grid values (e.g. khz, hbar, kg); SI if omitted")
    sweep.add_argument("--workers", type=int, help="Worker threads (defaults to SWEEP_WORKERS)")
    sweep.add_argument("--output-dir", help="Directory for the sweep table")
    sweep.set_defaults(func=cmd_sweep)

    close = sub.add_parser("close", help="Solve the closure times only")
    close.add_argument("config", help="Scenario JSON file or preset name")
    close.set_defaults(func=cmd_close)

    spin = sub.add_parser("spin-check", help="Off-resonance margins and spin transfer")
    spin.add_argument("config", help="Scenario JSON file or preset name")
    spin.set_defaults(func=cmd_spin_check)

    reproduce = sub.add_parser("reproduce", help="Run a built-in preset")
    reproduce.add_argument("preset", choices=preset_names())
    reproduce.add_argument("--output-dir", help="Override the output directory")
    reproduce.set_defaults(func=cmd_reproduce)

    validate = sub.add_parser("validate", help="Validate a scenario without running it")
    validate.add_argument("config", help="Scenario JSON file or preset name")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    config = get_config()
    setup_logging(config)
    args = build_parser().parse_args(argv)
    alerts = MonitoringAlert(config.ALERT_FILE) if config.ALERT_FILE else None
    try:
        code = args.func(args, alerts)
    except ConfigError as e:
        for error in e.errors:
            logger.error(f"Config error: {error}")
        code = EXIT_CONFIG
    except SimulationError as e:
        logger.error(f"Simulation failed: {type(e).__name__}: {str(e)}")
        code = EXIT_NUMERICAL
    sys.exit(code)


if __name__ == "__main__":
    main()
