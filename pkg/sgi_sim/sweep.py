"""Parameter sweeps over omega0, packet width, occupation number and mass.

Each grid point is an independent task run on a thread pool. Failed points
are recorded in the table instead of aborting the sweep.
"""

import copy
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from typing import Callable, Optional

import pandas as pd

from config import get_config

from .contrast import ContrastInputs, gyro_contrast_bound
from .core_model import DEFAULT_CONSTANTS, QuantumInit, RotationInit
from .errors import ConfigError, SimulationError
from .scenario import RunResult, ScenarioConfig, config_hash, parse_config, run_scenario

logger = logging.getLogger(__name__)

SWEEP_AXES = ('omega0', 'dp', 'n', 'mass')


class SweepStats:
    """Track successes and failures while a sweep runs."""

    def __init__(self):
        self.total_points = 0
        self.completed = 0
        self.failed = 0
        self.errors_by_type: dict[str, int] = {}
        self.started = time.perf_counter()

    def record_success(self):
        self.total_points += 1
        self.completed += 1

    def record_failure(self, error: Exception):
        self.total_points += 1
        self.failed += 1
        error_type = type(error).__name__
        self.errors_by_type[error_type] = self.errors_by_type.get(error_type, 0) + 1

    def get_summary(self) -> dict:
        return {
            'total_points': self.total_points,
            'completed': self.completed,
            'failed': self.failed,
            'success_rate': self.completed / self.total_points if self.total_points > 0 else 0,
            'errors_by_type': self.errors_by_type,
            'wall_time_s': time.perf_counter() - self.started,
        }

    def log_summary(self):
        summary = self.get_summary()
        logger.info(f"Sweep Summary:")
        logger.info(f"  Points: {summary['total_points']}")
        logger.info(f"  Completed: {summary['completed']} ({summary['success_rate']:.1%})")
        logger.info(f"  Failed: {summary['failed']}")
        if summary['errors_by_type']:
            logger.info(f"  Errors by type: {summary['errors_by_type']}")
        logger.info(f"  Wall time: {summary['wall_time_s']:.1f} s")


class SweepRunner:
    """Run registered grid-point tasks on a worker pool."""

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self.tasks = {}
        self.stats = SweepStats()

    def add_task(self, task_name, task_func: Callable[[], dict]):
        """Register one grid point."""
        self.tasks[task_name] = {"func": task_func, "enabled": True}
        logger.debug(f"Sweep point registered: {task_name}")

    def disable_task(self, task_name):
        if task_name in self.tasks:
            self.tasks[task_name]["enabled"] = False
            logger.info(f"Sweep point disabled: {task_name}")

    def _run_one(self, task_name, task_func) -> dict:
        try:
            row = task_func()
            row['status'] = 'ok'
            row['error'] = None
            self.stats.record_success()
            return row
        except (SimulationError, ConfigError, ValueError) as e:
            logger.error(f"Sweep point failed: {task_name}: {str(e)}")
            self.stats.record_failure(e)
            return {'status': 'failed', 'error': f"{type(e).__name__}: {e}"}

    def run(self) -> dict:
        """Run every enabled task; returns task name -> result row."""
        enabled = {name: info["func"] for name, info in self.tasks.items() if info["enabled"]}
        logger.info(f"Running {len(enabled)} sweep points on {self.workers} workers")
        if self.workers == 1:
            return {name: self._run_one(name, func) for name, func in enabled.items()}
        rows = {}
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            futures = {pool.submit(self._run_one, name, func): name for name, func in enabled.items()}
            for future in as_completed(futures):
                rows[futures[future]] = future.result()
        return rows


def _recontrast(base: RunResult, document: dict, dp_psi: Optional[float] = None,
                occupation_n: Optional[float] = None) -> dict:
    """Contrast bound for new packet width or occupation on the base run's mismatches."""
    config = base.config
    quantum = config.quantum
    if dp_psi is not None:
        quantum = QuantumInit(dp_psi=dp_psi, theta0=config.rotation.theta0, occupation_n=quantum.occupation_n)
    if occupation_n is not None:
        quantum = replace(quantum, occupation_n=occupation_n)
    mismatch = base.mismatch
    report = gyro_contrast_bound(ContrastInputs(
        delta_phi=mismatch.delta_phi, delta_psi=mismatch.delta_psi,
        dp_phi=quantum.dp_phi, dp_psi=quantum.dp_psi, B0=base.protocol.B0,
        theta0=config.rotation.theta0, omega0=config.rotation.omega0, particle=config.particle,
        occupation_n=quantum.occupation_n,
    ))
    row = base.summary()
    row.update({
        'dp_psi_j_s': quantum.dp_psi,
        'occupation_n': quantum.occupation_n,
        'contrast_zero_T': report.contrast_zero_T,
        'contrast_thermal': report.contrast_thermal,
        'contrast_full_integral': report.contrast_full_integral,
        'config_hash': config_hash(document),
    })
    row.pop('contrast_measured', None)
    return row


def _swept_document(document: dict, section: str, key: str, value, replaces: tuple[str, ...]) -> dict:
    """Copy of ``document`` with the quantities in ``replaces`` dropped from ``section`` and ``key`` set."""
    document = copy.deepcopy(document)
    body = {k: v for k, v in document.get(section, {}).items()
            if not any(k == name or k.startswith(f"{name}_") for name in replaces)}
    body[key] = value
    document[section] = body
    return document


def _with_mass(config: ScenarioConfig, mass: float, defaults) -> ScenarioConfig:
    document = _swept_document(config.document, 'particle', 'mass_kg', mass, ('mass', 'inertia'))
    return parse_config(document, defaults)


def run_sweep(config: ScenarioConfig, axis: str, grid, workers: Optional[int] = None,
              alerts=None, base: Optional[RunResult] = None) -> pd.DataFrame:
    """Sweep one parameter and return the merged per-point table.

    Args:
        config: Base scenario
        axis: One of omega0 (rad/s), dp (J s), n, mass (kg)
        grid: SI values along the axis
        workers: Thread pool size; defaults to SWEEP_WORKERS
        alerts: Optional alert sink passed to full runs
        base: Already computed run of ``config`` to reuse

    Returns:
        DataFrame sorted by the swept value with status/error columns
    """
    if axis not in SWEEP_AXES:
        raise ConfigError([f"Wrong value: sweep axis must be one of {', '.join(SWEEP_AXES)}, got {axis!r}"])
    values = [float(v) for v in grid]
    if not values:
        raise ConfigError(["Empty sweep grid"])
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(["Sweep grid must be strictly increasing"])
    defaults = get_config()
    workers = defaults.SWEEP_WORKERS if workers is None else workers
    runner = SweepRunner(workers)

    if axis in ('dp', 'n', 'omega0'):
        if config.scheme != 'gyroscopic_pm1':
            raise ConfigError([f"Refused: the {axis} sweep applies to the gyroscopic scheme only"])
        base = base or run_scenario(config, alerts)

    names = [f"{axis}[{i}]={value:.6g}" for i, value in enumerate(values)]
    for name, value in zip(names, values):
        if axis == 'dp':
            def task(v=value):
                document = _swept_document(config.document, 'quantum', 'dp_psi_j_s', v, ('dp_psi',))
                return _recontrast(base, document, dp_psi=v)
        elif axis == 'n':
            def task(v=value):
                document = _swept_document(config.document, 'quantum', 'occupation_n', v,
                                           ('occupation_n', 'temperature'))
                return _recontrast(base, document, occupation_n=v)
        elif axis == 'omega0':
            # translation does not depend on omega0, so the closed protocol carries over
            def task(v=value):
                document = _swept_document(config.document, 'rotation', 'omega0_rad_s', v, ('omega0',))
                point = replace(config, rotation=RotationInit(v, config.rotation.theta0),
                                protocol=base.protocol, auto_close=False, document=document)
                return run_scenario(point, alerts).summary()
        else:
            def task(v=value):
                return run_scenario(_with_mass(config, v, defaults), alerts).summary()
        runner.add_task(name, task)

    rows = runner.run()
    records = []
    for name, value in zip(names, values):
        row = dict(rows.get(name, {}))
        row[axis] = value
        records.append(row)
    runner.stats.log_summary()
    table = pd.DataFrame(records).sort_values(axis, kind='stable').reset_index(drop=True)
    front = [axis, 'status', 'error']
    return table[front + [c for c in table.columns if c not in front]]


def default_grid(axis: str, config: ScenarioConfig, points: int = 8) -> list[float]:
    """Log-spaced grid around the base value of ``axis``."""
    base = {
        'omega0': config.rotation.omega0,
        'dp': config.quantum.dp_psi,
        'n': 1.0,
        'mass': config.particle.mass,
    }[axis]
    if axis == 'n':
        return [0.0] + [float(2 ** k) for k in range(points - 1)]
    return [base * 10 ** (k / (points - 1) - 0.5) for k in range(points)]


def dp_in_hbar(values) -> list[float]:
    return [v * DEFAULT_CONSTANTS.hbar for v in values]


def omega_in_hz(values) -> list[float]:
    return [2 * math.pi * v for v in values]
