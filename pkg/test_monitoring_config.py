"""
Test suite for run alerts, provenance records and configuration selection.
Run tests with: pytest test_monitoring_config.py -v
"""

import pytest

from config import DevelopmentConfig, ProductionConfig, TestingConfig, get_config
from monitoring import MonitoringAlert, ProvenanceRecorder


class TestMonitoringAlert:
    """Test the JSON-lines alert log."""

    def test_alerts_round_trip(self, tmp_path):
        """Test that recorded alerts are read back in order."""
        alerts = MonitoringAlert(str(tmp_path / "alerts" / "run_alerts.log"))
        alerts.alert("WARNING", "Regime Check Failed", "omega0 too low", {"scenario": "a"})
        alerts.alert("CRITICAL", "Closure Failed", "no convergence")
        recent = alerts.get_recent_alerts()
        assert [a["title"] for a in recent] == ["Regime Check Failed", "Closure Failed"]
        assert recent[0]["details"] == {"scenario": "a"}
        assert recent[1]["details"] == {}

    def test_filter_by_severity(self, tmp_path):
        """Test severity filtering and the limit."""
        alerts = MonitoringAlert(str(tmp_path / "run_alerts.log"))
        for i in range(5):
            alerts.alert("INFO", f"Info {i}", "ok")
        alerts.alert("CRITICAL", "Closure Failed", "no convergence")
        assert len(alerts.get_recent_alerts(severity="CRITICAL")) == 1
        recent = alerts.get_recent_alerts(severity="INFO", limit=2)
        assert [a["title"] for a in recent] == ["Info 3", "Info 4"]

    def test_missing_file(self, tmp_path):
        """Test that a missing log yields no alerts."""
        assert MonitoringAlert(str(tmp_path / "none.log")).get_recent_alerts() == []

    def test_malformed_lines_skipped(self, tmp_path):
        """Test that a truncated line does not hide the other alerts."""
        path = tmp_path / "run_alerts.log"
        alerts = MonitoringAlert(str(path))
        alerts.alert("WARNING", "Regime Check Failed", "omega0 too low")
        with open(path, "a", encoding="utf-8") as f:
            f.write('{"severity": "WARN\n')
        alerts.alert("INFO", "Run Finished", "ok")
        assert [a["title"] for a in alerts.get_recent_alerts()] == ["Regime Check Failed", "Run Finished"]


class TestProvenanceRecorder:
    """Test provenance entries."""

    def test_record_and_find(self, tmp_path):
        """Test lookup of runs by config hash."""
        recorder = ProvenanceRecorder(str(tmp_path / "provenance.jsonl"))
        recorder.record("gyroscopic_baseline", {"config_hash": "abc", "wall_time_s": 1.0},
                        {"report": "runs/x/report.json"})
        recorder.record("static_trajectories", {"config_hash": "def"})
        recorder.record("gyroscopic_baseline", {"config_hash": "abc", "wall_time_s": 2.0})
        matches = recorder.find("abc")
        assert len(matches) == 2
        assert matches[0]["outputs"] == {"report": "runs/x/report.json"}
        assert matches[1]["provenance"]["wall_time_s"] == 2.0
        assert recorder.find("zzz") == []


class TestConfig:
    """Test environment-based configuration."""

    @pytest.mark.parametrize("env, expected", [
        ("testing", TestingConfig),
        ("production", ProductionConfig),
        ("development", DevelopmentConfig),
        ("anything", DevelopmentConfig),
    ])
    def test_get_config(self, monkeypatch, env, expected):
        """Test that SGI_ENV selects the configuration class."""
        monkeypatch.setenv("SGI_ENV", env)
        assert isinstance(get_config(), expected)

    def test_testing_config_writes_no_files(self):
        """Test that the testing config disables log, alert and provenance files."""
        config = TestingConfig()
        assert config.LOG_FILE is None
        assert config.ALERT_FILE is None
        assert config.PROVENANCE_FILE is None
        assert config.SWEEP_WORKERS == 1

    def test_integrator_defaults(self):
        """Test the solver and regime defaults."""
        config = TestingConfig()
        assert config.RTOL <= 1e-8
        assert config.LINEAR_STEPS_PER_PERIOD >= 16
        assert config.OFF_RESONANCE_FACTOR == 1e3
        assert config.SPIN_TRANSFER_THRESHOLD == 1e-3
