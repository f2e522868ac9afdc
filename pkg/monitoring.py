"""
Run alerts and provenance records for simulation runs.
Both are JSON-lines files: alerts mirror regime, closure and spin failures,
provenance keeps one entry per finished run keyed by its config hash.
"""

import os
import json
import logging
from datetime import datetime, timezone

logger = logging.getLogger(__name__)

SEVERITY_LEVELS = {
    "CRITICAL": logging.CRITICAL,
    "WARNING": logging.WARNING,
    "INFO": logging.INFO,
}


def _now():
    return datetime.now(timezone.utc).isoformat()


class JsonLinesLog:
    """Append-only JSON-lines file."""

    def __init__(self, path):
        self.path = path

    def append(self, entry):
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(entry, default=str) + "\n")

    def entries(self):
        """All entries, oldest first; unreadable lines are skipped."""
        if not os.path.exists(self.path):
            return []
        entries = []
        with open(self.path, 'r', encoding='utf-8') as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError:
                    logger.warning(f"Skipping malformed line {number} in {self.path}")
        return entries


class MonitoringAlert(JsonLinesLog):
    """Alerts raised while running scenarios (regime FAIL, closure failure, spin transfer)."""

    def __init__(self, log_file="logs/run_alerts.log"):
        super().__init__(log_file)

    def alert(self, severity, title, message, details=None):
        """Write the alert and mirror it to the logger at the matching level."""
        record = {
            "timestamp": _now(),
            "severity": severity,
            "title": title,
            "message": message,
            "details": details or {},
        }
        try:
            self.append(record)
        except OSError as e:
            logger.error(f"Failed to record alert {title!r}: {e}")
        logger.log(SEVERITY_LEVELS.get(severity, logging.INFO), f"[ALERT] {title}: {message}")
        return record

    def get_recent_alerts(self, severity=None, limit=20):
        """Most recent alerts (optionally of one severity), oldest first."""
        try:
            alerts = self.entries()
        except OSError as e:
            logger.error(f"Failed to read alerts: {e}")
            return []
        if severity is not None:
            alerts = [a for a in alerts if a.get("severity") == severity]
        return alerts[-limit:] if limit else alerts


class ProvenanceRecorder(JsonLinesLog):
    """One provenance entry per finished run, with the paths it wrote."""

    def __init__(self, record_file="logs/provenance.jsonl"):
        super().__init__(record_file)

    def record(self, name, provenance, outputs=None):
        entry = {
            "recorded": _now(),
            "name": name,
            "provenance": provenance,
            "outputs": outputs or {},
        }
        try:
            self.append(entry)
            logger.info(f"Provenance recorded for {name} ({str(provenance.get('config_hash', '?'))[:12]})")
        except OSError as e:
            logger.error(f"Failed to record provenance for {name}: {e}")
        return entry

    def find(self, config_hash):
        """Runs whose config hash matches, oldest first."""
        return [e for e in self.entries() if e.get("provenance", {}).get("config_hash") == config_hash]
