"""
Simulation Configuration Factory
Manages development, testing, and production settings
"""
import os


class Config:
    """Base configuration"""
    DEBUG = False
    TESTING = False

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("LOG_FILE", "logs/sgi.log")
    LOG_MAX_BYTES = 10485760  # 10MB
    LOG_BACKUP_COUNT = 5
    ALERT_FILE = os.getenv("ALERT_FILE", "logs/run_alerts.log")
    PROVENANCE_FILE = os.getenv("PROVENANCE_FILE", "logs/provenance.jsonl")

    # Outputs
    OUTPUT_DIR = os.getenv("OUTPUT_DIR", "runs")

    # Sweeps
    SWEEP_WORKERS = int(os.getenv("SWEEP_WORKERS", "4"))

    # Integrators
    RTOL = float(os.getenv("SGI_RTOL", "1e-9"))
    ATOL = float(os.getenv("SGI_ATOL", "1e-12"))
    STEPS_PER_PERIOD = int(os.getenv("SGI_STEPS_PER_PERIOD", "50"))
    LINEAR_STEPS_PER_PERIOD = int(os.getenv("SGI_LINEAR_STEPS_PER_PERIOD", "16"))
    CLOSURE_MAX_ITER = int(os.getenv("SGI_CLOSURE_MAX_ITER", "50"))

    # Regime checks
    SEPARATION_FACTOR = float(os.getenv("SGI_SEPARATION_FACTOR", "10"))
    OFF_RESONANCE_FACTOR = float(os.getenv("SGI_OFF_RESONANCE_FACTOR", "1e3"))
    SPIN_TRANSFER_THRESHOLD = float(os.getenv("SGI_SPIN_TRANSFER_THRESHOLD", "1e-3"))


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    LOG_LEVEL = os.getenv("LOG_LEVEL", "DEBUG")


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    LOG_FILE = None
    ALERT_FILE = None
    PROVENANCE_FILE = None
    SWEEP_WORKERS = 1


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False
    TESTING = False

    # Quieter logs for batch sweeps
    LOG_LEVEL = "WARNING"


def get_config():
    """Get configuration based on environment"""
    env = os.getenv("SGI_ENV", "development").lower()

    if env == "production":
        return ProductionConfig()
    elif env == "testing":
        return TestingConfig()
    else:
        return DevelopmentConfig()
