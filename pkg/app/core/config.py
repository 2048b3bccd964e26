"""
HomodyneQKD — Configuration
Process-wide settings: logging, physics defaults the experiment leaves open,
harness output and classical-channel transport knobs.
"""
import os

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # ── Application ──────────────────────────────────────────────────────
    APP_NAME: str = "HomodyneQKD"
    APP_VERSION: str = "1.0.0"
    ENVIRONMENT: str = "development"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"
    CORS_ORIGINS: str = "http://localhost:3000,http://localhost:5173"

    # ── Physics defaults ─────────────────────────────────────────────────
    DEFAULT_REP_RATE_HZ: float = 1e6
    DEFAULT_LINEWIDTH_HZ: float = 1e4
    DEFAULT_WAVELENGTH_M: float = 1.543e-6
    DEFAULT_LOSS_DB_PER_KM: float = 0.2
    DEFAULT_ELECTRONIC_NOISE: float = 0.0
    DEFAULT_MU_REFERENCE: float = 1e6
    DEFAULT_DELAY_S: float = 1e-8

    # ── Harness ──────────────────────────────────────────────────────────
    HISTOGRAM_BIN_WIDTH: float = 0.25
    OUTPUT_DIR: str = "out"
    REPORT_INCLUDE_SLOTS: bool = True
    QKD_SIM_THREADS: int = 0  # 0 = one worker per CPU

    # ── Classical channel ────────────────────────────────────────────────
    ANNOUNCE_CHUNK_SLOTS: int = 8192
    TRANSPORT_HOST: str = "127.0.0.1"
    TRANSPORT_TIMEOUT_SECONDS: float = 30.0
    MAX_FRAME_BYTES: int = 64 * 1024 * 1024

    @property
    def sweep_workers(self) -> int:
        if self.QKD_SIM_THREADS > 0:
            return self.QKD_SIM_THREADS
        return os.cpu_count() or 1

    @property
    def log_level(self) -> str:
        return "DEBUG" if self.DEBUG else self.LOG_LEVEL.upper()

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
