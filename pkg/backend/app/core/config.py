from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional


class Settings(BaseSettings):
    # Application
    APP_NAME: str = "Exit-Time Games Solver"
    APP_VERSION: str = "1.0.0"

    # Grid limits
    MAX_STATE_DIM: int = 4
    MAX_GRID_NODES: int = 2_000_000
    DEFAULT_NODES: int = 21

    # Scheme defaults
    DEFAULT_DT: float = 0.01
    DEFAULT_TOL: float = 1e-8
    DEFAULT_MAX_ITERS: int = 50_000
    CONTRACTION_FLOOR: float = 1e-8

    # Oracle
    SNAP_TOLERANCE: float = 1e-9
    ORACLE_TRUNCATION: float = 1e-12

    # Validation and certification
    VALIDATION_SAMPLES: int = 5
    CERT_TRIALS: int = 100
    CERT_DELTA: float = 0.05
    SEED: int = 0

    # Output
    OUTPUT_DIR: str = "./runs"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE_PATH: Optional[str] = None

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="EXITGAME_",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
