from pydantic_settings import BaseSettings
from dotenv import load_dotenv

load_dotenv()


class Settings(BaseSettings):
    MODE: str = "development"
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "runs"
    CONFIG_DIR: str = "configs"
    DEFAULT_CONFIG: str = "ieee-3der-testsystem"
    VIRTUAL_RESISTANCE: float = 1000.0  # ohm, overridden by [network] r_n in a config
    INTEGRATOR_METHOD: str = "LSODA"
    INTEGRATOR_STEP: float = 2e-5  # s, fixed-step methods only
    RTOL: float = 1e-9
    ATOL: float = 1e-9
    BATCH_WORKERS: int = 4

    class Config:
        env_file = ".env"
        extra = "allow"


settings = Settings()
