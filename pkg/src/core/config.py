import os

from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field

BASE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../'))


class NumericSettings(BaseSettings):
    identity_tolerance: float = Field(1e-12, validation_alias='SPLITPLOT_IDENTITY_TOL')
    enumeration_tolerance: float = Field(1e-9, validation_alias='SPLITPLOT_ENUM_TOL')
    enumeration_abs_floor: float = Field(1e-12, validation_alias='SPLITPLOT_ENUM_ABS_FLOOR')
    enumeration_guard: int = Field(10_000_000, validation_alias='SPLITPLOT_ENUM_GUARD')
    additivity_tolerance: float = Field(1e-9, validation_alias='SPLITPLOT_ADDITIVITY_TOL')

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding='utf-8', extra='ignore')


class BMatrixSettings(BaseSettings):
    # Полный перебор знаковых векторов до W-1 <= limit, дальше конструктивный поиск
    exhaustive_sign_limit: int = Field(20, validation_alias='SPLITPLOT_EXHAUSTIVE_SIGN_LIMIT')
    golden_iterations: int = Field(60, validation_alias='SPLITPLOT_GOLDEN_ITERATIONS')
    polish_step: float = Field(1e-6, validation_alias='SPLITPLOT_POLISH_STEP')
    polish_points: int = Field(25, validation_alias='SPLITPLOT_POLISH_POINTS')
    segment_margin: float = Field(1e-9, validation_alias='SPLITPLOT_SEGMENT_MARGIN')
    search_batch: int = Field(4096, validation_alias='SPLITPLOT_SEARCH_BATCH')

    jacobi_tolerance: float = Field(1e-12, validation_alias='SPLITPLOT_JACOBI_TOL')
    jacobi_max_sweeps: int = Field(100, validation_alias='SPLITPLOT_JACOBI_MAX_SWEEPS')

    # Пороги относительно следа матрицы
    zero_eigen_tolerance: float = Field(1e-9, validation_alias='SPLITPLOT_ZERO_EIGEN_TOL')
    nonzero_eigen_tolerance: float = Field(1e-8, validation_alias='SPLITPLOT_NONZERO_EIGEN_TOL')

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding='utf-8', extra='ignore')


class SimulationDefaults(BaseSettings):
    replicates: int = Field(200, validation_alias='SPLITPLOT_REPLICATES')
    workers: int = Field(1, validation_alias='SPLITPLOT_WORKERS')
    progress: bool = Field(False, validation_alias='SPLITPLOT_PROGRESS')
    ratio_floor: float = Field(1e-15, validation_alias='SPLITPLOT_RATIO_FLOOR')

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding='utf-8', extra='ignore')


class AppSettings(BaseSettings):
    app_name: str = Field("Split-Plot Randomization Inference", validation_alias='APP_NAME')
    debug: bool = Field(False, validation_alias='DEBUG')
    log_level: str = Field("INFO", validation_alias='LOG_LEVEL')

    default_seed: int = Field(20190917, validation_alias='SPLITPLOT_SEED')
    out_dir: str = Field("results", validation_alias='SPLITPLOT_OUT_DIR')
    schema_version: str = Field("1.0", validation_alias='SPLITPLOT_SCHEMA_VERSION')

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding='utf-8', extra='ignore')


class Settings(BaseSettings):
    numeric_settings: NumericSettings = NumericSettings()
    bmatrix_settings: BMatrixSettings = BMatrixSettings()
    simulation_defaults: SimulationDefaults = SimulationDefaults()
    app_settings: AppSettings = AppSettings()

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding='utf-8', extra='ignore')


settings = Settings(_env_file=f"{BASE_DIR}/.env", _env_file_encoding='utf-8')
