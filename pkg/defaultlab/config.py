# defaultlab/config.py

from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

# Допуски по умолчанию: сумма вероятностей и проверка мартингальности
EPS_SUM = 1e-12
EPS_MART = 1e-10

# Предел полного перебора предсказуемых моментов / событий
CAPACITY_LIMIT = 2 ** 16

DEFAULT_THETA_LEVELS = 4
SIGNIFICANT_DIGITS = 17

# Сентинел "после горизонта" для случайных моментов
INF_TIME = 2 ** 62


class Settings(BaseSettings):
    """Настройки процесса. Из окружения читается только зерно генератора."""
    SEED: Optional[int] = None
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(env_file=".env", env_prefix="DEFAULTLAB_", extra="ignore")


@lru_cache()
def get_settings():
    return Settings()
