import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings

load_dotenv()

ASSETS_DIR = Path(__file__).resolve().parent / "assets"


class Settings(BaseSettings):
    # Provider
    OPENAI_API_KEY: str | None = os.getenv("OPENAI_API_KEY")
    LLM_MODEL: str = "gpt-4o"
    LLM_ENDPOINT: str = "https://api.openai.com/v1"
    PROVIDER_MAX_RETRIES: int = 3
    PROVIDER_TIMEOUT: float = 60.0
    PROVIDER_BACKOFF_BASE: float = 1.0
    PROVIDER_BACKOFF_FACTOR: float = 2.0
    FIXTURES_DIR: str = str(ASSETS_DIR / "scenarios")

    # Pipeline
    ROBOT_CONFIG: str = str(ASSETS_DIR / "robots" / "stretch_like.robot")
    FRAME_RATE: float = 10.0
    WORKERS: int = 1
    MASTER_SEED: int = 0
    SCENE_POOL_SIZE: int = 5
    HUMAN_POOL_SIZE: int = 10

    # Logging configuration
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_DIR: str = os.getenv("LOG_DIR", "logs")
    LOG_FILE_MAX_SIZE: int = 10 * 1024 * 1024  # 10 MB
    LOG_FILE_BACKUP_COUNT: int = 5
    LOG_EPISODES_TO_CONSOLE: bool = False


settings = Settings()
