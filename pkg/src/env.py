"""Runtime settings (EEGROB_* environment variables and an optional .env file)."""

from pathlib import Path
from typing import Literal, Optional, Union

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


ENV_PREFIX = "EEGROB_"
DEFAULT_RESULT_ROOT = Path("results")


class ToolkitSettings(BaseSettings):
    """Machine-level settings; none of them changes experiment results."""

    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, extra="ignore")

    result_root: Optional[Path] = Field(None, description="Result-root override")
    log_level: Literal["debug", "info", "warn", "error"] = Field("info")
    workers: int = Field(1, ge=1, description="Worker processes for grid cells")
    device: str = Field("cpu", description="Torch device for training and attacks")

    def resolved_result_root(self, cli_value: Optional[Union[str, Path]] = None) -> Path:
        """CLI flag beats EEGROB_RESULT_ROOT beats ./results."""
        if cli_value:
            return Path(cli_value)
        return self.result_root or DEFAULT_RESULT_ROOT


def load_settings(env_file: Optional[Union[str, Path]] = None) -> ToolkitSettings:
    """Read .env (without overriding real environment variables), then EEGROB_*."""
    env_path = Path(env_file) if env_file else Path.cwd() / ".env"
    if env_path.exists():
        load_dotenv(dotenv_path=env_path, override=False)
    return ToolkitSettings()
