import os
import sys
from functools import lru_cache
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import ConfigError

try:
    from dotenv import load_dotenv
    # A missing .env file is fine, defaults cover every setting
    load_dotenv()
except ImportError:
    print("python-dotenv not installed, using environment variables directly", file=sys.stderr)

TOOL_NAME = "boson-sampler"
TOOL_VERSION = "0.3.0"

_ENV_FIELDS = {
    "unitarity_tol": "BOSON_UNITARITY_TOL",
    "ryser_max": "BOSON_RYSER_MAX",
    "naive_max": "BOSON_NAIVE_MAX",
    "reference_threshold": "BOSON_REFERENCE_THRESHOLD",
    "workers": "BOSON_WORKERS",
    "transmissivity_mapping": "BOSON_TRANSMISSIVITY_MAPPING",
    "geometry_file": "BOSON_GEOMETRY_FILE",
    "sse_host": "MCP_SSE_HOST",
    "sse_port": "MCP_SSE_PORT",
}


class Settings(BaseModel):
    """Runtime defaults for the toolkit, read from the environment."""

    model_config = ConfigDict(frozen=True)

    unitarity_tol: float = Field(1e-9, gt=0)
    ryser_max: int = Field(20, ge=1)
    naive_max: int = Field(8, ge=1)
    reference_threshold: float = Field(1e-6, gt=0)
    workers: int = Field(1, ge=1)
    transmissivity_mapping: Literal["cross", "bar"] = "cross"
    geometry_file: str | None = None
    sse_host: str = "127.0.0.1"
    sse_port: int = Field(8000, ge=1, le=65535)

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from the BOSON_* and MCP_SSE_* environment variables.

        Returns:
            Settings with every unset variable at its default

        Raises:
            ConfigError: when a variable is present but invalid
        """
        values = {}
        for field, var in _ENV_FIELDS.items():
            raw = os.getenv(var)
            if raw is not None and raw.strip() != "":
                values[field] = raw.strip()
        try:
            return cls(**values)
        except ValidationError as e:
            bad = e.errors()[0]
            field = bad["loc"][0] if bad["loc"] else "?"
            var = _ENV_FIELDS.get(field, field)
            raise ConfigError(f"invalid value for {var}: {bad['msg']}") from e


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings.from_env()
