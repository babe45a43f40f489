"""HTTP inference service for the corpus toolkit's three wire protocols."""

from .app import create_app
from .config import ConfigError, ServerConfig, load_config

__all__ = ["ConfigError", "ServerConfig", "create_app", "load_config"]

__version__ = "0.1.0"
