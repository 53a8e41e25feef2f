"""Layered autonomous-agent runtime with a privilege-checked message bus."""

from .config import RunConfig, Settings
from .runtime import RunResult, Runtime, replay, run

__all__ = ["RunConfig", "RunResult", "Runtime", "Settings", "replay", "run"]
__version__ = "0.1.0"
