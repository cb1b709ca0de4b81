from .config import ConfigError, EvalConfig, ForgeConfig, interpolate, load_config
from .commands import EndpointPolicy, main, run

__all__ = ["ConfigError", "EndpointPolicy", "EvalConfig", "ForgeConfig", "interpolate", "load_config", "main", "run"]
