"""
Command-line configuration: structured defaults < conf.yaml < environment < flags.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Sequence

from omegaconf import OmegaConf

from src.audit.audit_log import AUDIT_LOG_ENV
from src.errors import SetupError
from src.parser.include_resolver import PROFILE_PATH_ENV

logger = logging.getLogger(__name__)

project_root = Path(__file__).parent.parent
DEFAULT_CONFIG_PATH = project_root / "conf.yaml"
BACKENDS = ("auto", "native", "simulated")


@dataclass
class CliConfig:
    profile_roots: List[str] = field(default_factory=lambda: ["profiles", "/etc/apparmor.d"])
    backend: str = "auto"
    audit_log: Optional[str] = None
    verbosity: int = 0
    grace_seconds: float = 0.5
    fork_bound: int = 64
    strict_includes: bool = True

    def require_roots(self):
        """Raises SetupError unless at least one profile root exists."""
        if not any(Path(root).is_dir() for root in self.profile_roots):
            raise SetupError("config", f"no profile root found among {', '.join(self.profile_roots)}")


def load_config(
    config_path: Optional[str] = None,
    profile_roots: Sequence[str] = (),
    backend: Optional[str] = None,
    audit_log: Optional[str] = None,
    verbosity: Optional[int] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> CliConfig:
    """
    Build the effective configuration.

    Relative profile roots in the YAML file are taken relative to that file.
    Roots from ARMORCAGE_PROFILE_PATH and then from flags are put in front,
    in the order given.

    Args:
        config_path: YAML file; defaults to conf.yaml at the project root.
        profile_roots: --profile-root values.
        backend: --backend value.
        audit_log: --audit-log value.
        verbosity: Count of -v flags.
        environ: Environment; defaults to os.environ.

    Raises:
        ValueError: unknown backend, or an invalid config file (omegaconf
            validation errors are ValueError subclasses).
    """
    environ = os.environ if environ is None else environ
    conf = OmegaConf.structured(CliConfig)
    path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
    if path.exists():
        loaded = OmegaConf.load(str(path))
        conf = OmegaConf.merge(conf, loaded)
        conf.profile_roots = [str(path.parent / root) if not Path(root).is_absolute() else root
                              for root in conf.profile_roots]
        logger.debug(f"Loaded configuration from {path}")
    elif config_path:
        raise ValueError(f"config file not found: {config_path}")

    roots = list(conf.profile_roots)
    env_roots = [root for root in environ.get(PROFILE_PATH_ENV, "").split(":") if root]
    conf.profile_roots = list(profile_roots) + env_roots + roots
    if environ.get(AUDIT_LOG_ENV):
        conf.audit_log = environ[AUDIT_LOG_ENV]

    if backend is not None:
        conf.backend = backend
    if audit_log is not None:
        conf.audit_log = audit_log
    if verbosity:
        conf.verbosity = verbosity

    config: CliConfig = OmegaConf.to_object(conf)
    if config.backend not in BACKENDS:
        raise ValueError(f"Unknown backend: {config.backend}. Supported: {list(BACKENDS)}")
    if config.grace_seconds < 0 or config.fork_bound < 1:
        raise ValueError("grace_seconds must be >= 0 and fork_bound >= 1")
    return config


def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
