import logging
import os
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

logger = logging.getLogger(__name__)

PROFILE_PATH_ENV = "ARMORCAGE_PROFILE_PATH"


class IncludeResolver:
    """
    Locate '#include <...>' targets and profile files under ordered search roots.
    """
    def __init__(self, roots: Iterable[str]):
        """
        Initialize the resolver.

        Args:
            roots: Directories searched in order; the first hit wins.
        """
        self.roots: List[Path] = [Path(root) for root in roots]

    @classmethod
    def from_environment(cls, roots: Iterable[str]) -> "IncludeResolver":
        """
        Build a resolver whose roots are ARMORCAGE_PROFILE_PATH entries followed by roots.
        """
        env_roots = [entry for entry in os.environ.get(PROFILE_PATH_ENV, "").split(":") if entry]
        return cls(env_roots + list(roots))

    def resolve(self, name: str) -> Optional[Path]:
        """
        Find an include target or profile file.

        Args:
            name: Relative name such as "tunables/global", or an absolute path.

        Returns:
            Path of the first existing file, or None.
        """
        candidate = Path(name)
        if candidate.is_absolute():
            return candidate if candidate.is_file() else None
        for root in self.roots:
            path = root / name
            if path.is_file():
                logger.debug(f"Resolved include <{name}> to {path}")
                return path
        return None

    def read(self, name: str) -> Optional[Tuple[Path, str]]:
        path = self.resolve(name)
        if path is None:
            return None
        return path, path.read_text(encoding="utf-8")

    def existing_roots(self) -> List[Path]:
        return [root for root in self.roots if root.is_dir()]

    def __repr__(self) -> str:
        return f"IncludeResolver({[str(root) for root in self.roots]})"
