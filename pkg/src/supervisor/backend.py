"""
Enforcement backends: how a child enters its profile.
"""

import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import ClassVar, Optional

from src.engine.context import UNCONFINED, SubjectContext, confined
from src.errors import SetupError
from src.policy.profile import ProfileSet

logger = logging.getLogger(__name__)

APPARMOR_ENABLED = Path("/sys/module/apparmor/parameters/enabled")
APPARMOR_PROFILES = Path("/sys/kernel/security/apparmor/profiles")
ATTR_PATHS = (Path("/proc/self/attr/apparmor/current"), Path("/proc/self/attr/current"))


class EnforcementBackend(ABC):
    """
    Base class for enforcement backends.
    """
    name: ClassVar[str] = ""

    def __init__(self, profile_set: ProfileSet):
        """
        Initialize the backend.

        Args:
            profile_set: Loaded profiles the engine decides against.
        """
        self.profile_set = profile_set

    @abstractmethod
    def enter(self, profile: Optional[str]) -> SubjectContext:
        """
        Confine the calling process. Runs inside the child, as the last setup step.

        Args:
            profile: Profile name, or None to stay unconfined.

        Returns:
            The context task scripts are checked against.

        Raises:
            SetupError: the profile cannot be entered.
        """
        pass

    @property
    def checks_commands(self) -> bool:
        """Whether the engine must vet a command's program before exec."""
        return False

    @classmethod
    def available(cls, profile: Optional[str] = None) -> bool:
        return True


class SimulatedBackend(EnforcementBackend):
    """Decisions come from the policy engine only; the kernel is not involved."""
    name = "simulated"

    def enter(self, profile: Optional[str]) -> SubjectContext:
        if profile is None:
            return UNCONFINED
        if profile not in self.profile_set:
            raise SetupError("profile", f"unknown profile: {profile}")
        return confined(profile)

    @property
    def checks_commands(self) -> bool:
        return True


class NativeBackend(EnforcementBackend):
    """Asks the kernel MAC module to switch profile on the next exec."""
    name = "native"

    def enter(self, profile: Optional[str]) -> SubjectContext:
        if profile is None:
            return UNCONFINED
        command = f"changeprofile {profile}"
        for attr in ATTR_PATHS:
            if not attr.exists():
                continue
            try:
                with open(attr, "w") as f:
                    f.write(command)
            except OSError as e:
                raise SetupError("profile", f"kernel refused '{command}': {e.strerror}") from None
            return confined(profile)
        raise SetupError("profile", "kernel MAC interface not found")

    @classmethod
    def available(cls, profile: Optional[str] = None) -> bool:
        try:
            if APPARMOR_ENABLED.read_text().strip().upper() != "Y":
                return False
            if profile is None:
                return True
            loaded = APPARMOR_PROFILES.read_text().splitlines()
        except OSError:
            return False
        return any(line.rsplit(" (", 1)[0] == profile for line in loaded)


class BackendFactory:
    """
    Factory class for creating enforcement backends by name.
    """

    _backend_classes = {
        'native': NativeBackend,
        'simulated': SimulatedBackend,
    }

    @classmethod
    def create_backend(cls, backend_type: str, profile_set: ProfileSet,
                       profile: Optional[str] = None) -> EnforcementBackend:
        """
        Create a backend.

        Args:
            backend_type: 'auto' or a registered name ('native', 'simulated').
            profile_set: Loaded profiles.
            profile: Profile the job will enter; 'auto' picks native only when
                the kernel module is enabled and has this profile loaded.

        Returns:
            Backend instance.
        """
        backend_type_lower = backend_type.lower()
        if backend_type_lower == 'auto':
            backend_type_lower = 'native' if NativeBackend.available(profile) else 'simulated'
            logger.debug(f"Backend auto-detected: {backend_type_lower}")

        if backend_type_lower not in cls._backend_classes:
            raise ValueError(
                f"Unknown backend type: {backend_type}. "
                f"Supported types: {['auto'] + list(cls._backend_classes.keys())}"
            )
        return cls._backend_classes[backend_type_lower](profile_set)

    @classmethod
    def register_backend(cls, name: str, backend_class):
        """
        Register a new backend type.

        Args:
            name: Name of the backend type.
            backend_class: EnforcementBackend subclass.
        """
        cls._backend_classes[name.lower()] = backend_class
