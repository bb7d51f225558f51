"""Exceptions shared across the workbench, mapped to CLI exit codes."""

from __future__ import annotations


class QuadtuneError(Exception):
    """Base class for workbench failures."""


class MissionAbort(QuadtuneError):
    """Mission never reached acceptance or diverged: crash/stall detector."""

    exit_code = 2


class NumericalAbort(QuadtuneError):
    """A control block or the integrator produced non-finite values."""

    exit_code = 3

    def __init__(self, block: str, message: str = ""):
        self.block = block
        super().__init__(f"non-finite value in {block}" + (f": {message}" if message else ""))


class ConfigError(QuadtuneError):
    """Invalid configuration file or option set."""

    exit_code = 64
