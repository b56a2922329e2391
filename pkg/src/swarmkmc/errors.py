"""Exception hierarchy. Exit codes for the CLI hang off these classes."""


class SwarmKMCError(Exception):
    """Base class for all package errors."""


class ConfigError(SwarmKMCError):
    """Bad or incomplete configuration. CLI exit code 2."""


class VerificationError(SwarmKMCError):
    """A verification check failed. CLI exit code 1."""


class SimulationError(SwarmKMCError):
    """Runtime failure inside a simulation. CLI exit code 3."""
