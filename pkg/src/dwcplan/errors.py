"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: configuration problems exit
with 2, infeasible optimization models with 3, and solver failures with 4.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """A configuration file or in-memory configuration is invalid.

    ``path`` identifies the offending field using dotted/indexed notation,
    e.g. ``cells[3].rho_jam_veh_mi``.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class TopologyError(ConfigError):
    """The electrical network is not a single radial feeder."""


class AssemblyError(RuntimeError):
    """An optimization model could not be assembled from its inputs."""


class InfeasibleError(RuntimeError):
    """The solver proved the optimization model infeasible.

    ``diagnosis`` carries a structured report locating the violated
    constraint family when one could be identified.
    """

    def __init__(self, message: str, diagnosis: dict | None = None):
        self.diagnosis = diagnosis or {}
        super().__init__(message)


class SolverError(RuntimeError):
    """The backend solver failed (numerical trouble, no convergence)."""
