class ConsensusError(Exception):
    """Base error for the simulator. exit_code is what the CLI returns for it."""

    exit_code = 1


class FileAccessError(ConsensusError):
    """Unreadable input or unwritable output file"""

    exit_code = 2


class GraphFormatError(ConsensusError):
    """Malformed edge list: bad header, out-of-range index, duplicate or self-loop pair"""


class UnknownEdgeError(ConsensusError):
    pass


class DelaySpecError(ConsensusError):
    """Per-link bounds inconsistent with the graph or with tau_bar"""


class DelayTraceError(ConsensusError):
    """Trace schedule queried for an (edge, k) it does not contain"""


class GammaBoundError(ConsensusError):
    """Surplus gain outside (0, c_min) without an explicit override"""


class SnapshotError(ConsensusError):
    pass


class DimensionError(ConsensusError):
    pass


class ConfigError(ConsensusError):
    pass


class ValidationFailure(ConsensusError):
    """An invariant of the check suite did not hold"""
