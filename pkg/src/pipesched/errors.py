"""Exception hierarchy shared by all pipesched modules."""


class PipeschedError(Exception):
    """Base class for all domain errors raised by this package."""


class ConfigError(PipeschedError):
    """Malformed or inconsistent configuration input."""


# -- cluster / core ----------------------------------------------------------

class InvalidTopology(ConfigError):
    """Cluster invariants violated (P != W*D, node size does not divide P)."""


class NonPositiveBandwidth(ConfigError):
    """A bandwidth field is zero or negative."""


# -- schedule builders -------------------------------------------------------

class ScheduleError(PipeschedError):
    """Base class for schedule-construction errors."""


class InsufficientMicroBatches(ScheduleError):
    """1F1B needs at least D micro-batches to fill the warmup ramp."""


class InvalidChunking(ScheduleError):
    """Micro-batch count incompatible with the requested chunking."""


class OddChunkCount(ScheduleError):
    """V-shaped stage maps need an even number of chunks per device."""


class OddDeviceCount(ScheduleError):
    """Bidirectional fusion requires an even device count."""


class MergeConflict(ScheduleError):
    """Two tasks claimed the same device/time cell during a grid union."""


# -- simulator ---------------------------------------------------------------

class SimulationError(PipeschedError):
    """Base class for simulator errors."""


class UnmappedDevice(SimulationError):
    """A schedule device is missing from the device mapping."""


class DeadlockDetected(SimulationError):
    """Task dependencies form a cycle; the schedule cannot execute."""

    def __init__(self, message: str, cycle=None):
        super().__init__(message)
        self.cycle = list(cycle) if cycle else []


class EmptyTimeline(SimulationError):
    """An operation that needs simulated events got an empty timeline."""


# -- analysis ----------------------------------------------------------------

class UnsupportedCombination(PipeschedError):
    """No closed-form expression is modeled for this approach/parameters."""


class EmptySpace(PipeschedError):
    """Grid search invoked with no feasible configuration."""


# -- numeric runtime ---------------------------------------------------------

class RuntimeVerificationError(PipeschedError):
    """Base class for toy-runtime errors."""


class ShapeMismatch(RuntimeVerificationError):
    """Tensor shapes inconsistent with the model/stage dimensions."""


class ProtocolViolation(RuntimeVerificationError):
    """A worker received a message that does not match any expected task."""
