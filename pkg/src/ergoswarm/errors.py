"""Exception hierarchy shared by every module of the package."""


class ErgoswarmError(Exception):
    """Base class for all package errors."""


# world
class WorldError(ErgoswarmError):
    pass


class DisconnectedWorld(WorldError):
    pass


class AllBlocked(WorldError):
    pass


class ZeroMass(WorldError):
    pass


class InvalidEvent(WorldError):
    pass


# belief
class SingularGram(ErgoswarmError):
    pass


# policy
class PolicyError(ErgoswarmError):
    pass


class ZeroBeliefMass(PolicyError):
    pass


class NotReversible(PolicyError):
    pass


class NoConvergence(PolicyError):
    pass


# engine / experiments
class SimulationError(ErgoswarmError):
    """Raised when a run halts; carries the step index at which it failed."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


class ConfigError(ErgoswarmError):
    """Invalid experiment configuration. ``field`` is the dotted config path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
