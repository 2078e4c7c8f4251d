"""Exception types raised across the package."""


class PullbackLabError(Exception):
    """Base class for all package errors."""


class HypothesisViolation(PullbackLabError):
    """A structural hypothesis failed on the probe grid."""

    def __init__(self, name, witness, detail=""):
        self.name = name
        self.witness = witness
        self.detail = detail
        msg = f"hypothesis {name} violated at {witness}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class UnknownScenario(PullbackLabError):
    pass


class ScenarioFormatError(PullbackLabError):
    """Malformed scenario document (unknown keys, bad types)."""


class GridTooCoarse(PullbackLabError):
    pass


class OutOfWindow(PullbackLabError):
    pass


class DegenerateMass(PullbackLabError):
    pass


class NonFinite(PullbackLabError):
    pass


class DelayTooStrong(PullbackLabError):
    def __init__(self, sup_eta1):
        self.sup_eta1 = sup_eta1
        super().__init__(
            f"no admissible eta gives a positive decay rate (sup eta1 = {sup_eta1:.6g})")


class ForcingNotTempered(PullbackLabError):
    pass


class TimestampMismatch(PullbackLabError):
    pass


class EmptySet(PullbackLabError):
    pass


class CannotSplit(PullbackLabError):
    pass
