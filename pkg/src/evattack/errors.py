"""Exception hierarchy shared by every module of the package."""


class EvAttackError(Exception):
    """Base class for all package errors."""


class NonRadialTopology(EvAttackError):
    pass


class DisconnectedBus(EvAttackError):
    pass


class BadNodeIndex(EvAttackError):
    pass


class IndexOutOfRange(EvAttackError):
    pass


class DimensionMismatch(EvAttackError, ValueError):
    pass


class InfeasibleTarget(EvAttackError, ValueError):
    pass


class NumericalDivergence(EvAttackError):
    pass


class WiretapUnavailable(EvAttackError):
    pass


class NotArmed(EvAttackError):
    pass


class BoundViolated(EvAttackError):
    pass


class OracleNotConverged(EvAttackError):
    pass


class ProblemTooLarge(EvAttackError):
    pass


class EmptyWindow(EvAttackError, ValueError):
    pass


class ScenarioMismatch(EvAttackError):
    pass


class ConfigError(EvAttackError):
    """Scenario configuration failed validation.

    ``diagnostics`` holds one message per violation.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))
