"""Exception hierarchy.

Every computational failure raised by the toolkit derives from
:class:`ASFError`; the CLI maps those to exit code 1 and configuration
problems (:class:`ConfigError`) to exit code 2.
"""


class ASFError(Exception):
    """Base class for computational failures."""


class ConfigError(ASFError):
    """Malformed or inconsistent configuration / user input."""


# ramp
class DerivativeMismatch(ASFError):
    pass


# system
class NonFinite(ASFError):
    pass


class SideMismatch(ASFError, ValueError):
    pass


class RootNotFound(ASFError):
    pass


class DegenerateSpectrum(ASFError):
    pass


# blowup
class OutOfOverlap(ASFError, ValueError):
    pass


# heteroclinic
class NoBracket(ASFError):
    pass


class NoConvergence(ASFError):
    pass


class UnsupportedShooting(ASFError):
    """Shooting setup whose unknown/condition count is not supported."""


# integrator
class BlowUp(ASFError):
    pass


class StepSizeUnderflow(ASFError):
    pass


class SameOutcome(ASFError):
    pass


class Unresolved(ASFError):
    def __init__(self, message, hint=None):
        super().__init__(message)
        self.hint = hint


# melnikov
class NotDecaying(ASFError):
    pass


class NoUnstableDirection(ASFError):
    pass


class TailDominates(ASFError):
    pass


class NoSignChange(ASFError):
    pass


class DegenerateRoot(ASFError):
    pass


# tracking
class NotCertified(ASFError):
    pass
