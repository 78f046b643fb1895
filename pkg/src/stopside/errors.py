"""Exception types shared across the library."""


class StopsideError(Exception):
    """Base class for all library errors."""


class NonConvergent(StopsideError):
    """A numeric limit (quadrature tail, derivative ladder, iteration) failed
    to stabilize within its budget."""


class DivergentIntegral(StopsideError):
    """Truncated values of an improper integral grow without bound."""


class NoRoot(StopsideError):
    """No sign change and no tolerable |h| minimum on the finest search grid."""


class OutOfDomain(StopsideError):
    """A point lies outside the diffusion's state interval (or a function was
    evaluated outside its region of validity)."""


class ParameterOutOfRange(StopsideError):
    """A catalog constructor received a parameter outside its legal range."""


class HypothesisViolated(StopsideError):
    """The sufficient-condition scan detected that its structural hypotheses
    (single sign change of the generator image, positive total mass) fail."""


class Unsimulable(StopsideError):
    """Monte Carlo was requested for a diffusion without a path stepper."""


class ParseError(StopsideError):
    """Reward expression rejected; carries the offending position and the
    token set that would have been accepted there."""

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        super().__init__(message)
        self.position = position
        self.expected = expected


class NegativeReward(StopsideError):
    """Sampling found g < 0 for a parsed reward."""
