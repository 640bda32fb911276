"""Exception hierarchy shared by every speclab module."""


class SpeclabError(Exception):
    """Base class for all library errors."""


class NonStochasticInput(SpeclabError):
    pass


class DegenerateGraph(SpeclabError):
    pass


class ZeroDegree(SpeclabError):
    pass


class MalformedPayload(SpeclabError):
    pass


class InvariantViolation(SpeclabError):
    pass


class DimensionTooLarge(SpeclabError):
    pass


class ConvergenceFailure(SpeclabError):
    pass


class ShapeMismatch(SpeclabError, ValueError):
    pass


class NegativeEigenvalue(SpeclabError):
    pass


class TooFewSamples(SpeclabError, ValueError):
    pass


class Divergence(SpeclabError):
    pass


class MissingPayload(SpeclabError):
    pass


class UnknownNatural(SpeclabError, KeyError):
    pass


class SingularQ(SpeclabError):
    pass


class EmptySet(SpeclabError, ValueError):
    pass


class TooLargeForExact(SpeclabError):
    pass


class ZeroVector(SpeclabError, ValueError):
    pass


class ZeroSpectralGap(SpeclabError):
    pass


class RankDeficient(SpeclabError):
    pass


class EpsilonTooLarge(SpeclabError):
    pass


class ZeroRho(SpeclabError, ValueError):
    pass


class DegenerateDiscretization(SpeclabError):
    pass


class SpecValidationError(SpeclabError, ValueError):
    """Raised when a generator spec is malformed; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
