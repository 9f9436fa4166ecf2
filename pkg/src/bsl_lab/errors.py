"""Exception hierarchy.

Every error raised on purpose by the library derives from BslError, so the
CLI can tell input problems (exit 2) from bugs (exit 1).
"""


class BslError(Exception):
    pass


# combinatorics
class SchemeError(BslError):
    pass


class NotInvolution(SchemeError):
    pass


class HasFixedPoint(SchemeError):
    pass


class AdjacentPairing(SchemeError):
    pass


class TooSmall(SchemeError):
    pass


class OddCycle(SchemeError):
    pass


class IndexOutOfRange(BslError):
    pass


class TooLarge(BslError):
    pass


# circle_map
class ParseError(BslError):
    pass


class NonMonotoneCuttingPoints(BslError):
    pass


class SlopeNotGreaterThanOne(BslError):
    pass


class NoCoincidence(BslError):
    pass


class NoConsistentOrder(BslError):
    pass


class ReducibleMatrix(BslError):
    pass


class VerificationFailed(BslError):
    pass


# generators
class InterpolationInfeasible(BslError):
    pass


class WindowDegenerate(BslError):
    pass


# dyngraph
class DepthTooLarge(BslError):
    pass


class InconsistentFold(BslError):
    pass


class AmbiguousAdjacency(BslError):
    pass


class IncompleteLink(BslError):
    pass


class OutOfBuiltRegion(BslError):
    pass


# group_action
class AmbiguousCase(BslError):
    pass


class NoAdmissibleInterval(BslError):
    pass


class NotFound(BslError):
    pass


class BoundsExhausted(BslError):
    pass


# surface_complex
class IncompleteLoop(BslError):
    pass


class NotInterior(BslError):
    pass


class DepthInsufficient(BslError):
    pass
