"""Exception hierarchy.

``InvalidInput`` covers bad arguments and configurations (CLI exit code 2);
``NumericalFailure`` covers computations that could not be completed or
certified (CLI exit code 3).
"""


class ZRPError(Exception):
    """Base class for all package errors."""


class InvalidInput(ZRPError, ValueError):
    pass


class NumericalFailure(ZRPError, RuntimeError):
    pass


class NonzeroAtZero(InvalidInput):
    pass


class NonpositiveRate(InvalidInput):
    pass


class NonpositiveTail(InvalidInput):
    pass


class NegativeDensity(InvalidInput):
    pass


class InvalidInitial(InvalidInput):
    pass


class FitUnderdetermined(InvalidInput):
    pass


class StateSpaceTooLarge(InvalidInput):
    pass


class PairSpaceTooLarge(InvalidInput):
    pass


class ZeroMass(InvalidInput):
    pass


class MNotSatisfied(NumericalFailure):
    """No k0 up to the scan limit gives a positive weak-monotonicity gap."""


class TruncationOverflow(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class NotIrreducible(NumericalFailure):
    pass


class EigensolveFailure(NumericalFailure):
    pass


class DegenerateRatio(NumericalFailure):
    pass


class InsufficientSignal(NumericalFailure):
    pass
