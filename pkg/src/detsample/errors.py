"""Exception hierarchy shared across the package.

Everything raised on purpose derives from DetSampleError so callers (and the
CLI) can distinguish model/runtime problems from genuine bugs.
"""
from __future__ import annotations


class DetSampleError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModel(DetSampleError):
    """A matrix, constraint, or graph violates a construction invariant."""


class SingularMatrix(DetSampleError):
    """A required inverse does not exist (determinant below tolerance)."""


class SingularBlock(DetSampleError):
    """A conditioning block T has det(L_TT) below tolerance."""


class IllConditioned(DetSampleError):
    """Coefficient recovery failed its residual check on every available path."""


class ZeroConditional(DetSampleError):
    """Conditional marginal requested against an event of zero mass."""


class ZeroMassCondition(DetSampleError):
    """Conditioning on a set that the measure assigns zero mass."""


class ZeroMass(DetSampleError):
    """A sampler ran out of mass (no admissible continuation)."""


class ProbabilityViolation(DetSampleError):
    """A probability left [0, 1] (or a mass went negative) beyond clamping tolerance."""


class GroundSetTooLarge(DetSampleError):
    """Exhaustive enumeration requested beyond the supported ground-set size."""


class MixedSizes(DetSampleError):
    """A distribution expected to be size-homogeneous is not."""


class SupportMismatch(DetSampleError):
    """Divergence of q from p requested where q puts mass outside supp(p)."""


class RoundBudgetExceeded(DetSampleError):
    """No proposal accepted within the configured number of fan-out rounds."""


class BatchRejected(DetSampleError):
    """A proposal batch exhausted its fan-out budget without an acceptance."""


class BadParity(DetSampleError):
    """A pair-structured instance was asked for an odd or infeasible size."""


class NotPlanar(DetSampleError):
    """The input graph admits no planar embedding (or the given one is invalid)."""


class OddVertexCount(DetSampleError):
    """Perfect matchings require an even number of vertices."""


class NoPerfectMatching(DetSampleError):
    """The graph has no perfect matching."""
