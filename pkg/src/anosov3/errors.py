"""Exception types shared across the package.

Every failure mode that callers are expected to catch gets its own class;
messages carry the witnessing data (point, frequency, iterate) so reports
can surface them without string parsing.
"""

from __future__ import annotations


class Anosov3Error(Exception):
    """Base class for all domain errors."""


# lattice layer

class NotUnimodular(Anosov3Error):
    pass


class NotHyperbolic(Anosov3Error):
    pass


class NoRealNormalization(Anosov3Error):
    pass


class DegenerateSpectrum(Anosov3Error):
    pass


class RationalResonance(Anosov3Error):
    pass


# maps and cone verification

class ConeViolation(Anosov3Error):
    def __init__(self, message, point=None, bundle=None):
        super().__init__(message)
        self.point = point
        self.bundle = bundle


class NotInvertible(Anosov3Error):
    pass


# conjugacy solver

class NoConvergence(Anosov3Error):
    pass


class ResolutionTooCoarse(Anosov3Error):
    pass


class NoDecay(Anosov3Error):
    def __init__(self, message, iterate=None, distance=None):
        super().__init__(message)
        self.iterate = iterate
        self.distance = distance


class DegenerateFit(Anosov3Error):
    pass


# periodic data

class NewtonDiverged(Anosov3Error):
    pass


class SingularJacobian(Anosov3Error):
    pass


# cohomology

class NonzeroMean(Anosov3Error):
    pass


class SmallDivisorFloor(Anosov3Error):
    def __init__(self, message, frequency=None, divisor=None):
        super().__init__(message)
        self.frequency = frequency
        self.divisor = divisor


# foliation geometry

class DirectionNotConverged(Anosov3Error):
    pass


class StepCollapse(Anosov3Error):
    pass


class TruncationBoundExceeded(Anosov3Error):
    pass


class HolonomyEscape(Anosov3Error):
    pass


class StencilOffLeaf(Anosov3Error):
    pass


class InverseConjugacyAccuracy(Anosov3Error):
    pass
