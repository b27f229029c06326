"""Exception types shared across the library.

Every failure mode that callers are expected to handle gets its own class;
anything that carries diagnostic payload (residuals, witnesses, partial
results) stores it on the exception instance.
"""

from __future__ import annotations


class TesseraError(Exception):
    """Base class for all library errors."""


class OverflowEscape(TesseraError):
    """An iterate exceeded the floating-point range before completing."""

    def __init__(self, message: str, steps_done: int = 0):
        super().__init__(message)
        self.steps_done = steps_done


class RootFindingFailure(TesseraError):
    """The simultaneous root finder did not converge; residuals attached."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class BudgetExceeded(TesseraError):
    """A configured size/iteration budget would be exceeded."""


class Inconclusive(TesseraError):
    """Budget exhausted before a positive or negative answer was reached.

    Distinct from a negative result: callers must not treat this as 'false'.
    """


class TooDeep(TesseraError):
    """Point too close to the filled Julia set for reliable branch tracking."""


class NewtonDivergence(TesseraError):
    """Newton continuation failed at some level; partial data may be attached."""

    def __init__(self, message: str, partial=None, level=None):
        super().__init__(message)
        self.partial = partial
        self.level = level


class LandingUnresolved(TesseraError):
    """Ray samples did not certify a Cauchy tail down to the requested depth."""


class InvariantViolation(TesseraError):
    """A constructed object failed its own invariants (e.g. linked classes)."""


class NotHyperbolicPCF(TesseraError):
    """Operation requires a postcritically finite hyperbolic polynomial."""


class AngleSearchFailed(TesseraError):
    """No compatible rational angle found within the denominator budget."""


class NotAdmissible(TesseraError):
    """Candidate set failed one of the admissibility conditions."""

    def __init__(self, message: str, bullet: int):
        super().__init__(message)
        self.bullet = bullet


class OnBoundary(TesseraError):
    """Query point is within tolerance of the puzzle graph."""


class SamplingInconclusive(TesseraError):
    """Monte-Carlo sampling produced too few hits at some depth."""


class RefinementFailed(TesseraError):
    """Admissible-set refinement exhausted its transport or search budget."""


class TransportFailure(TesseraError):
    """Some angle class of the base lamination fails to co-land for the map."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class NotPCFFiber(TesseraError):
    """Fiber return map is not postcritically finite within budget."""


class SolveFailure(TesseraError):
    """Per-step polynomial solve (Newton on coefficients) diverged."""


class BranchAmbiguity(TesseraError):
    """Two preimages within the tie tolerance during pull-back."""


class SubstitutionOverflow(TesseraError):
    """Angle substitution exceeded its denominator/degree budget."""


class NoConvergence(TesseraError):
    """Thurston iteration did not reach tolerance; history attached."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history


class VerificationFailed(TesseraError):
    """A tuning verification clause failed; the failing clause is attached."""

    def __init__(self, message: str, clause: str):
        super().__init__(message)
        self.clause = clause
