"""Exception types raised across the package.

Every error derives from :class:`SymSpaceError` so callers (the CLI report
runner in particular) can turn failures into report rows instead of crashes.
"""


class SymSpaceError(Exception):
    """Base class for all package errors."""


# algebra construction and element plumbing
class NotClosed(SymSpaceError):
    """A custom basis is not closed under the matrix commutator."""


class Degenerate(SymSpaceError):
    """The Killing form is singular, so the algebra is not semisimple."""


class CompactType(SymSpaceError):
    """The Killing form is negative definite (compact algebra)."""


class MixedAlgebras(SymSpaceError):
    """Two elements from different algebras were combined."""


# Cartan / Iwasawa data
class ThetaNotAutomorphism(SymSpaceError):
    """X -> -X^T does not preserve the span or the bracket."""


class BThetaNotPositive(SymSpaceError):
    """-B(X, theta Y) fails to be positive definite."""


class SeedNotInP(SymSpaceError):
    """The seed for the abelian subspace is not in the -1 eigenspace."""


class SeedNotExtendable(SymSpaceError):
    """Greedy extension of the abelian subspace stalled."""


class GenericityFailure(SymSpaceError):
    """Random generic elements kept merging distinct roots."""


class NotDecomposable(SymSpaceError):
    """A positive root has no non-negative integer simple-root expansion."""


class H1NotUnit(SymSpaceError):
    """The prescribed first frame vector does not have unit length."""


class H1NotInA(SymSpaceError):
    """The prescribed first frame vector is not in the abelian subspace."""


# geometry on the solvable group
class NotInS(SymSpaceError):
    """An algebra element has a component outside a + n."""


class NilpotencyOverflow(SymSpaceError):
    """The nilpotent part has too many grading steps."""


class NonDifferentiable(SymSpaceError):
    """A finite-difference stencil leaves the admissible region."""


class FlowEscape(SymSpaceError):
    """A flow line left the chart box."""


# quadrature and splitting
class BoundaryMass(SymSpaceError):
    """The integrand does not vanish on the boundary of the box."""


class BadExponent(SymSpaceError):
    """The exponent is not above the dimension."""


class SupportLeak(SymSpaceError):
    """A function or its split pieces reach the edge of the working region."""


# inequality checks
class NoDecay(SymSpaceError):
    """The reconstructed field does not vanish at the box boundary."""


class ZeroDenominator(SymSpaceError):
    """A normalising norm vanished."""


class NotDivFree(SymSpaceError):
    """The field has a non-negligible divergence."""


class NoPositiveRho(SymSpaceError):
    """No direction in a has positive half-sum of roots."""
